#include <iostream>
#include <string>
#include <vector>

#include "proxyrank/pipeline.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return proxyrank::pipeline::run_cli(args, std::cout, std::cerr);
}
