#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "proxyrank/types.hpp"

namespace fixtures {

inline std::filesystem::path data(const std::string& name) { return std::filesystem::path(PROXYRANK_TEST_DATA) / name; }

inline proxyrank::MmcqaInstance mmcqa(const std::string& id, std::size_t k = 5, std::size_t correct = 0) {
  proxyrank::MmcqaInstance q;
  q.id = id;
  q.clinical_case = "A 60-year-old patient presents with fatigue (" + id + ").";
  q.question = "What is the most appropriate next step?";
  for (std::size_t i = 0; i < k; ++i) q.options.push_back("Option text " + std::to_string(i + 1) + " for " + id + ".");
  q.correct_index = correct;
  q.gold_explanation = "Explanation for " + id + ".";
  return q;
}

inline proxyrank::MisinfoInstance misinfo(const std::string& id, proxyrank::MisinfoLabel label) {
  return {id, "Does remedy " + id + " work?", label, "Studies on " + id + " are summarized here.", std::nullopt};
}

inline proxyrank::NliInstance nli(const std::string& id, proxyrank::NliLabel label) {
  proxyrank::NliInstance n;
  n.id = id;
  n.statement = "Cohort 1 had more adverse events in " + id + ".";
  n.full_section = "Adverse Events 1: ** Total: 10/100 ** Adverse Events 2: ** Total: 5/100";
  n.label = label;
  n.gold_evidence = "Adverse Events 1: ** Total: 10/100";
  return n;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag) {
  static std::mt19937_64 gen(std::random_device{}());
  auto p = std::filesystem::temp_directory_path() / ("proxyrank-" + tag + "-" + std::to_string(gen()));
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace fixtures
