#pragma once

// Minimal in-process JSON HTTP server for tests. Handlers run on the server's
// worker threads.

#include <functional>
#include <memory>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

namespace testing_support {

struct Reply {
  int status = 200;
  nlohmann::json body = nlohmann::json::object();
};

class MockServer {
 public:
  using PostHandler = std::function<Reply(const nlohmann::json& body)>;
  using GetHandler = std::function<Reply()>;

  MockServer();
  ~MockServer();
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  void post(const std::string& path, PostHandler handler);
  void get(const std::string& path, GetHandler handler);
  /// Binds to a free port and serves on a background thread.
  void start();
  void stop();
  std::string url() const;
  int port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// GET/POST helpers against a base URL; the body of a non-JSON reply is null.
Reply http_get(const std::string& base_url, const std::string& path);
Reply http_post(const std::string& base_url, const std::string& path, const nlohmann::json& body);

/// A base URL nothing is listening on.
std::string unreachable_url();

}  // namespace testing_support
