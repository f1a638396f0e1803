#pragma once

#include <map>
#include <string>

#include <nlohmann/json.hpp>

namespace proxyrank::http {

struct Endpoint {
  // scheme://host[:port][/prefix]
  std::string base_url;
  int timeout_ms = 30000;
  // Extra attempts after the first one, for connection failures, 429 and 5xx.
  int retries = 2;
  int backoff_ms = 200;
  std::map<std::string, std::string> headers;
};

struct Response {
  int status = 0;
  nlohmann::json body;
};

/// POSTs a JSON body to base_url + path. Transport failures after all retries
/// throw Error(BACKEND_UNAVAILABLE); HTTP error statuses are returned to the
/// caller once retries are exhausted (429 and 5xx are retried).
Response post_json(const Endpoint& endpoint, const std::string& path, const nlohmann::json& body);

/// GET returning the status code; 0 when the server is unreachable.
int get_status(const Endpoint& endpoint, const std::string& path);

}  // namespace proxyrank::http
