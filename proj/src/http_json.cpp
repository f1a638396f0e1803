#include "proxyrank/http_json.hpp"

#include <httplib.h>

#include <chrono>
#include <regex>
#include <thread>

#include "proxyrank/error.hpp"

namespace proxyrank::http {

namespace {

struct ParsedUrl {
  std::string scheme_host_port;
  std::string prefix;
};

ParsedUrl parse_url(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) {
    throw Error(ErrorCode::InvalidConfig, "invalid endpoint URL '" + url + "'");
  }
  std::string prefix = m[2].matched ? m[2].str() : std::string();
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {m[1].str(), prefix};
}

std::unique_ptr<httplib::Client> make_client(const Endpoint& ep, const ParsedUrl& url) {
  auto client = std::make_unique<httplib::Client>(url.scheme_host_port);
  const auto sec = ep.timeout_ms / 1000;
  const auto usec = (ep.timeout_ms % 1000) * 1000;
  client->set_connection_timeout(sec, usec);
  client->set_read_timeout(sec, usec);
  client->set_write_timeout(sec, usec);
  httplib::Headers headers;
  for (const auto& [k, v] : ep.headers) headers.emplace(k, v);
  client->set_default_headers(headers);
  return client;
}

bool retryable(int status) { return status == 429 || status >= 500; }

}  // namespace

Response post_json(const Endpoint& endpoint, const std::string& path, const nlohmann::json& body) {
  const auto url = parse_url(endpoint.base_url);
  auto client = make_client(endpoint, url);
  const std::string payload = body.dump();
  std::string last_error;
  for (int attempt = 0; attempt <= endpoint.retries; ++attempt) {
    if (attempt > 0 && endpoint.backoff_ms > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(endpoint.backoff_ms * attempt));
    }
    auto res = client->Post(url.prefix + path, payload, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    Response out;
    out.status = res->status;
    out.body = nlohmann::json::parse(res->body, nullptr, false);
    if (retryable(res->status) && attempt < endpoint.retries) continue;
    return out;
  }
  throw Error(ErrorCode::BackendUnavailable, endpoint.base_url + path + ": " + last_error);
}

int get_status(const Endpoint& endpoint, const std::string& path) {
  const auto url = parse_url(endpoint.base_url);
  auto client = make_client(endpoint, url);
  auto res = client->Get(url.prefix + path);
  return res ? res->status : 0;
}

}  // namespace proxyrank::http
