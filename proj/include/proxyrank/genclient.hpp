#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "proxyrank/http_json.hpp"
#include "proxyrank/types.hpp"

namespace proxyrank::gen {

struct GenerationParams {
  int max_new_tokens = 256;
  double temperature = 0.9;
  double top_p = 0.85;
  bool sampling = true;
  std::optional<std::uint64_t> seed;

  void validate() const;
};

GenerationParams load_params(const std::filesystem::path& path);
GenerationParams params_from_json(const nlohmann::json& j);

/// One-shot chat prompt. The rendered system message is
/// `system_text + "\nExample:\n" + exemplar`; only `user_text` carries
/// placeholders.
struct PromptTemplate {
  TaskKind task = TaskKind::Mmcqa;
  std::string system_text;
  std::string exemplar;
  std::string user_text;

  /// Checks the placeholder set against the task's required set.
  void validate() const;
};

/// Required placeholder names per task.
std::set<std::string> required_placeholders(TaskKind task);

/// The one-shot templates used to produce the reference arguments.
PromptTemplate default_template(TaskKind task);
PromptTemplate load_template(const std::filesystem::path& path);

struct RenderedPrompt {
  std::string system;
  std::string user;

  bool operator==(const RenderedPrompt&) const = default;
};

/// Byte-deterministic rendering. MMCQA answer lines whose option does not
/// exist (4-option questions) are omitted; any other unfillable placeholder,
/// or a task mismatch, throws PLACEHOLDER_MISSING.
RenderedPrompt build_prompt(const PromptTemplate& tmpl, const ProxyInstance& inst);

struct ChatRequest {
  std::string model;
  RenderedPrompt prompt;
  GenerationParams params;

  /// Body of POST {base_url}/chat.
  nlohmann::json to_wire() const;
  /// SHA-256 of the wire body; identical requests share it.
  std::string fingerprint() const;
};

class ChatEndpoint {
 public:
  virtual ~ChatEndpoint() = default;
  /// Returns the completion text. Throws Error with RATE_LIMITED,
  /// ENDPOINT_ERROR or BACKEND_UNAVAILABLE.
  virtual std::string complete(const ChatRequest& request) = 0;
};

/// HTTP adapter for the chat wire contract. The API key, when set, is read
/// from PROXYRANK_API_KEY and sent as a bearer token.
class HttpChatEndpoint final : public ChatEndpoint {
 public:
  explicit HttpChatEndpoint(http::Endpoint endpoint);
  std::string complete(const ChatRequest& request) override;

 private:
  http::Endpoint endpoint_;
};

struct Provider {
  std::string provider_id;
  std::string model_name;
  std::shared_ptr<ChatEndpoint> endpoint;
};

struct GeneratedArgument {
  std::string instance_id;
  std::string provider_id;
  std::string model_name;
  std::string text;
  std::string request_fingerprint;
  std::string created_at;
  std::string batch;
  // NLI only: extracted segments that do not occur verbatim in the section.
  bool flagged = false;
  std::vector<std::string> unverified_segments;
};

/// Persisted form; created_at lives in the sidecar metadata file instead.
nlohmann::json to_json(const GeneratedArgument& arg);
GeneratedArgument generated_from_json(const nlohmann::json& j);
std::vector<GeneratedArgument> read_generated(const std::filesystem::path& path);

struct GenerationFailure {
  std::string instance_id;
  std::string provider_id;
  std::string code;
  std::string message;
};

struct GenerationOptions {
  std::filesystem::path output;
  std::size_t max_in_flight = 4;
  // Attempts after the first for RATE_LIMITED / unavailable endpoints.
  int max_retries = 3;
  int backoff_ms = 500;
  bool resume = false;
  std::string batch_id;
};

struct GenerationResult {
  std::vector<GeneratedArgument> records;  // sorted by (instance_id, provider_id)
  std::vector<GenerationFailure> failed;
};

/// One argument per (instance, provider). Successful records are journaled as
/// they complete (`<output>.partial`); on completion the output is written
/// sorted by (instance_id, provider_id), failures go to `<output>.failed.jsonl`
/// and timestamps to `<output>.meta.jsonl`. With `resume`, pairs already
/// present in the output or journal are skipped.
GenerationResult generate(std::span<const ProxyInstance> instances, const PromptTemplate& tmpl,
                          const GenerationParams& params, std::span<const Provider> providers,
                          const GenerationOptions& options);

/// Segments of an extraction (split on "**") not found verbatim in `source`.
std::vector<std::string> unverified_segments(const std::string& extraction, const std::string& source);

}  // namespace proxyrank::gen
