#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "proxyrank/types.hpp"

namespace proxyrank::controls {

/// Empty argument slot. Id suffix "#ctl-noarg".
ArgumentVariant make_no_argument(const ProxyInstance& inst);

/// Gold answer with no reasoning: the correct option text for MMCQA, a fixed
/// sentence naming the label otherwise. Id suffix "#ctl-label".
ArgumentVariant make_label_only(const ProxyInstance& inst);

/// Each instance receives the gold argument of another instance. The mapping
/// is a uniformly drawn derangement. Id suffix "#ctl-noise".
std::vector<ArgumentVariant> make_noise(std::span<const ProxyInstance> instances, std::uint64_t seed);

/// Same contract as make_noise, exposed for callers that only need the index
/// mapping: result[i] is the donor of instance i.
std::vector<std::size_t> random_derangement(std::size_t n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// IR passages
// ---------------------------------------------------------------------------

inline constexpr std::string_view kPassageSeparator = " ** ";

struct PassageChunk {
  std::string doc_id;
  // Offsets in code points.
  std::size_t char_start = 0;
  std::size_t char_end = 0;
  std::string text;
  double retrieval_score = 0.0;
  std::optional<double> rerank_score;

  bool operator==(const PassageChunk&) const = default;
};

struct Document {
  std::string doc_id;
  std::string text;
};

/// Consecutive slices of `chunk_size` code points; only the final chunk can
/// be shorter. Concatenating the chunk texts gives back `doc_text`.
std::vector<PassageChunk> chunk_document(std::string_view doc_text, std::size_t chunk_size,
                                         std::string_view doc_id = {});

enum class RetrievalBackend { RemoteEmbedding, LexicalFallback };

struct RemoteSettings {
  std::string embed_url;   // base URL; POST {embed_url}/embed
  std::string rerank_url;  // base URL; POST {rerank_url}/rerank
  int timeout_ms = 30000;
  int retries = 2;
  std::size_t max_in_flight = 4;
  std::size_t embed_batch = 32;
};

struct RetrievalConfig {
  std::size_t chunk_size = 300;
  std::size_t top_docs = 5;
  std::size_t top_passages = 3;
  RetrievalBackend backend = RetrievalBackend::LexicalFallback;
  RemoteSettings remote;

  void validate() const;
};

/// Remote model services behind the embed/rerank wire contract.
class EmbeddingService {
 public:
  virtual ~EmbeddingService() = default;
  virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
};

class RerankService {
 public:
  virtual ~RerankService() = default;
  virtual std::vector<double> rerank(const std::string& query, const std::vector<std::string>& passages) = 0;
};

std::shared_ptr<EmbeddingService> make_http_embedding_service(const RemoteSettings& settings);
std::shared_ptr<RerankService> make_http_rerank_service(const RemoteSettings& settings);

/// Read-only document index. Built once; safe for concurrent queries.
class PassageIndex {
 public:
  static PassageIndex build(std::vector<Document> docs, const RetrievalConfig& cfg);
  static PassageIndex build(std::vector<Document> docs, const RetrievalConfig& cfg,
                            std::shared_ptr<EmbeddingService> embedder,
                            std::shared_ptr<RerankService> reranker);

  const std::vector<Document>& documents() const noexcept { return docs_; }
  RetrievalBackend backend() const noexcept { return backend_; }

  std::vector<PassageChunk> retrieve(std::string_view query, const RetrievalConfig& cfg) const;

 private:
  PassageIndex() = default;

  std::vector<Document> docs_;
  RetrievalBackend backend_ = RetrievalBackend::LexicalFallback;
  std::vector<std::vector<std::string>> doc_tokens_;  // sorted unique, lexical only
  std::vector<std::vector<double>> doc_vectors_;      // remote only
  std::shared_ptr<EmbeddingService> embedder_;
  std::shared_ptr<RerankService> reranker_;
};

/// Loads a directory of plain-text files (doc_id = file stem) or a JSONL file
/// of {doc_id, text}. Documents are ordered by doc_id.
std::vector<Document> load_documents(const std::filesystem::path& path);

/// Two-stage retrieval: top_docs documents by backend score, then the
/// top_passages chunks of those documents by rerank score, descending, ties
/// by (doc_id, char_start).
std::vector<PassageChunk> retrieve_passages(std::string_view query, const PassageIndex& index,
                                            const RetrievalConfig& cfg);

/// |q ∩ d| / sqrt(|q| |d|) over lowercased word-token sets.
double lexical_overlap(std::span<const std::string> query_tokens, std::span<const std::string> doc_tokens);

/// Query text per task: case + question, claim, or statement.
std::string retrieval_query(const ProxyInstance& inst);

/// Passages joined by " ** ". Id suffix "#ctl-ir".
ArgumentVariant make_ir_variant(const ProxyInstance& inst, std::span<const PassageChunk> passages);

}  // namespace proxyrank::controls
