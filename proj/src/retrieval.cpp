#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <sstream>

#include <nlohmann/json.hpp>

#include "proxyrank/controls.hpp"
#include "proxyrank/error.hpp"
#include "proxyrank/http_json.hpp"
#include "proxyrank/text.hpp"

namespace proxyrank::controls {

namespace {

std::vector<std::string> token_set(std::string_view s) {
  auto tokens = text::word_tokens(s);
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  return tokens;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::ShapeMismatch, "embedding dimensions differ");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

bool chunk_before(const PassageChunk& a, const PassageChunk& b) {
  const double sa = a.rerank_score.value_or(a.retrieval_score);
  const double sb = b.rerank_score.value_or(b.retrieval_score);
  if (sa != sb) return sa > sb;
  if (a.doc_id != b.doc_id) return a.doc_id < b.doc_id;
  return a.char_start < b.char_start;
}

class HttpEmbeddingService final : public EmbeddingService {
 public:
  explicit HttpEmbeddingService(RemoteSettings s) : settings_(std::move(s)) {}

  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
    http::Endpoint ep{settings_.embed_url, settings_.timeout_ms, settings_.retries, 200, {}};
    auto res = http::post_json(ep, "/embed", {{"texts", texts}});
    if (res.status != 200 || !res.body.contains("vectors")) {
      throw Error(ErrorCode::BackendUnavailable, "embed service returned status " + std::to_string(res.status));
    }
    auto vectors = res.body.at("vectors").get<std::vector<std::vector<double>>>();
    if (vectors.size() != texts.size()) throw Error(ErrorCode::ShapeMismatch, "embed service returned wrong count");
    return vectors;
  }

 private:
  RemoteSettings settings_;
};

class HttpRerankService final : public RerankService {
 public:
  explicit HttpRerankService(RemoteSettings s) : settings_(std::move(s)) {}

  std::vector<double> rerank(const std::string& query, const std::vector<std::string>& passages) override {
    http::Endpoint ep{settings_.rerank_url, settings_.timeout_ms, settings_.retries, 200, {}};
    auto res = http::post_json(ep, "/rerank", {{"query", query}, {"passages", passages}});
    if (res.status != 200 || !res.body.contains("scores")) {
      throw Error(ErrorCode::BackendUnavailable, "rerank service returned status " + std::to_string(res.status));
    }
    auto scores = res.body.at("scores").get<std::vector<double>>();
    if (scores.size() != passages.size()) throw Error(ErrorCode::ShapeMismatch, "rerank service returned wrong count");
    return scores;
  }

 private:
  RemoteSettings settings_;
};

}  // namespace

void RetrievalConfig::validate() const {
  if (chunk_size < 1) throw Error(ErrorCode::InvalidConfig, "chunk_size must be >= 1");
  if (top_docs < 1) throw Error(ErrorCode::InvalidConfig, "top_docs must be >= 1");
  if (top_passages < 1) throw Error(ErrorCode::InvalidConfig, "top_passages must be >= 1");
}

std::shared_ptr<EmbeddingService> make_http_embedding_service(const RemoteSettings& settings) {
  return std::make_shared<HttpEmbeddingService>(settings);
}

std::shared_ptr<RerankService> make_http_rerank_service(const RemoteSettings& settings) {
  return std::make_shared<HttpRerankService>(settings);
}

double lexical_overlap(std::span<const std::string> q, std::span<const std::string> d) {
  if (q.empty() || d.empty()) return 0.0;
  std::size_t common = 0;
  std::size_t i = 0, j = 0;
  while (i < q.size() && j < d.size()) {
    if (q[i] == d[j]) {
      ++common;
      ++i;
      ++j;
    } else if (q[i] < d[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return static_cast<double>(common) / std::sqrt(static_cast<double>(q.size()) * static_cast<double>(d.size()));
}

PassageIndex PassageIndex::build(std::vector<Document> docs, const RetrievalConfig& cfg) {
  if (cfg.backend == RetrievalBackend::LexicalFallback) return build(std::move(docs), cfg, nullptr, nullptr);
  return build(std::move(docs), cfg, make_http_embedding_service(cfg.remote), make_http_rerank_service(cfg.remote));
}

PassageIndex PassageIndex::build(std::vector<Document> docs, const RetrievalConfig& cfg,
                                 std::shared_ptr<EmbeddingService> embedder,
                                 std::shared_ptr<RerankService> reranker) {
  cfg.validate();
  PassageIndex index;
  index.backend_ = cfg.backend;
  index.docs_ = std::move(docs);
  if (cfg.backend == RetrievalBackend::LexicalFallback) {
    for (const auto& d : index.docs_) index.doc_tokens_.push_back(token_set(d.text));
    return index;
  }
  if (!embedder || !reranker) throw Error(ErrorCode::InvalidConfig, "remote backend needs embed and rerank services");
  index.embedder_ = std::move(embedder);
  index.reranker_ = std::move(reranker);

  // Batches are embedded concurrently, at most max_in_flight at a time, and
  // stored by batch position so the index does not depend on arrival order.
  const std::size_t batch = std::max<std::size_t>(1, cfg.remote.embed_batch);
  const std::size_t in_flight = std::max<std::size_t>(1, cfg.remote.max_in_flight);
  index.doc_vectors_.resize(index.docs_.size());
  std::vector<std::pair<std::size_t, std::future<std::vector<std::vector<double>>>>> pending;
  auto drain = [&](std::size_t keep) {
    while (pending.size() > keep) {
      auto [start, fut] = std::move(pending.front());
      pending.erase(pending.begin());
      auto vectors = fut.get();
      for (std::size_t i = 0; i < vectors.size(); ++i) index.doc_vectors_[start + i] = std::move(vectors[i]);
    }
  };
  for (std::size_t start = 0; start < index.docs_.size(); start += batch) {
    std::vector<std::string> texts;
    for (std::size_t i = start; i < std::min(index.docs_.size(), start + batch); ++i) {
      texts.push_back(index.docs_[i].text);
    }
    auto svc = index.embedder_;
    pending.emplace_back(start, std::async(std::launch::async, [svc, texts = std::move(texts)] { return svc->embed(texts); }));
    drain(in_flight - 1);
  }
  drain(0);
  return index;
}

std::vector<PassageChunk> PassageIndex::retrieve(std::string_view query, const RetrievalConfig& cfg) const {
  cfg.validate();
  if (docs_.empty()) throw Error(ErrorCode::EmptyIndex, "the passage index has no documents");

  // Stage 1: document scores.
  std::vector<double> doc_scores(docs_.size());
  const auto query_tokens = token_set(query);
  std::vector<double> query_vector;
  if (backend_ == RetrievalBackend::LexicalFallback) {
    for (std::size_t i = 0; i < docs_.size(); ++i) doc_scores[i] = lexical_overlap(query_tokens, doc_tokens_[i]);
  } else {
    query_vector = embedder_->embed({std::string(query)}).at(0);
    for (std::size_t i = 0; i < docs_.size(); ++i) doc_scores[i] = cosine(query_vector, doc_vectors_[i]);
  }
  std::vector<std::size_t> order(docs_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (doc_scores[a] != doc_scores[b]) return doc_scores[a] > doc_scores[b];
    return docs_[a].doc_id < docs_[b].doc_id;
  });
  order.resize(std::min(order.size(), cfg.top_docs));

  // Stage 2: chunk and rerank.
  std::vector<PassageChunk> chunks;
  for (std::size_t idx : order) {
    for (auto& c : chunk_document(docs_[idx].text, cfg.chunk_size, docs_[idx].doc_id)) {
      c.retrieval_score = doc_scores[idx];
      chunks.push_back(std::move(c));
    }
  }
  if (chunks.empty()) return chunks;
  if (backend_ == RetrievalBackend::LexicalFallback) {
    for (auto& c : chunks) c.rerank_score = lexical_overlap(query_tokens, token_set(c.text));
  } else {
    std::vector<std::string> texts;
    for (const auto& c : chunks) texts.push_back(c.text);
    const auto scores = reranker_->rerank(std::string(query), texts);
    for (std::size_t i = 0; i < chunks.size(); ++i) {
      if (!std::isfinite(scores[i])) throw Error(ErrorCode::NonFinite, "rerank score is not finite");
      chunks[i].rerank_score = scores[i];
    }
  }
  std::sort(chunks.begin(), chunks.end(), chunk_before);
  chunks.resize(std::min(chunks.size(), cfg.top_passages));
  return chunks;
}

std::vector<PassageChunk> retrieve_passages(std::string_view query, const PassageIndex& index,
                                            const RetrievalConfig& cfg) {
  return index.retrieve(query, cfg);
}

std::vector<Document> load_documents(const std::filesystem::path& path) {
  std::vector<Document> docs;
  if (std::filesystem::is_directory(path)) {
    for (const auto& entry : std::filesystem::directory_iterator(path)) {
      if (!entry.is_regular_file()) continue;
      std::ifstream in(entry.path(), std::ios::binary);
      std::ostringstream ss;
      ss << in.rdbuf();
      docs.push_back({entry.path().stem().string(), ss.str()});
    }
  } else {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open corpus " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (text::trim(line).empty()) continue;
      auto rec = nlohmann::json::parse(line, nullptr, false);
      if (rec.is_discarded() || !rec.is_object() || !rec.contains("doc_id") || !rec.contains("text")) {
        throw Error(ErrorCode::MalformedLine, "expected {doc_id, text}", line_no);
      }
      docs.push_back({rec.at("doc_id").get<std::string>(), rec.at("text").get<std::string>()});
    }
  }
  std::sort(docs.begin(), docs.end(), [](const Document& a, const Document& b) { return a.doc_id < b.doc_id; });
  return docs;
}

}  // namespace proxyrank::controls
