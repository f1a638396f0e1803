#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "proxyrank/error.hpp"
#include "proxyrank/http_json.hpp"
#include "proxyrank/types.hpp"

namespace proxyrank::scorer {

enum class EvaluatorKind { Baseline, ExpertTrained, LlmTrained };

std::string_view to_token(EvaluatorKind v) noexcept;
std::optional<EvaluatorKind> parse_evaluator_kind(std::string_view token) noexcept;

enum class ScoreSemantics { GoldLabelProbability, Correctness01 };

std::string_view to_token(ScoreSemantics v) noexcept;
std::optional<ScoreSemantics> parse_semantics(std::string_view token) noexcept;

// ---------------------------------------------------------------------------
// Input assembly
// ---------------------------------------------------------------------------

inline constexpr std::string_view kSegmentSeparator = " </s> ";

struct Segment {
  std::string name;
  std::string text;

  bool operator==(const Segment&) const = default;
};

struct AssembledInput {
  std::string instance_id;
  std::vector<Segment> segments;
  std::vector<std::string> label_space;
  std::string gold_label;

  /// Segment texts joined with kSegmentSeparator, for flat-text backends.
  std::string flat_text() const;
  nlohmann::json to_wire() const;

  bool operator==(const AssembledInput&) const = default;
};

struct AssembleOptions {
  // Misinformation instances scored with the two-label evidence subset.
  bool evidence_subset = false;
  // Score the baseline with an argument attached, as in the control-case
  // tables. Off by default: the baseline input has no argument slot.
  bool allow_baseline_argument = false;
};

/// Builds the evaluator input. Segment layout:
///   MMCQA   question, clinical_case, possible_answers[, argument]
///   misinfo question (the claim)[, argument]
///   NLI     statement, argument | full_section
/// The argument segment is named after its source: gold_argumentation,
/// llm_argumentation or control_argumentation (…_evidences for NLI).
/// Throws ARGUMENT_REQUIRED / ARGUMENT_FORBIDDEN.
AssembledInput assemble_input(const ProxyInstance& inst, const ArgumentVariant* argument, EvaluatorKind kind,
                              const AssembleOptions& options = {});

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

struct ScoreRequest {
  TaskKind task = TaskKind::Mmcqa;
  EvaluatorKind evaluator = EvaluatorKind::ExpertTrained;
  // Not sent on the wire; lets table-driven backends key their answers.
  std::string system_id;
  std::vector<AssembledInput> items;

  /// {task, evaluator, items:[{instance_id, segments:[{name,text}], label_space, gold_label}]}
  nlohmann::json to_wire() const;
};

struct ItemProbs {
  std::string instance_id;
  std::map<std::string, double> probs;
};

class ScorerBackend {
 public:
  virtual ~ScorerBackend() = default;
  virtual bool healthy() = 0;
  /// Results may come back in any order.
  virtual std::vector<ItemProbs> score(const ScoreRequest& request) = 0;
};

/// POST {base}/score, GET {base}/health. Large requests are split into
/// batches sent concurrently.
class HttpScorerBackend final : public ScorerBackend {
 public:
  explicit HttpScorerBackend(http::Endpoint endpoint, std::size_t batch_size = 64, std::size_t max_in_flight = 4);
  bool healthy() override;
  std::vector<ItemProbs> score(const ScoreRequest& request) override;

 private:
  http::Endpoint endpoint_;
  std::size_t batch_size_;
  std::size_t max_in_flight_;
};

/// Deterministic mock answering from a table keyed by (instance_id,
/// system_id). An entry either gives the gold-label probability `p`, spread
/// evenly over the other labels, or a full distribution.
class TableScorerBackend final : public ScorerBackend {
 public:
  struct Entry {
    std::optional<double> p;
    std::map<std::string, double> probs;
  };

  TableScorerBackend() = default;
  void set(const std::string& instance_id, const std::string& system_id, double gold_probability);
  void set_distribution(const std::string& instance_id, const std::string& system_id,
                        std::map<std::string, double> probs);

  /// JSONL {instance_id, system_id, p} or {instance_id, system_id, probs}.
  static TableScorerBackend load(const std::filesystem::path& path);

  bool healthy() override { return true; }
  std::vector<ItemProbs> score(const ScoreRequest& request) override;

 private:
  std::map<std::pair<std::string, std::string>, Entry> table_;
};

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

struct ItemRejection {
  std::string instance_id;
  ErrorCode code = ErrorCode::BadDistribution;
  std::string message;
};

/// One system's scores, in input order. Rejected items are left out of
/// `instance_ids` / `values` / `predictions` and listed in `rejected`.
struct ScoreColumn {
  std::string system_id;
  ScoreSemantics semantics = ScoreSemantics::GoldLabelProbability;
  std::vector<std::string> instance_ids;
  std::vector<double> values;
  std::vector<std::string> predictions;
  std::vector<std::string> gold_labels;
  std::vector<ItemRejection> rejected;

  /// Throws the first rejection, if any.
  void require_complete() const;
};

/// Checks one distribution against its label space. Returns an error message
/// or nullopt.
std::optional<std::string> distribution_problem(const std::map<std::string, double>& probs,
                                                std::span<const std::string> label_space);

/// Scores one system. Throws BACKEND_UNAVAILABLE when the health check fails
/// and SHAPE_MISMATCH when the backend answers for the wrong set of items.
ScoreColumn score_batch(const ScoreRequest& request, ScorerBackend& backend,
                        ScoreSemantics semantics = ScoreSemantics::GoldLabelProbability);

/// Mean of the members' distributions per item, then reduced like
/// score_batch. An item rejected by any member is rejected.
ScoreColumn score_ensemble(const ScoreRequest& request, std::span<ScorerBackend* const> members,
                           ScoreSemantics semantics = ScoreSemantics::GoldLabelProbability);

/// Mean of {0,1} values × 100. Throws EMPTY.
double accuracy(std::span<const double> correctness);

/// Micro-averaged F1 × 100 over single-label predictions. Throws EMPTY or
/// SHAPE_MISMATCH.
double micro_f1(std::span<const std::string> predictions, std::span<const std::string> gold);

/// Rounds half away from zero to two decimals, as reported.
double round2(double v);

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

struct ScoreRecord {
  std::string instance_id;
  std::string system_id;
  std::string evaluator;
  double score = 0.0;
  ScoreSemantics semantics = ScoreSemantics::GoldLabelProbability;

  bool operator==(const ScoreRecord&) const = default;
};

nlohmann::json to_json(const ScoreRecord& r);
std::vector<ScoreRecord> read_scores(const std::filesystem::path& path);
std::vector<ScoreRecord> parse_scores(std::istream& in);
void write_scores(const std::filesystem::path& path, std::span<const ScoreRecord> records);
std::vector<ScoreRecord> to_records(const ScoreColumn& column, std::string_view evaluator);

struct ScoreMatrix {
  std::vector<std::string> system_ids;
  std::vector<std::string> instance_ids;
  // Row-major: values[i * system_ids.size() + j].
  std::vector<double> values;
  ScoreSemantics semantics = ScoreSemantics::GoldLabelProbability;

  double at(std::size_t instance, std::size_t system) const { return values[instance * system_ids.size() + system]; }
  std::vector<double> row(std::size_t instance) const;
  std::vector<double> column(std::size_t system) const;
  /// Throws SHAPE_MISMATCH, NON_FINITE or INVALID_FIELD (outside [0,1]).
  void validate() const;
};

/// Matrix for one evaluator, systems and instances in lexicographic order.
/// Every (instance, system) cell must be present exactly once.
ScoreMatrix matrix_from_records(std::span<const ScoreRecord> records, std::string_view evaluator);

/// Evaluator names present in the records, sorted.
std::vector<std::string> evaluators_in(std::span<const ScoreRecord> records);

}  // namespace proxyrank::scorer
