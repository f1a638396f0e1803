#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "proxyrank/scorer.hpp"
#include "proxyrank/stats.hpp"
#include "proxyrank/types.hpp"

namespace proxyrank::report {

struct EvaluatorInput {
  std::string evaluator;
  scorer::ScoreMatrix matrix;
};

struct EvaluatorReport {
  std::string evaluator;
  std::optional<TaskKind> task;
  scorer::ScoreSemantics semantics = scorer::ScoreSemantics::GoldLabelProbability;
  // Mean score × 100 per system (accuracy under 0/1 semantics).
  std::map<std::string, double> aggregate_scores;
  // Systems by descending aggregate score.
  std::vector<std::string> aggregate_order;
  std::vector<stats::SystemRank> mean_ranks;
  stats::FriedmanResult friedman;
  // Highest aggregate score.
  std::string best_system;
  // Against the human mean ranks, over the systems the annotators graded.
  std::optional<stats::Alignment> alignment;
};

struct HumanSummary {
  std::size_t n_sheets = 0;
  std::vector<stats::SystemRank> mean_ranks;
  std::optional<stats::FriedmanResult> friedman;
  std::optional<stats::AlphaResult> ita;
};

struct Report {
  // Score files do not record the task; it is given by the caller.
  std::optional<TaskKind> task;
  std::vector<EvaluatorReport> evaluators;
  std::optional<HumanSummary> human;
};

struct ReportOptions {
  double alpha = 0.05;
  stats::Direction direction = stats::Direction::HigherBetter;
  stats::FriedmanOptions friedman;
};

/// Systems by descending score; equal scores are ordered by system id.
std::vector<std::string> order_by_score(const std::map<std::string, double>& scores);

/// Rank table of the human grades: one block per (annotator, instance) in
/// which every graded system of the sheets has a grade. Lower grade is better.
stats::RankTable human_rank_table(std::span<const stats::HumanGradeSheet> sheets);

/// Throws EMPTY without evaluators; other errors propagate.
Report build_report(std::optional<TaskKind> task, std::span<const EvaluatorInput> evaluators,
                    std::span<const stats::HumanGradeSheet> sheets = {}, const ReportOptions& options = {});

nlohmann::json to_json(const Report& report);
/// Evaluator rows × system columns; each cell shows mean rank and aggregate.
std::string render_text(const Report& report);

/// True when any evaluator's Friedman test is degenerate.
bool has_degenerate_statistics(const Report& report);

}  // namespace proxyrank::report
