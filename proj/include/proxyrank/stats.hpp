#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace proxyrank::stats {

enum class Direction { HigherBetter, LowerBetter };

/// "higher-better" / "lower-better".
std::string_view to_token(Direction d) noexcept;
std::optional<Direction> parse_direction(std::string_view token) noexcept;

/// Rank 1 is best. Tied values share the mean of the positions they occupy.
/// Throws NON_FINITE.
std::vector<double> fractional_ranks(std::span<const double> scores, Direction direction);

struct RankTable {
  std::vector<std::string> instance_ids;
  std::vector<std::string> system_ids;
  // Row-major, one row per block.
  std::vector<double> ranks;

  double at(std::size_t row, std::size_t system) const { return ranks[row * system_ids.size() + system]; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(ranks).subspan(r * system_ids.size(), system_ids.size());
  }
  /// Each row must be a fractional ranking of 1..k.
  void validate() const;
};

/// Ranks every row of a row-major score matrix.
RankTable rank_table(std::vector<std::string> instance_ids, std::vector<std::string> system_ids,
                     std::span<const double> values, Direction direction);

struct SystemRank {
  std::string system_id;
  double mean_rank = 0.0;

  bool operator==(const SystemRank&) const = default;
};

/// Column means, best first; equal means are ordered by system id.
/// Throws EMPTY.
std::vector<SystemRank> mean_ranks(const RankTable& table);

// ---------------------------------------------------------------------------
// Friedman test
// ---------------------------------------------------------------------------

enum class PValueMethod {
  // Exact within-block permutation distribution when it is small enough to
  // enumerate, chi-square approximation otherwise.
  Auto,
  ChiSquare,
  Exact,
};

std::string_view to_token(PValueMethod m) noexcept;

struct FriedmanOptions {
  PValueMethod method = PValueMethod::Auto;
  // Budget of state updates for the exact enumeration; past it the
  // chi-square approximation is used.
  std::size_t max_exact_work = 500000;
};

struct FriedmanResult {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  // Upper tail of chi-square(df), always computed.
  double p_chi_square = 1.0;
  PValueMethod method = PValueMethod::ChiSquare;
  double tie_correction = 1.0;
  std::size_t n_blocks = 0;
  std::size_t k_systems = 0;
  bool significant = false;
  // Every block fully tied: statistic 0, p 1.
  bool degenerate = false;
};

/// Tie-corrected Friedman statistic
///   [12/(nk(k+1)) Σ R_j² − 3n(k+1)] / C,  C = 1 − ΣΣ(t³−t) / (nk(k²−1)).
/// Throws TOO_SMALL for n < 2 or k < 2.
FriedmanResult friedman_test(const RankTable& table, double alpha_level, const FriedmanOptions& options = {});

/// Exact within-block permutation p-value, or nullopt when the enumeration
/// would take more than `max_work` state updates.
std::optional<double> friedman_exact_p(const RankTable& table, std::size_t max_work);

/// Upper tail of the chi-square distribution.
double chi_square_sf(double x, double df);
/// Regularized upper incomplete gamma Q(a, x).
double regularized_gamma_q(double a, double x);

// ---------------------------------------------------------------------------
// Krippendorff's alpha
// ---------------------------------------------------------------------------

enum class AlphaMetric { Nominal, Ordinal, Interval };

std::string_view to_token(AlphaMetric m) noexcept;
std::optional<AlphaMetric> parse_metric(std::string_view token) noexcept;

struct AlphaResult {
  double alpha = 0.0;
  AlphaMetric metric = AlphaMetric::Ordinal;
  std::size_t n_units = 0;
  std::size_t n_raters = 0;
  std::size_t n_pairable_values = 0;
  double observed_disagreement = 0.0;
  double expected_disagreement = 0.0;
};

/// Grades 1–5 keyed by (instance_id, system_id); 1 is best, 5 marks a clearly
/// incorrect argument. Ties are allowed.
struct HumanGradeSheet {
  std::string annotator_id;
  std::map<std::pair<std::string, std::string>, int> grades;

  bool operator==(const HumanGradeSheet&) const = default;
};

/// {annotator_id, grades:[{instance_id, system_id, grade}]}
nlohmann::json to_json(const HumanGradeSheet& sheet);
HumanGradeSheet sheet_from_json(const nlohmann::json& j);
/// One sheet per line. Throws GRADE_OUT_OF_RANGE for grades outside 1–5.
std::vector<HumanGradeSheet> read_sheets(const std::filesystem::path& path);
void write_sheets(const std::filesystem::path& path, std::span<const HumanGradeSheet> sheets);

/// Units are (instance_id, system_id) cells; each sheet is one rater.
/// Throws SINGLE_RATER or UNDEFINED_EXPECTED_DISAGREEMENT.
AlphaResult krippendorff_alpha(std::span<const HumanGradeSheet> sheets, AlphaMetric metric = AlphaMetric::Ordinal);

/// Reliability data as units × raters; nullopt marks a missing value.
AlphaResult krippendorff_alpha(const std::vector<std::vector<std::optional<double>>>& units, AlphaMetric metric);

// ---------------------------------------------------------------------------
// Comparing orderings
// ---------------------------------------------------------------------------

struct Alignment {
  double kendall_tau = 0.0;
  double spearman_rho = 0.0;
  bool top1_match = false;
};

/// Kendall tau-b and Spearman rho between two mean-rank vectors over the same
/// systems; a coefficient whose denominator vanishes (one side all tied) is 0.
/// Throws MISMATCHED_SYSTEMS.
Alignment alignment(std::span<const SystemRank> a, std::span<const SystemRank> b);

struct PairwisePreference {
  std::string instance_id;
  std::string system_a;
  std::string system_b;
  // +1: a preferred, -1: b preferred, 0: tie.
  int outcome = 0;
};

/// Wins / comparisons per system, ties counting one half. Throws
/// NO_COMPARISONS.
std::map<std::string, double> win_rate(std::span<const PairwisePreference> preferences);

/// All unordered system pairs of every row of a row-major score matrix.
std::vector<PairwisePreference> pairwise_from_scores(std::span<const std::string> instance_ids,
                                                     std::span<const std::string> system_ids,
                                                     std::span<const double> values, Direction direction);

}  // namespace proxyrank::stats
