#include "proxyrank/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <set>

#include "proxyrank/error.hpp"

namespace proxyrank::stats {

namespace {

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

// Ranks doubled so that half ranks become integers.
std::vector<int> doubled(std::span<const double> row) {
  std::vector<int> out;
  for (double r : row) out.push_back(static_cast<int>(std::lround(2.0 * r)));
  return out;
}

std::int64_t sum_of_squares(const std::vector<int>& v) {
  std::int64_t s = 0;
  for (int x : v) s += static_cast<std::int64_t>(x) * x;
  return s;
}

}  // namespace

std::string_view to_token(Direction d) noexcept {
  return d == Direction::HigherBetter ? "higher-better" : "lower-better";
}

std::optional<Direction> parse_direction(std::string_view token) noexcept {
  if (token == "higher-better") return Direction::HigherBetter;
  if (token == "lower-better") return Direction::LowerBetter;
  return std::nullopt;
}

std::vector<double> fractional_ranks(std::span<const double> scores, Direction direction) {
  for (double s : scores) {
    if (!std::isfinite(s)) throw Error(ErrorCode::NonFinite, "cannot rank a non-finite score");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return direction == Direction::HigherBetter ? scores[a] > scores[b] : scores[a] < scores[b];
  });
  std::vector<double> ranks(scores.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    // Positions i..j (0-based) share the mean of ranks i+1..j+1.
    const double shared = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = shared;
    i = j + 1;
  }
  return ranks;
}

void RankTable::validate() const {
  const auto k = system_ids.size();
  if (ranks.size() != k * instance_ids.size()) throw Error(ErrorCode::ShapeMismatch, "rank table size mismatch");
  const double expected = static_cast<double>(k) * static_cast<double>(k + 1) / 2.0;
  for (std::size_t r = 0; r < instance_ids.size(); ++r) {
    double sum = 0.0;
    for (double v : row(r)) {
      if (v < 1.0 || v > static_cast<double>(k)) throw Error(ErrorCode::InvalidField, "rank outside [1, k]");
      sum += v;
    }
    if (std::abs(sum - expected) > 1e-9) throw Error(ErrorCode::InvalidField, "row is not a fractional ranking");
  }
}

RankTable rank_table(std::vector<std::string> instance_ids, std::vector<std::string> system_ids,
                     std::span<const double> values, Direction direction) {
  const auto k = system_ids.size();
  if (values.size() != k * instance_ids.size()) throw Error(ErrorCode::ShapeMismatch, "score matrix size mismatch");
  RankTable t;
  t.instance_ids = std::move(instance_ids);
  t.system_ids = std::move(system_ids);
  t.ranks.reserve(values.size());
  for (std::size_t r = 0; r < t.instance_ids.size(); ++r) {
    auto ranks = fractional_ranks(values.subspan(r * k, k), direction);
    t.ranks.insert(t.ranks.end(), ranks.begin(), ranks.end());
  }
  return t;
}

std::vector<SystemRank> mean_ranks(const RankTable& table) {
  if (table.instance_ids.empty() || table.system_ids.empty()) throw Error(ErrorCode::Empty, "empty rank table");
  std::vector<SystemRank> out;
  const double n = static_cast<double>(table.instance_ids.size());
  for (std::size_t j = 0; j < table.system_ids.size(); ++j) {
    double sum = 0.0;
    for (std::size_t r = 0; r < table.instance_ids.size(); ++r) sum += table.at(r, j);
    out.push_back({table.system_ids[j], sum / n});
  }
  std::sort(out.begin(), out.end(), [](const SystemRank& a, const SystemRank& b) {
    if (a.mean_rank != b.mean_rank) return a.mean_rank < b.mean_rank;
    return a.system_id < b.system_id;
  });
  return out;
}

std::string_view to_token(PValueMethod m) noexcept {
  switch (m) {
    case PValueMethod::Auto: return "auto";
    case PValueMethod::ChiSquare: return "chi_square";
    case PValueMethod::Exact: return "exact_permutation";
  }
  return "";
}

double regularized_gamma_q(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0)) throw Error(ErrorCode::InvalidField, "gamma arguments out of domain");
  if (x == 0.0) return 1.0;
  const double log_prefix = -x + a * std::log(x) - std::lgamma(a);
  constexpr double eps = 1e-16;
  if (x < a + 1.0) {
    // Series for P(a, x).
    double ap = a, term = 1.0 / a, sum = term;
    for (int i = 0; i < 10000; ++i) {
      ap += 1.0;
      term *= x / ap;
      sum += term;
      if (std::abs(term) < std::abs(sum) * eps) break;
    }
    return std::clamp(1.0 - sum * std::exp(log_prefix), 0.0, 1.0);
  }
  // Continued fraction for Q(a, x), modified Lentz.
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) break;
  }
  return std::clamp(std::exp(log_prefix) * h, 0.0, 1.0);
}

double chi_square_sf(double x, double df) {
  if (!(df > 0.0)) throw Error(ErrorCode::InvalidField, "degrees of freedom must be positive");
  if (x <= 0.0) return 1.0;
  return regularized_gamma_q(df / 2.0, x / 2.0);
}

std::optional<double> friedman_exact_p(const RankTable& table, std::size_t max_work) {
  const std::size_t k = table.system_ids.size();
  const std::size_t n = table.instance_ids.size();
  // Under the null every distinct arrangement of a block's ranks is equally
  // likely. The statistic is symmetric in the columns, so states are kept as
  // sorted vectors of doubled column rank sums.
  std::map<std::vector<int>, double> states{{std::vector<int>(k, 0), 1.0}};
  std::vector<int> observed(k, 0);
  std::size_t work = 0;
  for (std::size_t r = 0; r < n; ++r) {
    auto row = doubled(table.row(r));
    for (std::size_t j = 0; j < k; ++j) observed[j] += row[j];
    std::sort(row.begin(), row.end());
    // Distinct arrangements k! / Π t!, checked against the budget before
    // they are enumerated.
    double arrangements = 1.0;
    for (std::size_t j = 0, run = 0; j < k; ++j) {
      run = (j > 0 && row[j] == row[j - 1]) ? run + 1 : 1;
      arrangements *= static_cast<double>(j + 1) / static_cast<double>(run);
    }
    if (static_cast<double>(work) + static_cast<double>(states.size()) * arrangements > static_cast<double>(max_work)) {
      return std::nullopt;
    }
    std::vector<std::vector<int>> perms;
    do {
      perms.push_back(row);
    } while (std::next_permutation(row.begin(), row.end()));
    work += states.size() * perms.size();
    const double w = 1.0 / static_cast<double>(perms.size());
    std::map<std::vector<int>, double> next;
    std::vector<int> t(k);
    for (const auto& [s, q] : states) {
      for (const auto& p : perms) {
        for (std::size_t j = 0; j < k; ++j) t[j] = s[j] + p[j];
        std::sort(t.begin(), t.end());
        next[t] += q * w;
      }
    }
    states = std::move(next);
  }
  const auto threshold = sum_of_squares(observed);
  double p = 0.0;
  for (const auto& [s, q] : states) {
    if (sum_of_squares(s) >= threshold) p += q;
  }
  return std::clamp(p, 0.0, 1.0);
}

FriedmanResult friedman_test(const RankTable& table, double alpha_level, const FriedmanOptions& options) {
  const std::size_t n = table.instance_ids.size();
  const std::size_t k = table.system_ids.size();
  if (n < 2 || k < 2) throw Error(ErrorCode::TooSmall, "the Friedman test needs at least 2 blocks and 2 systems");
  if (!(alpha_level > 0.0 && alpha_level < 1.0)) throw Error(ErrorCode::InvalidConfig, "alpha must be in (0, 1)");
  table.validate();

  FriedmanResult res;
  res.n_blocks = n;
  res.k_systems = k;
  res.df = static_cast<int>(k) - 1;

  const double nd = static_cast<double>(n), kd = static_cast<double>(k);
  std::vector<double> rank_sums(k, 0.0);
  double tie_term = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    std::map<double, int> groups;
    for (std::size_t j = 0; j < k; ++j) {
      rank_sums[j] += table.at(r, j);
      ++groups[table.at(r, j)];
    }
    for (const auto& [v, t] : groups) tie_term += static_cast<double>(t) * t * t - t;
  }
  res.tie_correction = 1.0 - tie_term / (nd * kd * (kd * kd - 1.0));
  if (res.tie_correction <= 1e-12) {
    res.tie_correction = 0.0;
    res.degenerate = true;
    res.statistic = 0.0;
    res.p_value = res.p_chi_square = 1.0;
    res.method = options.method == PValueMethod::Exact ? PValueMethod::Exact : PValueMethod::ChiSquare;
    return res;
  }
  double sum_sq = 0.0;
  for (double rs : rank_sums) sum_sq += rs * rs;
  const double raw = 12.0 / (nd * kd * (kd + 1.0)) * sum_sq - 3.0 * nd * (kd + 1.0);
  res.statistic = std::max(0.0, raw / res.tie_correction);
  res.p_chi_square = chi_square_sf(res.statistic, res.df);

  res.method = PValueMethod::ChiSquare;
  res.p_value = res.p_chi_square;
  if (options.method != PValueMethod::ChiSquare) {
    const auto limit = options.method == PValueMethod::Exact ? std::numeric_limits<std::size_t>::max()
                                                             : options.max_exact_work;
    if (auto exact = friedman_exact_p(table, limit)) {
      res.method = PValueMethod::Exact;
      res.p_value = *exact;
    }
  }
  res.significant = res.p_value < alpha_level;
  return res;
}

Alignment alignment(std::span<const SystemRank> a, std::span<const SystemRank> b) {
  std::map<std::string, double> ma, mb;
  for (const auto& s : a) ma[s.system_id] = s.mean_rank;
  for (const auto& s : b) mb[s.system_id] = s.mean_rank;
  if (ma.size() != a.size() || mb.size() != b.size()) {
    throw Error(ErrorCode::MismatchedSystems, "duplicate system in an ordering");
  }
  std::set<std::string> ka, kb;
  for (const auto& [id, v] : ma) ka.insert(id);
  for (const auto& [id, v] : mb) kb.insert(id);
  if (ka != kb || ka.empty()) throw Error(ErrorCode::MismatchedSystems, "orderings cover different systems");

  std::vector<double> x, y;
  for (const auto& [id, v] : ma) {
    x.push_back(v);
    y.push_back(mb.at(id));
  }
  Alignment out;
  // Kendall tau-b.
  double concordant = 0, discordant = 0, ties_x = 0, ties_y = 0, pairs = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      pairs += 1;
      const double dx = x[i] - x[j], dy = y[i] - y[j];
      if (dx == 0) ties_x += 1;
      if (dy == 0) ties_y += 1;
      if (dx * dy > 0) concordant += 1;
      if (dx * dy < 0) discordant += 1;
    }
  }
  const double denom = std::sqrt((pairs - ties_x) * (pairs - ties_y));
  out.kendall_tau = denom > 0 ? (concordant - discordant) / denom : 0.0;
  out.spearman_rho = pearson(fractional_ranks(x, Direction::LowerBetter), fractional_ranks(y, Direction::LowerBetter));

  auto best = [](const std::map<std::string, double>& m) {
    // std::map iterates by id, so the first minimum wins ties.
    return std::min_element(m.begin(), m.end(), [](const auto& p, const auto& q) { return p.second < q.second; })->first;
  };
  out.top1_match = best(ma) == best(mb);
  return out;
}

std::map<std::string, double> win_rate(std::span<const PairwisePreference> preferences) {
  if (preferences.empty()) throw Error(ErrorCode::NoComparisons, "no pairwise comparisons");
  std::map<std::string, double> wins, comparisons;
  for (const auto& p : preferences) {
    if (p.system_a == p.system_b) throw Error(ErrorCode::InvalidField, "a system cannot be compared with itself");
    comparisons[p.system_a] += 1;
    comparisons[p.system_b] += 1;
    if (p.outcome > 0) {
      wins[p.system_a] += 1;
    } else if (p.outcome < 0) {
      wins[p.system_b] += 1;
    } else {
      wins[p.system_a] += 0.5;
      wins[p.system_b] += 0.5;
    }
  }
  std::map<std::string, double> out;
  for (const auto& [id, c] : comparisons) out[id] = wins[id] / c;
  return out;
}

std::vector<PairwisePreference> pairwise_from_scores(std::span<const std::string> instance_ids,
                                                     std::span<const std::string> system_ids,
                                                     std::span<const double> values, Direction direction) {
  const auto k = system_ids.size();
  if (values.size() != k * instance_ids.size()) throw Error(ErrorCode::ShapeMismatch, "score matrix size mismatch");
  std::vector<PairwisePreference> out;
  for (std::size_t r = 0; r < instance_ids.size(); ++r) {
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = i + 1; j < k; ++j) {
        const double a = values[r * k + i], b = values[r * k + j];
        int outcome = a == b ? 0 : ((a > b) == (direction == Direction::HigherBetter) ? 1 : -1);
        out.push_back({instance_ids[r], system_ids[i], system_ids[j], outcome});
      }
    }
  }
  return out;
}

}  // namespace proxyrank::stats
