#include "oracles.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <set>

namespace oracle {

double alpha_pairs(const std::vector<std::vector<std::optional<double>>>& units, int metric) {
  std::vector<std::vector<double>> pairable;
  std::vector<double> all;
  for (const auto& u : units) {
    std::vector<double> vals;
    for (const auto& v : u) {
      if (v) vals.push_back(*v);
    }
    if (vals.size() >= 2) {
      all.insert(all.end(), vals.begin(), vals.end());
      pairable.push_back(std::move(vals));
    }
  }
  std::map<double, double> freq;
  for (double v : all) freq[v] += 1.0;

  auto delta2 = [&](double a, double b) -> double {
    if (metric == 0) return a == b ? 0.0 : 1.0;
    if (metric == 2) return (a - b) * (a - b);
    if (a == b) return 0.0;
    const double lo = std::min(a, b), hi = std::max(a, b);
    double s = 0.0;
    for (const auto& [g, n] : freq) {
      if (g >= lo && g <= hi) s += n;
    }
    s -= (freq[lo] + freq[hi]) / 2.0;
    return s * s;
  };

  const double n = static_cast<double>(all.size());
  double d_o = 0.0;
  for (const auto& vals : pairable) {
    double s = 0.0;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      for (std::size_t j = 0; j < vals.size(); ++j) {
        if (i != j) s += delta2(vals[i], vals[j]);
      }
    }
    d_o += s / static_cast<double>(vals.size() - 1);
  }
  d_o /= n;
  double d_e = 0.0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    for (std::size_t j = 0; j < all.size(); ++j) {
      if (i != j) d_e += delta2(all[i], all[j]);
    }
  }
  d_e /= n * (n - 1.0);
  return 1.0 - d_o / d_e;
}

double friedman_statistic(const std::vector<std::vector<double>>& rows) {
  const double n = static_cast<double>(rows.size());
  const std::size_t k = rows.front().size();
  const double kd = static_cast<double>(k);
  std::vector<double> sums(k, 0.0);
  double ties = 0.0;
  for (const auto& r : rows) {
    std::map<double, int> counts;
    for (std::size_t j = 0; j < k; ++j) {
      sums[j] += r[j];
      counts[r[j]]++;
    }
    for (const auto& [_, t] : counts) ties += static_cast<double>(t) * t * t - t;
  }
  double ss = 0.0;
  for (double s : sums) ss += s * s;
  const double raw = 12.0 / (n * kd * (kd + 1.0)) * ss - 3.0 * n * (kd + 1.0);
  const double c = 1.0 - ties / (n * kd * (kd * kd - 1.0));
  return c <= 1e-12 ? 0.0 : raw / c;
}

McP friedman_mc_p(const std::vector<std::vector<double>>& rank_rows, std::size_t draws, std::uint64_t seed) {
  const double observed = friedman_statistic(rank_rows);
  std::mt19937_64 gen(seed);
  auto rows = rank_rows;
  std::size_t hits = 0;
  for (std::size_t d = 0; d < draws; ++d) {
    for (auto& r : rows) std::shuffle(r.begin(), r.end(), gen);
    if (friedman_statistic(rows) >= observed - 1e-9) ++hits;
  }
  McP out;
  out.p = static_cast<double>(hits) / static_cast<double>(draws);
  out.se = std::sqrt(std::max(out.p * (1.0 - out.p), 1.0 / static_cast<double>(draws)) / static_cast<double>(draws));
  return out;
}

double kendall_tau_b(const std::vector<double>& x, const std::vector<double>& y) {
  double concordant = 0, discordant = 0, tx = 0, ty = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const double dx = x[i] - x[j], dy = y[i] - y[j];
      if (dx == 0 && dy == 0) continue;
      if (dx == 0) {
        tx += 1;
      } else if (dy == 0) {
        ty += 1;
      } else if ((dx > 0) == (dy > 0)) {
        concordant += 1;
      } else {
        discordant += 1;
      }
    }
  }
  const double denom = std::sqrt((concordant + discordant + tx) * (concordant + discordant + ty));
  return denom == 0 ? 0.0 : (concordant - discordant) / denom;
}

namespace {

std::set<std::string> tokens(const std::string& s) {
  std::set<std::string> out;
  std::string cur;
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.insert(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.insert(cur);
  return out;
}

double cosine(const std::set<std::string>& q, const std::set<std::string>& d) {
  if (q.empty() || d.empty()) return 0.0;
  double common = 0;
  for (const auto& t : q) common += d.count(t);
  return common / std::sqrt(static_cast<double>(q.size()) * static_cast<double>(d.size()));
}

// Byte offsets of code-point starts, plus the end.
std::vector<std::size_t> code_points(const std::string& s) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if ((static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) out.push_back(i);
  }
  out.push_back(s.size());
  return out;
}

}  // namespace

std::vector<OraclePassage> all_chunks_top(const std::map<std::string, std::string>& docs, const std::string& query,
                                          std::size_t chunk_size, std::size_t top) {
  const auto q = tokens(query);
  std::vector<OraclePassage> all;
  for (const auto& [id, text] : docs) {
    const auto cp = code_points(text);
    const std::size_t n = cp.size() - 1;
    for (std::size_t start = 0; start < n; start += chunk_size) {
      const std::size_t end = std::min(n, start + chunk_size);
      OraclePassage p{id, start, text.substr(cp[start], cp[end] - cp[start]), 0.0};
      p.score = cosine(q, tokens(p.text));
      all.push_back(std::move(p));
    }
  }
  std::sort(all.begin(), all.end(), [](const OraclePassage& a, const OraclePassage& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.doc_id != b.doc_id) return a.doc_id < b.doc_id;
    return a.start < b.start;
  });
  if (all.size() > top) all.resize(top);
  return all;
}

std::map<std::string, double> tally_win_rate(const std::vector<Comparison>& comparisons) {
  std::map<std::string, double> wins, total;
  for (const auto& c : comparisons) {
    total[c.a] += 1;
    total[c.b] += 1;
    if (c.outcome > 0) wins[c.a] += 1;
    if (c.outcome < 0) wins[c.b] += 1;
    if (c.outcome == 0) {
      wins[c.a] += 0.5;
      wins[c.b] += 0.5;
    }
  }
  std::map<std::string, double> out;
  for (const auto& [s, t] : total) out[s] = wins[s] / t;
  return out;
}

}  // namespace oracle
