#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "proxyrank/error.hpp"
#include "proxyrank/stats.hpp"
#include "proxyrank/text.hpp"

namespace proxyrank::stats {

using nlohmann::json;

std::string_view to_token(AlphaMetric m) noexcept {
  switch (m) {
    case AlphaMetric::Nominal: return "nominal";
    case AlphaMetric::Ordinal: return "ordinal";
    case AlphaMetric::Interval: return "interval";
  }
  return "";
}

std::optional<AlphaMetric> parse_metric(std::string_view token) noexcept {
  for (auto m : {AlphaMetric::Nominal, AlphaMetric::Ordinal, AlphaMetric::Interval}) {
    if (token == to_token(m)) return m;
  }
  return std::nullopt;
}

AlphaResult krippendorff_alpha(const std::vector<std::vector<std::optional<double>>>& units, AlphaMetric metric) {
  std::size_t raters = 0;
  for (const auto& u : units) raters = std::max(raters, u.size());
  std::vector<bool> rater_seen(raters, false);
  for (const auto& u : units) {
    for (std::size_t r = 0; r < u.size(); ++r) {
      if (u[r]) {
        if (!std::isfinite(*u[r])) throw Error(ErrorCode::NonFinite, "rating is not finite");
        rater_seen[r] = true;
      }
    }
  }
  AlphaResult res;
  res.metric = metric;
  for (bool b : rater_seen) res.n_raters += b ? 1 : 0;
  if (res.n_raters < 2) throw Error(ErrorCode::SingleRater, "agreement needs at least two raters");

  // Coincidence matrix over the distinct values.
  std::set<double> value_set;
  for (const auto& u : units) {
    std::size_t m = 0;
    for (const auto& v : u) m += v ? 1 : 0;
    if (m < 2) continue;
    for (const auto& v : u) {
      if (v) value_set.insert(*v);
    }
  }
  const std::vector<double> values(value_set.begin(), value_set.end());
  const std::size_t nv = values.size();
  auto index = [&values](double v) {
    return static_cast<std::size_t>(std::lower_bound(values.begin(), values.end(), v) - values.begin());
  };
  std::vector<double> o(nv * nv, 0.0);
  for (const auto& u : units) {
    std::vector<std::size_t> idx;
    for (const auto& v : u) {
      if (v) idx.push_back(index(*v));
    }
    if (idx.size() < 2) continue;
    ++res.n_units;
    const double w = 1.0 / static_cast<double>(idx.size() - 1);
    for (std::size_t a = 0; a < idx.size(); ++a) {
      for (std::size_t b = 0; b < idx.size(); ++b) {
        if (a != b) o[idx[a] * nv + idx[b]] += w;
      }
    }
  }
  std::vector<double> marginal(nv, 0.0);
  double n = 0.0;
  for (std::size_t c = 0; c < nv; ++c) {
    for (std::size_t k = 0; k < nv; ++k) marginal[c] += o[c * nv + k];
    n += marginal[c];
  }
  res.n_pairable_values = static_cast<std::size_t>(std::llround(n));
  if (res.n_pairable_values < 2) {
    throw Error(ErrorCode::UndefinedExpectedDisagreement, "fewer than two pairable values");
  }

  auto delta2 = [&](std::size_t c, std::size_t k) -> double {
    if (c == k) return 0.0;
    switch (metric) {
      case AlphaMetric::Nominal: return 1.0;
      case AlphaMetric::Interval: return (values[c] - values[k]) * (values[c] - values[k]);
      case AlphaMetric::Ordinal: {
        const auto lo = std::min(c, k), hi = std::max(c, k);
        double s = 0.0;
        for (std::size_t g = lo; g <= hi; ++g) s += marginal[g];
        s -= (marginal[c] + marginal[k]) / 2.0;
        return s * s;
      }
    }
    return 0.0;
  };

  double observed = 0.0, expected = 0.0;
  for (std::size_t c = 0; c < nv; ++c) {
    for (std::size_t k = 0; k < nv; ++k) {
      const double d = delta2(c, k);
      observed += o[c * nv + k] * d;
      expected += marginal[c] * marginal[k] * d;
    }
  }
  res.observed_disagreement = observed / n;
  res.expected_disagreement = expected / (n * (n - 1.0));
  if (expected <= 0.0) throw Error(ErrorCode::UndefinedExpectedDisagreement, "all pairable values are identical");
  res.alpha = 1.0 - (n - 1.0) * observed / expected;
  return res;
}

AlphaResult krippendorff_alpha(std::span<const HumanGradeSheet> sheets, AlphaMetric metric) {
  std::set<std::string> annotators;
  for (const auto& s : sheets) annotators.insert(s.annotator_id);
  if (annotators.size() < 2) throw Error(ErrorCode::SingleRater, "agreement needs at least two annotators");
  if (annotators.size() != sheets.size()) {
    throw Error(ErrorCode::InvalidField, "each annotator must have exactly one sheet");
  }
  std::map<std::pair<std::string, std::string>, std::vector<std::optional<double>>> units;
  for (std::size_t r = 0; r < sheets.size(); ++r) {
    for (const auto& [key, grade] : sheets[r].grades) {
      auto& u = units[key];
      u.resize(sheets.size());
      u[r] = static_cast<double>(grade);
    }
  }
  std::vector<std::vector<std::optional<double>>> data;
  for (auto& [key, u] : units) data.push_back(std::move(u));
  auto res = krippendorff_alpha(data, metric);
  res.n_raters = sheets.size();
  return res;
}

json to_json(const HumanGradeSheet& sheet) {
  json grades = json::array();
  for (const auto& [key, g] : sheet.grades) {
    grades.push_back({{"instance_id", key.first}, {"system_id", key.second}, {"grade", g}});
  }
  return {{"annotator_id", sheet.annotator_id}, {"grades", grades}};
}

HumanGradeSheet sheet_from_json(const json& j) {
  if (!j.is_object() || !j.contains("annotator_id") || !j.contains("grades") || !j["grades"].is_array()) {
    throw Error(ErrorCode::MalformedLine, "expected {annotator_id, grades:[...]}");
  }
  HumanGradeSheet s;
  s.annotator_id = j["annotator_id"].get<std::string>();
  for (const auto& g : j["grades"]) {
    if (!g.contains("instance_id") || !g.contains("system_id") || !g.contains("grade") ||
        !g["grade"].is_number_integer()) {
      throw Error(ErrorCode::InvalidField, "grade entries need instance_id, system_id and an integer grade");
    }
    const int grade = g["grade"].get<int>();
    if (grade < 1 || grade > 5) throw Error(ErrorCode::GradeOutOfRange, "grade " + std::to_string(grade));
    auto key = std::make_pair(g["instance_id"].get<std::string>(), g["system_id"].get<std::string>());
    if (!s.grades.emplace(key, grade).second) {
      throw Error(ErrorCode::DuplicateId, "two grades for (" + key.first + ", " + key.second + ")");
    }
  }
  return s;
}

std::vector<HumanGradeSheet> read_sheets(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<HumanGradeSheet> out;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (text::trim(raw).empty()) continue;
    auto j = json::parse(raw, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::MalformedLine, "invalid JSON", line);
    try {
      out.push_back(sheet_from_json(j));
    } catch (const Error& e) {
      throw Error(e.code(), e.what(), line);
    }
  }
  return out;
}

void write_sheets(const std::filesystem::path& path, std::span<const HumanGradeSheet> sheets) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  for (const auto& s : sheets) out << to_json(s).dump() << '\n';
}

}  // namespace proxyrank::stats
