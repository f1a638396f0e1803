#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>

#include "proxyrank/corpus.hpp"
#include "proxyrank/error.hpp"
#include "proxyrank/rng.hpp"

namespace proxyrank::corpus {

namespace {

constexpr double kEps = 1e-9;
constexpr std::array<Split, 3> kOrder{Split::Train, Split::Dev, Split::Test};

std::array<double, 3> as_array(const SplitFractions& f) { return {f.train, f.dev, f.test}; }

void validate(const SplitFractions& f) {
  const auto a = as_array(f);
  for (double x : a) {
    if (!std::isfinite(x) || x < 0.0) throw Error(ErrorCode::BadFractions, "fractions must be finite and non-negative");
  }
  if (std::abs(a[0] + a[1] + a[2] - 1.0) > kEps) {
    throw Error(ErrorCode::BadFractions, "fractions must sum to 1");
  }
}

struct Quota {
  std::size_t floor = 0;
  double remainder = 0.0;
};

Quota quota(std::size_t n, double fraction) {
  const double q = fraction * static_cast<double>(n);
  const double fl = std::floor(q + kEps);
  return {static_cast<std::size_t>(fl), std::max(0.0, q - fl)};
}

// Max-flow over labels x splits with unit cell capacities. `extra` starts as
// a greedy allocation and is completed by augmenting paths.
bool complete_allocation(const std::vector<std::size_t>& row_need,
                         const std::array<std::size_t, 3>& col_need,
                         std::vector<std::array<int, 3>>& extra) {
  const std::size_t rows = row_need.size();
  std::vector<std::size_t> row_have(rows, 0);
  std::array<std::size_t, 3> col_have{};
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < 3; ++c) {
      row_have[r] += extra[r][c];
      col_have[c] += extra[r][c];
    }
  }
  // Each augmenting path starts at a row with unmet demand and ends at a
  // column with spare capacity, alternating unused and used cells.
  while (true) {
    std::size_t start = rows;
    for (std::size_t r = 0; r < rows; ++r) {
      if (row_have[r] < row_need[r]) {
        start = r;
        break;
      }
    }
    if (start == rows) return true;

    std::vector<int> row_from_col(3, -1);  // column -> row that reached it
    std::vector<int> col_from_row(rows, -1);
    std::vector<bool> row_seen(rows, false);
    std::array<bool, 3> col_seen{};
    std::vector<std::size_t> frontier{start};
    row_seen[start] = true;
    int target = -1;
    while (!frontier.empty() && target < 0) {
      std::vector<std::size_t> next;
      for (std::size_t r : frontier) {
        for (std::size_t c = 0; c < 3 && target < 0; ++c) {
          if (col_seen[c] || extra[r][c] != 0) continue;
          col_seen[c] = true;
          row_from_col[c] = static_cast<int>(r);
          if (col_have[c] < col_need[c]) {
            target = static_cast<int>(c);
            break;
          }
          for (std::size_t r2 = 0; r2 < rows; ++r2) {
            if (!row_seen[r2] && extra[r2][c] == 1) {
              row_seen[r2] = true;
              col_from_row[r2] = static_cast<int>(c);
              next.push_back(r2);
            }
          }
        }
      }
      frontier = std::move(next);
    }
    if (target < 0) return false;
    ++col_have[static_cast<std::size_t>(target)];
    ++row_have[start];
    int c = target;
    while (true) {
      const int r = row_from_col[static_cast<std::size_t>(c)];
      extra[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = 1;
      if (static_cast<std::size_t>(r) == start) break;
      const int prev_c = col_from_row[static_cast<std::size_t>(r)];
      extra[static_cast<std::size_t>(r)][static_cast<std::size_t>(prev_c)] = 0;
      c = prev_c;
    }
  }
}

}  // namespace

std::array<std::size_t, 3> largest_remainder_sizes(std::size_t total, const SplitFractions& fractions) {
  validate(fractions);
  const auto f = as_array(fractions);
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    const auto q = quota(total, f[s]);
    sizes[s] = q.floor;
    rem[s] = q.remainder;
    assigned += q.floor;
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b] + kEps; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++sizes[order[i % 3]];
  return sizes;
}

std::size_t SplitAssignment::count(Split s) const {
  return static_cast<std::size_t>(
      std::count_if(by_id.begin(), by_id.end(), [s](const auto& kv) { return kv.second == s; }));
}

std::array<std::size_t, 3> SplitAssignment::sizes() const {
  return {count(Split::Train), count(Split::Dev), count(Split::Test)};
}

SplitAssignment stratified_split(std::span<const std::string> ids, std::span<const std::string> labels,
                                 const SplitFractions& fractions, std::uint64_t seed) {
  if (ids.empty()) throw Error(ErrorCode::EmptyDataset, "nothing to split");
  if (ids.size() != labels.size()) throw Error(ErrorCode::ShapeMismatch, "ids and labels differ in length");
  validate(fractions);
  const auto f = as_array(fractions);
  const auto global = largest_remainder_sizes(ids.size(), fractions);

  std::map<std::string, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < ids.size(); ++i) by_label[labels[i]].push_back(i);

  struct Row {
    const std::string* label;
    std::vector<std::size_t>* members;
    std::array<std::size_t, 3> floors{};
    std::array<double, 3> rem{};
  };
  std::vector<Row> rows;
  std::vector<std::size_t> row_need;
  std::array<std::size_t, 3> col_need = global;
  for (auto& [label, members] : by_label) {
    Row row{&label, &members, {}, {}};
    std::size_t fl_sum = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      const auto q = quota(members.size(), f[s]);
      row.floors[s] = q.floor;
      row.rem[s] = q.remainder;
      fl_sum += q.floor;
      if (col_need[s] < q.floor) throw Error(ErrorCode::BadFractions, "inconsistent apportionment");
      col_need[s] -= q.floor;
    }
    row_need.push_back(members.size() - fl_sum);
    rows.push_back(row);
  }

  // Greedy by remainder (largest first), then repair with augmenting paths.
  struct Cell {
    std::size_t r, s;
    double rem;
  };
  std::vector<Cell> cells;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t s = 0; s < 3; ++s) cells.push_back({r, s, rows[r].rem[s]});
  }
  std::stable_sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) { return a.rem > b.rem + kEps; });
  std::vector<std::array<int, 3>> extra(rows.size(), {0, 0, 0});
  std::vector<std::size_t> row_used(rows.size(), 0);
  std::array<std::size_t, 3> col_used{};
  for (const auto& c : cells) {
    if (row_used[c.r] < row_need[c.r] && col_used[c.s] < col_need[c.s]) {
      extra[c.r][c.s] = 1;
      ++row_used[c.r];
      ++col_used[c.s];
    }
  }
  if (!complete_allocation(row_need, col_need, extra)) {
    throw Error(ErrorCode::BadFractions, "no stratified allocation matches the global split sizes");
  }

  SplitAssignment out;
  Rng rng(seed);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto members = *rows[r].members;
    rng.shuffle(std::span<std::size_t>(members));
    std::size_t pos = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      const std::size_t n = rows[r].floors[s] + static_cast<std::size_t>(extra[r][s]);
      for (std::size_t i = 0; i < n; ++i) out.by_id[ids[members[pos++]]] = kOrder[s];
    }
  }
  return out;
}

SplitAssignment stratified_split(std::span<const ProxyInstance> instances, const SplitFractions& fractions,
                                 std::uint64_t seed) {
  std::vector<std::string> ids;
  std::vector<std::string> labels;
  std::set<std::string> seen;
  for (const auto& inst : instances) {
    if (!seen.insert(instance_id(inst)).second) {
      throw Error(ErrorCode::DuplicateId, "duplicate id '" + instance_id(inst) + "'");
    }
    ids.push_back(instance_id(inst));
    labels.push_back(gold_label_token(inst));
  }
  return stratified_split(ids, labels, fractions, seed);
}

}  // namespace proxyrank::corpus
