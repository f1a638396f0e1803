#include "proxyrank/report.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include "proxyrank/error.hpp"

namespace proxyrank::report {

using nlohmann::json;

namespace {

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s + " " : s + std::string(width - s.size(), ' ');
}

json friedman_json(const stats::FriedmanResult& f) {
  return {{"statistic", f.statistic},
          {"df", f.df},
          {"p", f.p_value},
          {"significant", f.significant},
          {"p_method", stats::to_token(f.method)},
          {"p_chi_square", f.p_chi_square},
          {"tie_correction", f.tie_correction},
          {"n_blocks", f.n_blocks},
          {"k_systems", f.k_systems},
          {"degenerate", f.degenerate}};
}

json task_json(const std::optional<TaskKind>& task) { return task ? json(to_token(*task)) : json(nullptr); }

json ranks_json(const std::vector<stats::SystemRank>& ranks) {
  json out = json::array();
  for (const auto& r : ranks) out.push_back({{"system_id", r.system_id}, {"mean_rank", r.mean_rank}});
  return out;
}

std::optional<stats::Alignment> align_with_human(const scorer::ScoreMatrix& m,
                                                 const std::vector<stats::SystemRank>& human,
                                                 const ReportOptions& options) {
  std::vector<std::size_t> cols;
  std::vector<std::string> ids;
  for (const auto& h : human) {
    auto it = std::find(m.system_ids.begin(), m.system_ids.end(), h.system_id);
    if (it == m.system_ids.end()) return std::nullopt;
  }
  for (std::size_t j = 0; j < m.system_ids.size(); ++j) {
    bool graded = std::any_of(human.begin(), human.end(), [&](const auto& h) { return h.system_id == m.system_ids[j]; });
    if (graded) {
      cols.push_back(j);
      ids.push_back(m.system_ids[j]);
    }
  }
  if (cols.size() < 2) return std::nullopt;
  std::vector<double> sub;
  for (std::size_t i = 0; i < m.instance_ids.size(); ++i) {
    for (auto j : cols) sub.push_back(m.at(i, j));
  }
  const auto table = stats::rank_table(m.instance_ids, ids, sub, options.direction);
  const auto ranks = stats::mean_ranks(table);
  return stats::alignment(ranks, human);
}

}  // namespace

std::vector<std::string> order_by_score(const std::map<std::string, double>& scores) {
  std::vector<std::pair<std::string, double>> v(scores.begin(), scores.end());
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (const auto& [id, s] : v) out.push_back(id);
  return out;
}

stats::RankTable human_rank_table(std::span<const stats::HumanGradeSheet> sheets) {
  std::set<std::string> systems;
  for (const auto& s : sheets) {
    for (const auto& [key, g] : s.grades) systems.insert(key.second);
  }
  stats::RankTable t;
  t.system_ids.assign(systems.begin(), systems.end());
  for (const auto& s : sheets) {
    std::set<std::string> instances;
    for (const auto& [key, g] : s.grades) instances.insert(key.first);
    for (const auto& inst : instances) {
      std::vector<double> grades;
      for (const auto& sys : t.system_ids) {
        auto it = s.grades.find({inst, sys});
        if (it == s.grades.end()) break;
        grades.push_back(static_cast<double>(it->second));
      }
      if (grades.size() != t.system_ids.size()) continue;
      auto ranks = stats::fractional_ranks(grades, stats::Direction::LowerBetter);
      t.instance_ids.push_back(s.annotator_id + "/" + inst);
      t.ranks.insert(t.ranks.end(), ranks.begin(), ranks.end());
    }
  }
  return t;
}

Report build_report(std::optional<TaskKind> task, std::span<const EvaluatorInput> evaluators,
                    std::span<const stats::HumanGradeSheet> sheets, const ReportOptions& options) {
  if (evaluators.empty()) throw Error(ErrorCode::Empty, "a report needs at least one evaluator");
  Report report;
  report.task = task;

  if (!sheets.empty()) {
    HumanSummary human;
    human.n_sheets = sheets.size();
    const auto table = human_rank_table(sheets);
    if (!table.instance_ids.empty()) {
      human.mean_ranks = stats::mean_ranks(table);
      if (table.instance_ids.size() >= 2 && table.system_ids.size() >= 2) {
        human.friedman = stats::friedman_test(table, options.alpha, options.friedman);
      }
    }
    if (sheets.size() >= 2) {
      try {
        human.ita = stats::krippendorff_alpha(sheets, stats::AlphaMetric::Ordinal);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::UndefinedExpectedDisagreement) throw;
      }
    }
    report.human = std::move(human);
  }

  for (const auto& in : evaluators) {
    const auto& m = in.matrix;
    m.validate();
    EvaluatorReport ev;
    ev.evaluator = in.evaluator;
    ev.task = task;
    ev.semantics = m.semantics;
    for (std::size_t j = 0; j < m.system_ids.size(); ++j) {
      const auto col = m.column(j);
      ev.aggregate_scores[m.system_ids[j]] = m.semantics == scorer::ScoreSemantics::Correctness01
                                                 ? scorer::accuracy(col)
                                                 : std::accumulate(col.begin(), col.end(), 0.0) /
                                                       static_cast<double>(col.size()) * 100.0;
    }
    ev.aggregate_order = order_by_score(ev.aggregate_scores);
    ev.best_system = ev.aggregate_order.front();
    const auto table = stats::rank_table(m.instance_ids, m.system_ids, m.values, options.direction);
    ev.mean_ranks = stats::mean_ranks(table);
    ev.friedman = stats::friedman_test(table, options.alpha, options.friedman);
    if (report.human && !report.human->mean_ranks.empty()) {
      ev.alignment = align_with_human(m, report.human->mean_ranks, options);
    }
    report.evaluators.push_back(std::move(ev));
  }
  return report;
}

json to_json(const Report& report) {
  json evs = json::array();
  for (const auto& ev : report.evaluators) {
    json j{{"evaluator", ev.evaluator},
           {"task", task_json(ev.task)},
           {"score_semantics", scorer::to_token(ev.semantics)},
           {"aggregate_scores", ev.aggregate_scores},
           {"mean_ranks", ranks_json(ev.mean_ranks)},
           {"friedman", friedman_json(ev.friedman)},
           {"best_system", ev.best_system}};
    if (ev.alignment) {
      j["alignment"] = {{"kendall_tau", ev.alignment->kendall_tau},
                        {"spearman_rho", ev.alignment->spearman_rho},
                        {"top1_match", ev.alignment->top1_match}};
    }
    evs.push_back(std::move(j));
  }
  json out{{"task", task_json(report.task)}, {"evaluators", evs}};
  if (report.human) {
    json h{{"n_sheets", report.human->n_sheets}, {"mean_ranks", ranks_json(report.human->mean_ranks)}};
    if (report.human->friedman) h["friedman"] = friedman_json(*report.human->friedman);
    if (report.human->ita) {
      h["ita"] = {{"alpha", report.human->ita->alpha},
                  {"metric", stats::to_token(report.human->ita->metric)},
                  {"n_units", report.human->ita->n_units},
                  {"n_raters", report.human->ita->n_raters},
                  {"n_pairable_values", report.human->ita->n_pairable_values}};
    }
    out["human"] = std::move(h);
  }
  return out;
}

std::string render_text(const Report& report) {
  std::set<std::string> system_set;
  for (const auto& ev : report.evaluators) {
    for (const auto& r : ev.mean_ranks) system_set.insert(r.system_id);
  }
  if (report.human) {
    for (const auto& r : report.human->mean_ranks) system_set.insert(r.system_id);
  }
  const std::vector<std::string> systems(system_set.begin(), system_set.end());

  std::size_t first = 10;
  for (const auto& ev : report.evaluators) first = std::max(first, ev.evaluator.size() + 2);
  std::size_t width = 16;
  for (const auto& s : systems) width = std::max(width, s.size() + 2);

  std::ostringstream out;
  out << "task: " << (report.task ? to_token(*report.task) : "unspecified") << "\n";
  out << "cells: mean rank (aggregate score); rank 1 is best\n\n";
  out << pad("evaluator", first);
  for (const auto& s : systems) out << pad(s, width);
  out << "friedman p\n";

  auto row = [&](const std::string& name, const std::vector<stats::SystemRank>& ranks,
                 const std::map<std::string, double>* aggregates, const stats::FriedmanResult* f) {
    out << pad(name, first);
    for (const auto& s : systems) {
      auto it = std::find_if(ranks.begin(), ranks.end(), [&](const auto& r) { return r.system_id == s; });
      std::string cell = "-";
      if (it != ranks.end()) {
        cell = fixed(it->mean_rank, 2);
        if (aggregates && aggregates->count(s)) cell += " (" + fixed(aggregates->at(s), 2) + ")";
      }
      out << pad(cell, width);
    }
    if (f) {
      out << fixed(f->p_value, 4) << (f->significant ? " *" : "") << (f->degenerate ? " degenerate" : "");
    } else {
      out << "-";
    }
    out << "\n";
  };
  for (const auto& ev : report.evaluators) row(ev.evaluator, ev.mean_ranks, &ev.aggregate_scores, &ev.friedman);
  if (report.human && !report.human->mean_ranks.empty()) {
    row("human", report.human->mean_ranks, nullptr, report.human->friedman ? &*report.human->friedman : nullptr);
  }
  out << "\n";
  for (const auto& ev : report.evaluators) {
    out << ev.evaluator << ": best system " << ev.best_system << " (" << fixed(ev.aggregate_scores.at(ev.best_system), 2)
        << "), semantics " << scorer::to_token(ev.semantics);
    if (ev.alignment) {
      out << ", vs human tau " << fixed(ev.alignment->kendall_tau, 3) << " rho " << fixed(ev.alignment->spearman_rho, 3)
          << " top1 " << (ev.alignment->top1_match ? "yes" : "no");
    }
    out << "\n";
  }
  if (report.human && report.human->ita) {
    out << "human ITA (Krippendorff alpha, ordinal): " << fixed(report.human->ita->alpha, 3) << "\n";
  }
  return out.str();
}

bool has_degenerate_statistics(const Report& report) {
  for (const auto& ev : report.evaluators) {
    if (ev.friedman.degenerate) return true;
  }
  return false;
}

}  // namespace proxyrank::report
