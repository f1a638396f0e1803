#include <gtest/gtest.h>

#include "expect_error.hpp"
#include "proxyrank/report.hpp"

using namespace proxyrank;
using namespace proxyrank::report;

namespace {

// Every instance of a system carries the same score, so the aggregate equals
// the given value.
scorer::ScoreMatrix constant_matrix(const std::map<std::string, double>& aggregates, std::size_t n = 3) {
  scorer::ScoreMatrix m;
  for (const auto& [s, _] : aggregates) m.system_ids.push_back(s);
  for (std::size_t i = 0; i < n; ++i) {
    m.instance_ids.push_back("i" + std::to_string(i));
    for (const auto& [_, v] : aggregates) m.values.push_back(v / 100.0);
  }
  return m;
}

stats::HumanGradeSheet sheet(const std::string& who, const std::map<std::string, int>& per_system, int instances) {
  stats::HumanGradeSheet s;
  s.annotator_id = who;
  for (int i = 0; i < instances; ++i) {
    for (const auto& [sys, g] : per_system) s.grades[{"i" + std::to_string(i), sys}] = g;
  }
  return s;
}

}  // namespace

TEST(Report, OrderByScoreBreaksTiesById) {
  EXPECT_EQ(order_by_score({{"b", 1.0}, {"a", 1.0}, {"c", 2.0}}), (std::vector<std::string>{"c", "a", "b"}));
}

TEST(Report, LlmTrainedMmcqaAggregates) {
  const std::vector<EvaluatorInput> inputs{
      {"llm_trained", constant_matrix({{"gold", 72.64}, {"gpt4", 78.90}, {"openbiollm", 66.85}, {"llama3", 64.98}})}};
  const auto r = build_report(TaskKind::Mmcqa, inputs);
  ASSERT_EQ(r.evaluators.size(), 1u);
  const auto& ev = r.evaluators[0];
  EXPECT_EQ(ev.best_system, "gpt4");
  EXPECT_EQ(ev.aggregate_order, (std::vector<std::string>{"gpt4", "gold", "openbiollm", "llama3"}));
  EXPECT_DOUBLE_EQ(scorer::round2(ev.aggregate_scores.at("gpt4")), 78.90);
  EXPECT_EQ(ev.mean_ranks.front().system_id, "gpt4");
  EXPECT_FALSE(ev.alignment.has_value());
  EXPECT_FALSE(r.human.has_value());
}

TEST(Report, HumanSheetsAddAlignment) {
  const std::vector<EvaluatorInput> inputs{{"e", constant_matrix({{"a", 90}, {"b", 50}, {"c", 10}})}};
  const std::vector<stats::HumanGradeSheet> sheets{sheet("h1", {{"a", 1}, {"b", 2}, {"c", 4}}, 3),
                                                   sheet("h2", {{"a", 2}, {"b", 2}, {"c", 5}}, 3)};
  const auto r = build_report(std::nullopt, inputs, sheets);
  ASSERT_TRUE(r.human.has_value());
  EXPECT_EQ(r.human->n_sheets, 2u);
  EXPECT_EQ(r.human->mean_ranks.front().system_id, "a");
  ASSERT_TRUE(r.evaluators[0].alignment.has_value());
  EXPECT_TRUE(r.evaluators[0].alignment->top1_match);
  EXPECT_GT(r.evaluators[0].alignment->kendall_tau, 0.8);
  ASSERT_TRUE(r.human->ita.has_value());

  const auto t = human_rank_table(sheets);
  EXPECT_EQ(t.instance_ids.size(), 6u);
  EXPECT_EQ(t.system_ids.size(), 3u);
}

TEST(Report, JsonTextAndDegeneracy) {
  const std::vector<EvaluatorInput> inputs{{"flat", constant_matrix({{"a", 40}, {"b", 40}})},
                                           {"sharp", constant_matrix({{"a", 70}, {"b", 20}})}};
  const auto r = build_report(TaskKind::Misinfo, inputs);
  EXPECT_TRUE(has_degenerate_statistics(r));
  const auto j = to_json(r);
  EXPECT_EQ(j["task"], "misinfo");
  ASSERT_EQ(j["evaluators"].size(), 2u);
  const auto text = render_text(r);
  EXPECT_NE(text.find("flat"), std::string::npos);
  EXPECT_NE(text.find("sharp"), std::string::npos);
  EXPECT_ERROR_CODE(build_report(std::nullopt, std::vector<EvaluatorInput>{}), ErrorCode::Empty);
}
