#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include "expect_error.hpp"
#include "fixtures.hpp"
#include "mock_server.hpp"
#include "proxyrank/corpus.hpp"
#include "proxyrank/pipeline.hpp"
#include "proxyrank/scorer.hpp"
#include "proxyrank/stats.hpp"

using namespace proxyrank;
using nlohmann::json;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = pipeline::run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

// Twenty misinfo instances, three argument systems and a score table in which
// "alpha" wins most instances.
struct Workspace {
  std::filesystem::path dir = fixtures::temp_dir("cli");
  std::filesystem::path dataset = dir / "dataset.jsonl";
  std::filesystem::path arguments = dir / "arguments.jsonl";
  std::filesystem::path table = dir / "table.jsonl";

  Workspace() {
    std::vector<ProxyInstance> instances;
    std::vector<ArgumentVariant> args;
    std::ofstream t(table);
    std::mt19937_64 gen(17);
    std::uniform_real_distribution<double> u(0.05, 0.6);
    for (int i = 0; i < 20; ++i) {
      const auto id = "c" + std::to_string(100 + i);
      instances.push_back(fixtures::misinfo(id, i % 2 ? MisinfoLabel::Supported : MisinfoLabel::Refuted));
      for (const auto* sys : {"alpha", "beta", "gamma"}) {
        args.push_back({id + "/" + sys, id, sys, SourceKind::Llm, std::nullopt, std::string("argument of ") + sys});
        double p = u(gen);
        if (std::string(sys) == "alpha" && i % 10 != 0) p = 0.9;
        t << json{{"instance_id", id}, {"system_id", sys}, {"p", p}}.dump() << '\n';
      }
    }
    corpus::write_dataset(dataset, instances);
    corpus::write_arguments(arguments, args);
  }
  ~Workspace() { std::filesystem::remove_all(dir); }
};

}  // namespace

TEST(Cli, HelpAndUnknownCommand) {
  EXPECT_EQ(cli({"--help"}).code, 0);
  EXPECT_EQ(cli({"frobnicate"}).code, 1);
  EXPECT_EQ(cli({"rank"}).code, 1);
}

TEST(Cli, ScoreThenRankEndToEnd) {
  Workspace ws;
  const auto scores = ws.dir / "scores.jsonl";
  const auto r = cli({"score", "--task", "misinfo", "--dataset", ws.dataset.string(), "--arguments",
                      ws.arguments.string(), "--evaluator", "llm_trained", "--scorer-url", "mock:" + ws.table.string(),
                      "--out", scores.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(scorer::read_scores(scores).size(), 60u);
  EXPECT_TRUE(std::filesystem::exists(ws.dir / "scores.jsonl.meta.json"));

  // Outputs are never silently overwritten.
  EXPECT_EQ(cli({"score", "--task", "misinfo", "--dataset", ws.dataset.string(), "--arguments", ws.arguments.string(),
                 "--evaluator", "llm_trained", "--scorer-url", "mock:" + ws.table.string(), "--out", scores.string()})
                .code,
            1);

  const auto report = ws.dir / "report.json";
  const auto rr = cli({"rank", "--task", "misinfo", "--scores", scores.string(), "--out", report.string()});
  ASSERT_EQ(rr.code, 0) << rr.err;
  const auto j = read_json(report);
  const auto& ev = j["evaluators"][0];
  EXPECT_EQ(ev["evaluator"], "llm_trained");
  EXPECT_EQ(ev["mean_ranks"][0]["system_id"], "alpha");
  EXPECT_EQ(ev["best_system"], "alpha");
  EXPECT_LT(ev["friedman"]["p"].get<double>(), 0.05);
  EXPECT_TRUE(std::filesystem::exists(ws.dir / "report.txt"));
  EXPECT_NE(rr.out.find("alpha"), std::string::npos);
}

TEST(Cli, DegenerateRankingExitsThree) {
  Workspace ws;
  const auto scores = ws.dir / "flat.jsonl";
  std::vector<scorer::ScoreRecord> recs;
  for (const auto* i : {"a", "b", "c"}) {
    for (const auto* s : {"x", "y"}) recs.push_back({i, s, "e", 0.5, scorer::ScoreSemantics::GoldLabelProbability});
  }
  scorer::write_scores(scores, recs);
  const auto r = cli({"rank", "--scores", scores.string(), "--out", (ws.dir / "r.json").string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_TRUE(std::filesystem::exists(ws.dir / "r.json"));
}

TEST(Cli, UnreachableScorerExitsTwo) {
  Workspace ws;
  const auto r = cli({"score", "--task", "misinfo", "--dataset", ws.dataset.string(), "--gold", "--evaluator",
                      "expert_trained", "--scorer-url", testing_support::unreachable_url(), "--out",
                      (ws.dir / "s.jsonl").string()});
  EXPECT_EQ(r.code, 2) << r.err;
}

TEST(Cli, MissingInputIsValidationError) {
  Workspace ws;
  const auto r = cli({"score", "--task", "misinfo", "--dataset", (ws.dir / "absent.jsonl").string(), "--gold",
                      "--evaluator", "expert_trained", "--scorer-url", "mock:" + ws.table.string(), "--out",
                      (ws.dir / "s.jsonl").string()});
  EXPECT_EQ(r.code, 1);
}

TEST(Cli, IngestWritesSplitsAndDataset) {
  Workspace ws;
  const auto out = ws.dir / "ingested";
  const auto r = cli({"ingest", "--task", "misinfo", "--input", fixtures::data("misinfo_test_112.jsonl").string(),
                      "--seed", "3", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(out / "dataset.jsonl"));
  const auto splits = read_json(out / "splits.json");
  EXPECT_FALSE(splits.empty());
}

TEST(Cli, ControlsNoArgument) {
  Workspace ws;
  const auto out = ws.dir / "noarg.jsonl";
  const auto r = cli({"controls", "--task", "misinfo", "--dataset", ws.dataset.string(), "--kind", "no-arg", "--out",
                      out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(corpus::read_arguments(out).size(), 20u);
}

TEST(Cli, ConfigInterpolation) {
  ::setenv("PROXYRANK_TEST_TASK", "misinfo", 1);
  ::unsetenv("PROXYRANK_TEST_UNSET");
  EXPECT_EQ(pipeline::interpolate_env("task=${PROXYRANK_TEST_TASK}!"), "task=misinfo!");
  EXPECT_ERROR_CODE(pipeline::interpolate_env("${PROXYRANK_TEST_UNSET}"), ErrorCode::InvalidConfig);

  Workspace ws;
  const auto cfg = ws.dir / "config.json";
  std::ofstream(cfg) << json{{"task", "${PROXYRANK_TEST_TASK}"},
                             {"controls", {{"kind", "label-only"}}}}.dump();
  const auto loaded = pipeline::load_config(cfg);
  EXPECT_EQ(loaded["task"], "misinfo");

  const auto out = ws.dir / "labels.jsonl";
  const auto r = cli({"controls", "--config", cfg.string(), "--dataset", ws.dataset.string(), "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto args = corpus::read_arguments(out);
  ASSERT_EQ(args.size(), 20u);
  EXPECT_EQ(args[0].control, ControlKind::LabelOnly);
}

TEST(Cli, ItaFromSheets) {
  Workspace ws;
  const auto sheets_path = ws.dir / "sheets.jsonl";
  std::vector<stats::HumanGradeSheet> sheets(2);
  for (int a = 0; a < 2; ++a) {
    sheets[a].annotator_id = "ann" + std::to_string(a);
    for (int i = 0; i < 5; ++i) {
      for (int s = 0; s < 4; ++s) sheets[a].grades[{"i" + std::to_string(i), "s" + std::to_string(s)}] = 1 + s;
    }
  }
  stats::write_sheets(sheets_path, sheets);
  const auto out = ws.dir / "ita.json";
  const auto r = cli({"ita", "--annotations", sheets_path.string(), "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(read_json(out)["alpha"].get<double>(), 1.0, 1e-12);
}
