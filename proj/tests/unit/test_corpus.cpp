#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "expect_error.hpp"
#include "fixtures.hpp"
#include "proxyrank/corpus.hpp"

using namespace proxyrank;
using nlohmann::json;

namespace {

std::string mmcqa_line(const std::string& id, int correct = 0) {
  return json{{"id", id},
              {"clinical_case", "case"},
              {"question", "q?"},
              {"options", {"a", "b", "c", "d", "e"}},
              {"correct_index", correct},
              {"gold_explanation", "because"}}
      .dump();
}

}  // namespace

TEST(ParseDataset, ThreeLinesInInputOrder) {
  std::istringstream in(mmcqa_line("q3") + "\n" + mmcqa_line("q1") + "\n\n" + mmcqa_line("q2") + "\n");
  auto res = corpus::parse_dataset(in, TaskKind::Mmcqa);
  ASSERT_EQ(res.instances.size(), 3u);
  EXPECT_EQ(instance_id(res.instances[0]), "q3");
  EXPECT_EQ(instance_id(res.instances[1]), "q1");
  EXPECT_EQ(instance_id(res.instances[2]), "q2");
}

TEST(ParseDataset, CorrectIndexOutOfRangeRejectsWithLine) {
  std::istringstream in(mmcqa_line("q1") + "\n" + mmcqa_line("q2", 5) + "\n");
  try {
    corpus::parse_dataset(in, TaskKind::Mmcqa);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LabelOutOfDomain);
    EXPECT_EQ(e.line(), 2u);
    EXPECT_EQ(e.field(), "correct_index");
  }
}

TEST(ParseDataset, SchemaViolations) {
  std::istringstream malformed("{not json\n");
  EXPECT_ERROR_CODE(corpus::parse_dataset(malformed, TaskKind::Mmcqa), ErrorCode::MalformedLine);
  std::istringstream missing(R"({"id":"m1","label":"supported","gold_argument":"x"})");
  EXPECT_ERROR_CODE(corpus::parse_dataset(missing, TaskKind::Misinfo), ErrorCode::MissingField);
  std::istringstream dup(mmcqa_line("q1") + "\n" + mmcqa_line("q1") + "\n");
  EXPECT_ERROR_CODE(corpus::parse_dataset(dup, TaskKind::Mmcqa), ErrorCode::DuplicateId);
  std::istringstream bad_label(R"({"id":"m1","claim":"c","label":"maybe","gold_argument":"x"})");
  EXPECT_ERROR_CODE(corpus::parse_dataset(bad_label, TaskKind::Misinfo), ErrorCode::LabelOutOfDomain);
}

TEST(ParseDataset, AppendixNliExampleIsEntailment) {
  auto res = corpus::parse_dataset(fixtures::data("nli_example.jsonl"), TaskKind::ClinicalNli);
  ASSERT_EQ(res.instances.size(), 1u);
  const auto& n = std::get<NliInstance>(res.instances[0]);
  EXPECT_EQ(n.label, NliLabel::Entailment);
  EXPECT_TRUE(n.full_document.has_value());
  EXPECT_TRUE(corpus::missing_evidence_segments(n).empty());
}

TEST(ParseDataset, EvidenceMissingFromDocumentIsOnlyAWarning) {
  auto n = fixtures::nli("n1", NliLabel::Contradiction);
  n.full_document = "Something unrelated.";
  std::istringstream in(corpus::to_json(ProxyInstance{n}).dump() + "\n");
  auto res = corpus::parse_dataset(in, TaskKind::ClinicalNli);
  EXPECT_EQ(res.instances.size(), 1u);
  EXPECT_FALSE(res.warnings.empty());
}

TEST(ParseDataset, SerializeThenParseIsIdentity) {
  std::vector<ProxyInstance> mm{fixtures::mmcqa("a", 4, 2), fixtures::mmcqa("b", 2, 1)};
  std::get<MmcqaInstance>(mm[0]).split = Split::Dev;
  std::vector<ProxyInstance> mi{fixtures::misinfo("m", MisinfoLabel::NotEnoughEvidence)};
  auto n = fixtures::nli("n", NliLabel::Contradiction);
  n.full_document = "Adverse Events 1: ** Total: 10/100 ** Adverse Events 2: ** Total: 5/100";
  std::vector<ProxyInstance> nl{n};
  for (auto [task, set] : {std::pair{TaskKind::Mmcqa, &mm}, {TaskKind::Misinfo, &mi}, {TaskKind::ClinicalNli, &nl}}) {
    std::istringstream in(corpus::serialize_dataset(*set));
    EXPECT_EQ(corpus::parse_dataset(in, task).instances, *set);
  }
}

TEST(PermuteAnswerPositions, OneVariantPerPosition) {
  const auto q = fixtures::mmcqa("q", 5, 0);
  const auto variants = corpus::permute_answer_positions(q);
  ASSERT_EQ(variants.size(), 5u);
  std::multiset<std::string> original(q.options.begin(), q.options.end());
  for (std::size_t j = 0; j < variants.size(); ++j) {
    const auto& v = variants[j];
    EXPECT_EQ(v.correct_index, j);
    EXPECT_EQ(v.id, "q#p" + std::to_string(j));
    EXPECT_EQ(v.options[v.correct_index], q.options[q.correct_index]);
    EXPECT_EQ(std::multiset<std::string>(v.options.begin(), v.options.end()), original);
  }
  auto v0 = variants[0];
  v0.id = q.id;
  EXPECT_EQ(v0, q);
}

TEST(PermuteAnswerPositions, OthersKeepRelativeOrder) {
  const auto q = fixtures::mmcqa("q", 5, 2);
  for (const auto& v : corpus::permute_answer_positions(q)) {
    // Reading cyclically from the correct option gives the original cycle.
    for (std::size_t i = 0; i < 5; ++i) {
      EXPECT_EQ(v.options[(v.correct_index + i) % 5], q.options[(q.correct_index + i) % 5]);
    }
  }
  EXPECT_EQ(corpus::permute_answer_positions(fixtures::mmcqa("two", 2, 1)).size(), 2u);
}

TEST(Neutralize, GoldenFile) {
  std::ifstream in(fixtures::data("neutralization_golden.jsonl"));
  std::string line;
  int cases = 0;
  while (std::getline(in, line)) {
    const auto j = json::parse(line);
    const auto options = j["options"].get<std::vector<std::string>>();
    const auto res = corpus::neutralize_explanation(j["explanation"].get<std::string>(), options,
                                                    j["correct_index"].get<std::size_t>(),
                                                    corpus::NeutralizationConfig::defaults(),
                                                    j["question"].get<std::string>());
    EXPECT_EQ(res.text, j["expected"].get<std::string>()) << j["id"];
    EXPECT_EQ(res.unresolved, j["unresolved"].get<std::vector<std::string>>()) << j["id"];
    ++cases;
  }
  EXPECT_EQ(cases, 10);
}

TEST(Neutralize, DeferredReferenceUsesQuestionNoun) {
  const std::vector<std::string> options = {"Apply a drug.", "Follow specific dietary measures.", "Wait."};
  const auto res = corpus::neutralize_explanation("so the most appropriate answer seems to be 2.", options, 1,
                                                  corpus::NeutralizationConfig::defaults(),
                                                  "Which is the most appropriate approach for her?");
  EXPECT_EQ(res.text, "so the most appropriate approach seems to be following specific dietary measures.");
  EXPECT_TRUE(res.unresolved.empty());
}

TEST(Neutralize, TextWithoutDigitsIsUnchanged) {
  const std::vector<std::string> options = {"A.", "B."};
  const std::string text = "Nothing positional here, only reasoning about the case.";
  const auto res = corpus::neutralize_explanation(text, options, 0);
  EXPECT_EQ(res.text, text);
  EXPECT_TRUE(res.unresolved.empty());
}

TEST(Neutralize, Idempotent) {
  std::ifstream in(fixtures::data("neutralization_golden.jsonl"));
  std::string line;
  while (std::getline(in, line)) {
    const auto j = json::parse(line);
    const auto options = j["options"].get<std::vector<std::string>>();
    const auto q = j["question"].get<std::string>();
    const auto cfg = corpus::NeutralizationConfig::defaults();
    const auto once = corpus::neutralize_explanation(j["explanation"].get<std::string>(), options, 0, cfg, q);
    const auto twice = corpus::neutralize_explanation(once.text, options, 0, cfg, q);
    EXPECT_EQ(once.text, twice.text) << j["id"];
  }
}

TEST(Neutralize, OverrideWins) {
  auto q = fixtures::mmcqa("q7");
  q.gold_explanation = "Answer 1 is right.";
  auto cfg = corpus::NeutralizationConfig::defaults();
  cfg.overrides["q7"] = "Manually rewritten.";
  EXPECT_EQ(corpus::neutralize_instance(q, cfg).text, "Manually rewritten.");
}

TEST(StratifiedSplit, SingleLabelTen) {
  std::vector<ProxyInstance> items;
  for (int i = 0; i < 10; ++i) items.push_back(fixtures::misinfo("m" + std::to_string(i), MisinfoLabel::Supported));
  const auto a = corpus::stratified_split(items, {0.5, 0.3, 0.2}, 1);
  EXPECT_EQ(a.sizes(), (std::array<std::size_t, 3>{5, 3, 2}));
}

TEST(StratifiedSplit, LargestRemainderFavoursTrain) {
  // 742 × (0.7, 0.15, 0.15) = (519.4, 111.3, 111.3): floors sum to 741 and the
  // spare item goes to the largest remainder.
  EXPECT_EQ(corpus::largest_remainder_sizes(742, {0.70, 0.15, 0.15}), (std::array<std::size_t, 3>{520, 111, 111}));
  // Equal remainders: earlier split first.
  EXPECT_EQ(corpus::largest_remainder_sizes(10, {0.35, 0.35, 0.30}), (std::array<std::size_t, 3>{4, 3, 3}));
}

TEST(StratifiedSplit, DeterministicAndStratified) {
  std::mt19937_64 gen(5);
  std::vector<ProxyInstance> items;
  for (int i = 0; i < 301; ++i) {
    items.push_back(fixtures::misinfo("m" + std::to_string(i), static_cast<MisinfoLabel>(gen() % 3)));
  }
  const corpus::SplitFractions fr{0.7, 0.15, 0.15};
  const auto a = corpus::stratified_split(items, fr, 42);
  const auto b = corpus::stratified_split(items, fr, 42);
  EXPECT_EQ(a.by_id, b.by_id);
  EXPECT_EQ(a.by_id.size(), items.size());
  EXPECT_EQ(a.sizes(), corpus::largest_remainder_sizes(items.size(), fr));

  std::map<std::string, std::array<double, 3>> counts;
  std::map<std::string, double> totals;
  for (const auto& inst : items) {
    const auto label = gold_label_token(inst);
    counts[label][static_cast<int>(a.by_id.at(instance_id(inst)))] += 1;
    totals[label] += 1;
  }
  const std::array<double, 3> f{fr.train, fr.dev, fr.test};
  for (const auto& [label, c] : counts) {
    for (int s = 0; s < 3; ++s) EXPECT_LE(std::abs(c[s] - f[s] * totals[label]), 1.0) << label << " split " << s;
  }
}

TEST(StratifiedSplit, Errors) {
  EXPECT_ERROR_CODE(corpus::stratified_split(std::vector<ProxyInstance>{}, {}, 1), ErrorCode::EmptyDataset);
  std::vector<ProxyInstance> one{fixtures::misinfo("m", MisinfoLabel::Refuted)};
  EXPECT_ERROR_CODE(corpus::stratified_split(one, {0.5, 0.5, 0.5}, 1), ErrorCode::BadFractions);
}

TEST(EvidenceSubset, KeepsSupportedAndRefutedInOrder) {
  std::vector<MisinfoInstance> in{fixtures::misinfo("s", MisinfoLabel::Supported),
                                  fixtures::misinfo("n", MisinfoLabel::NotEnoughEvidence),
                                  fixtures::misinfo("r", MisinfoLabel::Refuted)};
  const auto out = corpus::filter_evidence_subset(in);
  ASSERT_EQ(out.instances.size(), 2u);
  EXPECT_EQ(out.instances[0].id, "s");
  EXPECT_EQ(out.instances[1].id, "r");
  EXPECT_FALSE(out.warning);

  std::vector<MisinfoInstance> all_nee{fixtures::misinfo("n", MisinfoLabel::NotEnoughEvidence)};
  const auto empty = corpus::filter_evidence_subset(all_nee);
  EXPECT_TRUE(empty.instances.empty());
  EXPECT_TRUE(empty.warning);
}

TEST(EvidenceSubset, TestFixtureCount) {
  auto parsed = corpus::parse_dataset(fixtures::data("misinfo_test_112.jsonl"), TaskKind::Misinfo);
  ASSERT_EQ(parsed.instances.size(), 112u);
  std::vector<MisinfoInstance> m;
  for (const auto& i : parsed.instances) m.push_back(std::get<MisinfoInstance>(i));
  // 38 supported + 24 refuted, counted line by line in the fixture.
  EXPECT_EQ(corpus::filter_evidence_subset(m).instances.size(), 62u);
}

TEST(Arguments, RoundTripAndGeneratedRecords) {
  const auto dir = fixtures::temp_dir("args");
  std::vector<ArgumentVariant> args{make_gold_argument(fixtures::mmcqa("q1"))};
  corpus::write_arguments(dir / "a.jsonl", args);
  EXPECT_EQ(corpus::read_arguments(dir / "a.jsonl"), args);

  std::ofstream(dir / "gen.jsonl") << R"({"instance_id":"q1","provider_id":"gpt4","model_name":"m","text":"t"})" << "\n";
  const auto gen = corpus::read_arguments(dir / "gen.jsonl");
  ASSERT_EQ(gen.size(), 1u);
  EXPECT_EQ(gen[0].system_id, "gpt4");
  EXPECT_EQ(gen[0].source, SourceKind::Llm);
  std::filesystem::remove_all(dir);
}
