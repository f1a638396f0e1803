#include <gtest/gtest.h>

#include <atomic>
#include <functional>
#include <fstream>

#include "expect_error.hpp"
#include "fixtures.hpp"
#include "mock_server.hpp"
#include "proxyrank/genclient.hpp"

using namespace proxyrank;
using nlohmann::json;

namespace {

std::size_t count_of(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

// Answers with the user message it received.
class EchoEndpoint : public gen::ChatEndpoint {
 public:
  std::string complete(const gen::ChatRequest& r) override {
    ++calls;
    return "echo: " + r.prompt.user;
  }
  std::atomic<int> calls{0};
};

class ScriptedEndpoint : public gen::ChatEndpoint {
 public:
  explicit ScriptedEndpoint(std::function<std::string(const gen::ChatRequest&, int)> fn) : fn_(std::move(fn)) {}
  std::string complete(const gen::ChatRequest& r) override { return fn_(r, calls++); }
  std::atomic<int> calls{0};

 private:
  std::function<std::string(const gen::ChatRequest&, int)> fn_;
};

std::vector<ProxyInstance> misinfo_set(int n) {
  std::vector<ProxyInstance> out;
  for (int i = 0; i < n; ++i) out.push_back(fixtures::misinfo("m" + std::to_string(i), MisinfoLabel::Supported));
  return out;
}

gen::GenerationOptions options_for(const std::filesystem::path& out) {
  gen::GenerationOptions o;
  o.output = out;
  o.backoff_ms = 0;
  return o;
}

}  // namespace

TEST(GenerationParams, DefaultsAndValidation) {
  gen::GenerationParams p;
  EXPECT_EQ(p.max_new_tokens, 256);
  EXPECT_DOUBLE_EQ(p.temperature, 0.9);
  EXPECT_DOUBLE_EQ(p.top_p, 0.85);
  EXPECT_TRUE(p.sampling);
  p.top_p = 1.5;
  EXPECT_ERROR_CODE(p.validate(), ErrorCode::InvalidConfig);
  EXPECT_ERROR_CODE(gen::params_from_json({{"temperature", 0}}), ErrorCode::InvalidConfig);
  EXPECT_ERROR_CODE(gen::params_from_json({{"max_new_tokens", 0}}), ErrorCode::InvalidConfig);
}

TEST(Templates, DefaultsValidateAndCarryOneExemplar) {
  for (auto task : {TaskKind::Mmcqa, TaskKind::Misinfo, TaskKind::ClinicalNli}) {
    const auto t = gen::default_template(task);
    EXPECT_NO_THROW(t.validate());
    EXPECT_FALSE(t.exemplar.empty());
  }
  auto bad = gen::default_template(TaskKind::Misinfo);
  bad.user_text = "<question> {claim} <\\question>";
  EXPECT_ERROR_CODE(bad.validate(), ErrorCode::InvalidConfig);
}

TEST(BuildPrompt, MisinfoQuestionTag) {
  auto m = fixtures::misinfo("m", MisinfoLabel::Supported);
  m.claim = "Can X prevent Y?";
  const auto p = gen::build_prompt(gen::default_template(TaskKind::Misinfo), m);
  EXPECT_NE(p.user.find("<question> Can X prevent Y? <\\question>"), std::string::npos) << p.user;
  EXPECT_NE(p.system.find("<question>"), std::string::npos);  // the exemplar
}

TEST(BuildPrompt, MmcqaAnswerBlocks) {
  const auto t = gen::default_template(TaskKind::Mmcqa);
  const auto five = gen::build_prompt(t, fixtures::mmcqa("q", 5));
  EXPECT_EQ(count_of(five.user, "<ans>"), 5u);
  EXPECT_NE(five.user.find("<casequestion>"), std::string::npos);
  const auto four = gen::build_prompt(t, fixtures::mmcqa("q", 4));
  EXPECT_EQ(count_of(four.user, "<ans>"), 4u);
  EXPECT_EQ(five, gen::build_prompt(t, fixtures::mmcqa("q", 5)));
}

TEST(BuildPrompt, NliHypothesisAndEvidences) {
  const auto n = fixtures::nli("n", NliLabel::Entailment);
  const auto p = gen::build_prompt(gen::default_template(TaskKind::ClinicalNli), n);
  EXPECT_NE(p.user.find("<hypothesis> " + n.statement + " <\\hypothesis>"), std::string::npos);
  EXPECT_NE(p.user.find("<evidences> " + n.full_section + " <\\evidences>"), std::string::npos);
}

TEST(BuildPrompt, TaskMismatch) {
  EXPECT_ERROR_CODE(gen::build_prompt(gen::default_template(TaskKind::Mmcqa), fixtures::misinfo("m", MisinfoLabel::Refuted)),
                    ErrorCode::PlaceholderMissing);
}

TEST(ChatRequest, WireShapeAndFingerprint) {
  gen::GenerationParams params;
  params.seed = 7;
  const auto t = gen::default_template(TaskKind::Misinfo);
  gen::ChatRequest a{"model-x", gen::build_prompt(t, fixtures::misinfo("a", MisinfoLabel::Supported)), params};
  const auto wire = a.to_wire();
  EXPECT_EQ(wire["model"], "model-x");
  ASSERT_EQ(wire["messages"].size(), 2u);
  EXPECT_EQ(wire["messages"][0]["role"], "system");
  EXPECT_EQ(wire["messages"][1]["role"], "user");
  EXPECT_EQ(wire["max_tokens"], 256);
  EXPECT_DOUBLE_EQ(wire["temperature"].get<double>(), 0.9);
  EXPECT_DOUBLE_EQ(wire["top_p"].get<double>(), 0.85);
  EXPECT_EQ(wire["seed"], 7);
  gen::ChatRequest b{"model-x", gen::build_prompt(t, fixtures::misinfo("b", MisinfoLabel::Supported)), params};
  EXPECT_EQ(a.fingerprint(), gen::ChatRequest(a).fingerprint());
  EXPECT_NE(a.fingerprint(), b.fingerprint());
}

TEST(Generate, EchoBackendIsStableAcrossRuns) {
  const auto dir = fixtures::temp_dir("gen-echo");
  const auto instances = misinfo_set(3);
  auto echo = std::make_shared<EchoEndpoint>();
  std::vector<gen::Provider> providers{{"p", "m", echo}};
  const auto t = gen::default_template(TaskKind::Misinfo);
  const auto r1 = gen::generate(instances, t, {}, providers, options_for(dir / "a.jsonl"));
  const auto r2 = gen::generate(instances, t, {}, providers, options_for(dir / "b.jsonl"));
  ASSERT_EQ(r1.records.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(r1.records[i].text, "echo: " + gen::build_prompt(t, instances[i]).user);
    EXPECT_EQ(r1.records[i].request_fingerprint, r2.records[i].request_fingerprint);
  }
  // Bookkeeping is byte-identical; timestamps live in the sidecar.
  std::ifstream a(dir / "a.jsonl"), b(dir / "b.jsonl");
  EXPECT_EQ(std::string(std::istreambuf_iterator<char>(a), {}), std::string(std::istreambuf_iterator<char>(b), {}));
  EXPECT_TRUE(std::filesystem::exists(dir / "a.jsonl.meta.jsonl"));
  std::filesystem::remove_all(dir);
}

TEST(Generate, OneRecordPerInstanceAndProvider) {
  const auto dir = fixtures::temp_dir("gen-card");
  std::vector<gen::Provider> providers;
  for (auto id : {"gpt4", "openbiollm", "llama3"}) providers.push_back({id, id, std::make_shared<EchoEndpoint>()});
  auto opts = options_for(dir / "out.jsonl");
  opts.max_in_flight = 4;
  const auto r = gen::generate(misinfo_set(10), gen::default_template(TaskKind::Misinfo), {}, providers, opts);
  EXPECT_EQ(r.records.size(), 30u);
  EXPECT_TRUE(r.failed.empty());
  EXPECT_TRUE(std::is_sorted(r.records.begin(), r.records.end(), [](const auto& x, const auto& y) {
    return std::tie(x.instance_id, x.provider_id) < std::tie(y.instance_id, y.provider_id);
  }));
  std::filesystem::remove_all(dir);
}

TEST(Generate, EmptyCompletionIsReportedAsFailure) {
  const auto dir = fixtures::temp_dir("gen-empty");
  auto ep = std::make_shared<ScriptedEndpoint>([](const gen::ChatRequest& r, int) {
    return r.prompt.user.find("m1") != std::string::npos ? std::string("  ") : std::string("fine");
  });
  std::vector<gen::Provider> providers{{"p", "m", ep}};
  const auto r = gen::generate(misinfo_set(3), gen::default_template(TaskKind::Misinfo), {}, providers,
                               options_for(dir / "out.jsonl"));
  EXPECT_EQ(r.records.size(), 2u);
  ASSERT_EQ(r.failed.size(), 1u);
  EXPECT_EQ(r.failed[0].instance_id, "m1");
  EXPECT_EQ(r.failed[0].code, "EMPTY_COMPLETION");
  std::filesystem::remove_all(dir);
}

TEST(Generate, RateLimitIsRetried) {
  const auto dir = fixtures::temp_dir("gen-429");
  auto ep = std::make_shared<ScriptedEndpoint>([](const gen::ChatRequest&, int call) -> std::string {
    if (call < 2) throw Error(ErrorCode::RateLimited, "slow down");
    return "ok";
  });
  std::vector<gen::Provider> providers{{"p", "m", ep}};
  auto opts = options_for(dir / "out.jsonl");
  opts.max_in_flight = 1;
  const auto r = gen::generate(misinfo_set(1), gen::default_template(TaskKind::Misinfo), {}, providers, opts);
  EXPECT_EQ(r.records.size(), 1u);
  EXPECT_EQ(ep->calls.load(), 3);
  std::filesystem::remove_all(dir);
}

TEST(Generate, ResumeAfterCrashMatchesUninterruptedRun) {
  const auto dir = fixtures::temp_dir("gen-resume");
  const auto instances = misinfo_set(8);
  const auto t = gen::default_template(TaskKind::Misinfo);
  std::vector<gen::Provider> good{{"p", "m", std::make_shared<EchoEndpoint>()}, {"q", "m", std::make_shared<EchoEndpoint>()}};
  const auto reference = gen::generate(instances, t, {}, good, options_for(dir / "ref.jsonl"));

  // Dies (a non-library exception) after five completions.
  auto crashing = std::make_shared<ScriptedEndpoint>([](const gen::ChatRequest& r, int call) -> std::string {
    if (call >= 5) throw std::runtime_error("process killed");
    return "echo: " + r.prompt.user;
  });
  std::vector<gen::Provider> flaky{{"p", "m", crashing}, {"q", "m", crashing}};
  auto opts = options_for(dir / "run.jsonl");
  opts.max_in_flight = 1;
  EXPECT_THROW(gen::generate(instances, t, {}, flaky, opts), std::runtime_error);
  EXPECT_TRUE(std::filesystem::exists(dir / "run.jsonl.partial"));

  auto echo = std::make_shared<EchoEndpoint>();
  std::vector<gen::Provider> resumed{{"p", "m", echo}, {"q", "m", echo}};
  opts.resume = true;
  const auto r = gen::generate(instances, t, {}, resumed, opts);
  EXPECT_EQ(echo->calls.load(), 16 - 5);
  ASSERT_EQ(r.records.size(), reference.records.size());
  for (std::size_t i = 0; i < r.records.size(); ++i) {
    EXPECT_EQ(r.records[i].instance_id, reference.records[i].instance_id);
    EXPECT_EQ(r.records[i].provider_id, reference.records[i].provider_id);
    EXPECT_EQ(r.records[i].text, reference.records[i].text);
    EXPECT_EQ(r.records[i].request_fingerprint, reference.records[i].request_fingerprint);
  }
  std::filesystem::remove_all(dir);
}

TEST(Generate, NliExtractionsAreVerified) {
  const auto dir = fixtures::temp_dir("gen-nli");
  const auto n = fixtures::nli("n", NliLabel::Entailment);
  auto ep = std::make_shared<ScriptedEndpoint>(
      [](const gen::ChatRequest&, int) { return std::string("Total: 10/100 ** Invented finding 3/9"); });
  std::vector<gen::Provider> providers{{"p", "m", ep}};
  std::vector<ProxyInstance> instances{n};
  const auto r = gen::generate(instances, gen::default_template(TaskKind::ClinicalNli), {}, providers,
                               options_for(dir / "out.jsonl"));
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_TRUE(r.records[0].flagged);
  EXPECT_EQ(r.records[0].unverified_segments, std::vector<std::string>{"Invented finding 3/9"});
  std::filesystem::remove_all(dir);
}

TEST(HttpChat, WireContractAndStatusMapping) {
  testing_support::MockServer server;
  std::atomic<int> hits{0};
  server.post("/chat", [&](const json& body) {
    ++hits;
    if (body["messages"][1]["content"].get<std::string>().find("limit") != std::string::npos) {
      return testing_support::Reply{429, {{"error", "busy"}}};
    }
    if (body["model"] == "broken") return testing_support::Reply{500, {{"error", "boom"}}};
    return testing_support::Reply{200, {{"content", "model said " + body["model"].get<std::string>()}}};
  });
  server.start();
  gen::HttpChatEndpoint ep(http::Endpoint{server.url(), 2000, 1, 0, {}});
  gen::ChatRequest req{"m1", {"sys", "user"}, {}};
  EXPECT_EQ(ep.complete(req), "model said m1");
  req.prompt.user = "limit";
  EXPECT_ERROR_CODE(ep.complete(req), ErrorCode::RateLimited);
  req.prompt.user = "user";
  req.model = "broken";
  EXPECT_ERROR_CODE(ep.complete(req), ErrorCode::EndpointError);
}
