#include <gtest/gtest.h>

#include "expect_error.hpp"
#include "fixtures.hpp"
#include "mock_server.hpp"
#include "proxyrank/annotate.hpp"

using namespace proxyrank;
using namespace proxyrank::annotate;
using nlohmann::json;

namespace {

const std::vector<std::string> kSystems{"gold", "gpt4", "openbiollm", "llama3"};

SessionRequest calibration(std::size_t items = 5, std::uint64_t seed = 42) {
  SessionRequest r;
  r.task = TaskKind::Misinfo;
  r.seed = seed;
  r.annotators = {"ann-a", "ann-b"};
  for (std::size_t i = 0; i < items; ++i) {
    ItemSpec spec;
    spec.item_id = "item-" + std::to_string(i);
    spec.fields["question"] = "Question " + std::to_string(i);
    for (const auto& s : kSystems) spec.candidates.push_back({s, "Argument by " + s + " for item " + std::to_string(i)});
    r.items.push_back(spec);
  }
  return r;
}

// Grade for the candidate in a slot; the slot's system decides it so both
// annotators agree up to `offset`.
std::map<std::string, int> grades_by_system(const Session& s, std::size_t item, int offset) {
  std::map<std::string, int> out;
  const auto& it = s.items[item];
  for (std::size_t i = 0; i < it.slot_order.size(); ++i) {
    const auto sys = it.spec.candidates[it.slot_order[i]].system_id;
    const int base = static_cast<int>(std::find(kSystems.begin(), kSystems.end(), sys) - kSystems.begin()) + 1;
    out[slot_name(i)] = std::clamp(base + offset, 1, 5);
  }
  return out;
}

void grade_everything(AnnotationStore& store, const Session& s) {
  for (std::size_t i = 0; i < s.items.size(); ++i) {
    store.submit_grades({s.session_id, "ann-a", s.items[i].spec.item_id, grades_by_system(s, i, 0), 1});
    store.submit_grades({s.session_id, "ann-b", s.items[i].spec.item_id, grades_by_system(s, i, i % 2 ? 1 : 0), 1});
  }
}

bool mentions_system(const std::string& payload) {
  for (const auto& s : kSystems) {
    // Candidate texts quote the system name; only look at the keys and ids.
    if (payload.find("\"" + s + "\"") != std::string::npos) return true;
  }
  return payload.find("system_id") != std::string::npos;
}

}  // namespace

TEST(Store, CreateAndBlindDeterministically) {
  AnnotationStore a, b;
  const auto s1 = a.create_session(calibration());
  const auto s2 = b.create_session(calibration());
  EXPECT_EQ(s1.session_id, "session-0001");
  ASSERT_EQ(s1.items.size(), 5u);
  bool any_shuffled = false;
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(s1.items[i].slot_order, s2.items[i].slot_order);
    auto sorted = s1.items[i].slot_order;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(sorted, (std::vector<std::size_t>{0, 1, 2, 3}));
    any_shuffled |= sorted != s1.items[i].slot_order;
  }
  EXPECT_TRUE(any_shuffled);
}

TEST(Store, RequestValidation) {
  AnnotationStore store;
  auto r = calibration();
  r.annotators.clear();
  EXPECT_ERROR_CODE(store.create_session(r), ErrorCode::EmptyRoster);
  EXPECT_ERROR_CODE(store.create_session(calibration(1)), ErrorCode::InvalidConfig);
  store.set_catalog({"item-0", "item-1"});
  EXPECT_ERROR_CODE(store.create_session(calibration(3)), ErrorCode::UnknownItem);
  EXPECT_NO_THROW(store.create_session(calibration(2)));
  EXPECT_ERROR_CODE(store.session("session-9999"), ErrorCode::UnknownSession);
}

TEST(Store, SubmissionRules) {
  AnnotationStore store;
  const auto s = store.create_session(calibration());
  const auto id = s.session_id;
  // Ties are allowed.
  const std::map<std::string, int> tied{{"s1", 2}, {"s2", 2}, {"s3", 2}, {"s4", 5}};
  EXPECT_EQ(store.submit_grades({id, "ann-a", "item-0", tied, 1}), 1);
  EXPECT_ERROR_CODE(store.submit_grades({id, "ann-a", "item-0", tied, 1}), ErrorCode::StaleVersion);
  EXPECT_EQ(store.submit_grades({id, "ann-a", "item-0", tied, 2}), 2);
  auto six = tied;
  six["s1"] = 6;
  EXPECT_ERROR_CODE(store.submit_grades({id, "ann-a", "item-1", six, 1}), ErrorCode::GradeOutOfRange);
  EXPECT_ERROR_CODE(store.submit_grades({id, "ann-a", "item-1", {{"s1", 1}}, 1}), ErrorCode::IncompleteGrades);
  EXPECT_ERROR_CODE(store.submit_grades({id, "ann-a", "item-99", tied, 1}), ErrorCode::UnknownItem);
  EXPECT_ERROR_CODE(store.submit_grades({id, "stranger", "item-1", tied, 1}), ErrorCode::UnknownAnnotator);
  store.close(id);
  EXPECT_ERROR_CODE(store.submit_grades({id, "ann-a", "item-1", tied, 1}), ErrorCode::SessionClosed);
}

TEST(Store, ItaAndExport) {
  AnnotationStore store;
  const auto s = store.create_session(calibration());
  EXPECT_ERROR_CODE(store.compute_ita(s.session_id), ErrorCode::IncompleteCalibration);
  grade_everything(store, s);
  const auto ita = store.compute_ita(s.session_id);
  EXPECT_EQ(ita.n_raters, 2u);
  EXPECT_EQ(ita.n_units, 20u);
  EXPECT_GT(ita.alpha, 0.5);
  EXPECT_LT(ita.alpha, 1.0);
  store.compute_ita(s.session_id);
  EXPECT_EQ(store.ita_cache_hits(), 1u);

  EXPECT_ERROR_CODE(store.export_sheets(s.session_id), ErrorCode::SessionOpen);
  store.close(s.session_id);
  const auto sheets = store.export_sheets(s.session_id);
  ASSERT_EQ(sheets.size(), 2u);
  // De-blinding recovers system-keyed grades regardless of slot order.
  for (std::size_t i = 0; i < 5; ++i) {
    const auto item = "item-" + std::to_string(i);
    EXPECT_EQ(sheets[0].grades.at({item, "gold"}), 1);
    EXPECT_EQ(sheets[0].grades.at({item, "llama3"}), 4);
  }
  // The exported sheets give the same alpha as the session panel.
  EXPECT_NEAR(stats::krippendorff_alpha(sheets).alpha, ita.alpha, 1e-9);
}

TEST(Store, BlindedViewsHideSystems) {
  AnnotationStore store;
  const auto s = store.create_session(calibration());
  EXPECT_FALSE(mentions_system(store.session_summary(s.session_id).dump()));
  const auto view = store.item_view(s.session_id, "item-0", "ann-a");
  EXPECT_FALSE(mentions_system(view.dump()));
  ASSERT_EQ(view["slots"].size(), 4u);
  EXPECT_EQ(view["slots"][0]["slot"], "s1");
  EXPECT_TRUE(view["grades"].is_null());
}

TEST(Store, EventLogReplay) {
  const auto dir = fixtures::temp_dir("annotate");
  std::string id;
  std::vector<stats::HumanGradeSheet> before;
  {
    AnnotationStore store(dir, StoreOptions{3});
    const auto s = store.create_session(calibration());
    id = s.session_id;
    grade_everything(store, s);
    store.close(id);
    before = store.export_sheets(id);
  }
  AnnotationStore reopened(dir);
  EXPECT_EQ(reopened.session_ids(), std::vector<std::string>{id});
  EXPECT_EQ(reopened.session(id).status, Status::Closed);
  EXPECT_EQ(reopened.export_sheets(id), before);
  std::filesystem::remove_all(dir);
}

TEST(Server, RestRoundTrip) {
  using testing_support::http_get;
  using testing_support::http_post;
  AnnotationStore store;
  AnnotateServer server(store);
  const int port = server.start("127.0.0.1", 0);
  ASSERT_GT(port, 0);
  const auto base = "http://127.0.0.1:" + std::to_string(port);

  json req{{"task", "misinfo"}, {"seed", 7}, {"annotators", {"ann-a", "ann-b"}}, {"items", json::array()}};
  for (int i = 0; i < 3; ++i) {
    json item{{"item_id", "item-" + std::to_string(i)}, {"fields", {{"question", "Q"}}}, {"candidates", json::array()}};
    for (const auto& s : kSystems) item["candidates"].push_back({{"system_id", s}, {"text", "text " + s}});
    req["items"].push_back(item);
  }
  const auto created = http_post(base, "/sessions", req);
  ASSERT_EQ(created.status, 201) << created.body.dump();
  const auto id = created.body["session_id"].get<std::string>();
  EXPECT_FALSE(mentions_system(created.body.dump()));

  const auto item = http_get(base, "/sessions/" + id + "/items/item-0?annotator=ann-a");
  ASSERT_EQ(item.status, 200);
  EXPECT_FALSE(mentions_system(item.body.dump()));
  EXPECT_EQ(http_get(base, "/sessions/" + id + "/items/item-0").status, 400);
  EXPECT_EQ(http_get(base, "/sessions/nope").status, 404);
  EXPECT_EQ(http_get(base, "/sessions/" + id + "/items/ghost?annotator=ann-a").status, 404);

  const json grades{{"s1", 1}, {"s2", 2}, {"s3", 3}, {"s4", 4}};
  for (const auto* who : {"ann-a", "ann-b"}) {
    for (int i = 0; i < 3; ++i) {
      const auto r = http_post(base, "/sessions/" + id + "/items/item-" + std::to_string(i) + "/grades",
                               {{"annotator_id", who}, {"version", 1}, {"grades", grades}});
      EXPECT_EQ(r.status, 200) << r.body.dump();
    }
  }
  const auto stale = http_post(base, "/sessions/" + id + "/items/item-0/grades",
                               {{"annotator_id", "ann-a"}, {"version", 1}, {"grades", grades}});
  EXPECT_EQ(stale.status, 409);
  EXPECT_EQ(stale.body["error"], "STALE_VERSION");
  EXPECT_EQ(http_post(base, "/sessions/" + id + "/items/item-0/grades",
                      {{"annotator_id", "mallory"}, {"version", 1}, {"grades", grades}})
                .status,
            403);

  const auto ita = http_get(base, "/sessions/" + id + "/ita");
  ASSERT_EQ(ita.status, 200);
  EXPECT_NEAR(ita.body["alpha"].get<double>(), 1.0, 1e-12);

  EXPECT_EQ(http_get(base, "/sessions/" + id + "/export").status, 409);
  EXPECT_EQ(http_post(base, "/sessions/" + id + "/close", json::object()).status, 200);
  const auto exported = http_get(base, "/sessions/" + id + "/export");
  ASSERT_EQ(exported.status, 200);
  EXPECT_EQ(exported.body["sheets"].size(), 2u);
  server.stop();
}
