#include "proxyrank/annotate.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numeric>

#include "proxyrank/rng.hpp"
#include "proxyrank/text.hpp"

namespace proxyrank::annotate {

using nlohmann::json;

namespace {

constexpr const char* kEventsFile = "events.jsonl";
constexpr const char* kSnapshotFile = "snapshot.json";

json grades_json(const std::map<std::string, int>& grades) {
  json g = json::object();
  for (const auto& [slot, v] : grades) g[slot] = v;
  return g;
}

}  // namespace

std::string_view to_token(Phase p) noexcept { return p == Phase::Calibration ? "calibration" : "full"; }
std::string_view to_token(Status s) noexcept { return s == Status::Open ? "open" : "closed"; }

std::optional<Phase> parse_phase(std::string_view token) noexcept {
  if (token == "calibration") return Phase::Calibration;
  if (token == "full") return Phase::Full;
  return std::nullopt;
}

std::string slot_name(std::size_t i) { return "s" + std::to_string(i + 1); }

const SessionItem* Session::find_item(const std::string& item_id) const {
  for (const auto& it : items) {
    if (it.spec.item_id == item_id) return &it;
  }
  return nullptr;
}

bool Session::completed_by(const std::string& annotator) const {
  for (const auto& it : items) {
    if (!grades.count({annotator, it.spec.item_id})) return false;
  }
  return true;
}

json to_json(const Session& s) {
  json items = json::array();
  for (const auto& it : s.items) {
    json cands = json::array();
    for (const auto& c : it.spec.candidates) cands.push_back({{"system_id", c.system_id}, {"text", c.text}});
    items.push_back({{"item_id", it.spec.item_id}, {"fields", it.spec.fields}, {"candidates", cands},
                     {"slot_order", it.slot_order}});
  }
  json grades = json::array();
  for (const auto& [key, rec] : s.grades) {
    grades.push_back({{"annotator_id", key.first}, {"item_id", key.second}, {"version", rec.version},
                      {"grades", grades_json(rec.grades)}});
  }
  return {{"session_id", s.session_id}, {"task", to_token(s.task)}, {"phase", to_token(s.phase)},
          {"seed", s.seed},             {"annotators", s.annotators}, {"status", to_token(s.status)},
          {"items", items},             {"grades", grades}};
}

Session session_from_json(const json& j) {
  Session s;
  s.session_id = j.at("session_id").get<std::string>();
  s.task = parse_task(j.at("task").get<std::string>()).value();
  s.phase = parse_phase(j.at("phase").get<std::string>()).value();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.annotators = j.at("annotators").get<std::vector<std::string>>();
  s.status = j.at("status").get<std::string>() == "closed" ? Status::Closed : Status::Open;
  for (const auto& it : j.at("items")) {
    SessionItem item;
    item.spec.item_id = it.at("item_id").get<std::string>();
    item.spec.fields = it.value("fields", std::map<std::string, std::string>{});
    for (const auto& c : it.at("candidates")) {
      item.spec.candidates.push_back({c.at("system_id").get<std::string>(), c.at("text").get<std::string>()});
    }
    item.slot_order = it.at("slot_order").get<std::vector<std::size_t>>();
    s.items.push_back(std::move(item));
  }
  for (const auto& g : j.value("grades", json::array())) {
    s.grades[{g.at("annotator_id").get<std::string>(), g.at("item_id").get<std::string>()}] =
        GradeRecord{g.at("version").get<int>(), g.at("grades").get<std::map<std::string, int>>()};
  }
  return s;
}

AnnotationStore::AnnotationStore(std::filesystem::path dir, StoreOptions options)
    : dir_(std::move(dir)), options_(options) {
  if (dir_.empty()) return;
  std::filesystem::create_directories(dir_);
  std::uint64_t snapshot_seq = 0;
  if (std::ifstream in(dir_ / kSnapshotFile); in) {
    auto snap = json::parse(in, nullptr, false);
    if (snap.is_discarded()) throw Error(ErrorCode::Io, "snapshot is corrupt");
    snapshot_seq = snap.at("seq").get<std::uint64_t>();
    for (const auto& sj : snap.at("sessions")) {
      auto s = session_from_json(sj);
      sessions_[s.session_id] = std::move(s);
    }
    seq_ = snapshot_seq;
  }
  std::ifstream events(dir_ / kEventsFile);
  std::string line;
  while (std::getline(events, line)) {
    if (text::trim(line).empty()) continue;
    auto ev = json::parse(line, nullptr, false);
    // A torn last line means the write never completed; the caller was not
    // told it succeeded, so it is dropped.
    if (ev.is_discarded()) break;
    const auto seq = ev.at("seq").get<std::uint64_t>();
    if (seq <= snapshot_seq) continue;
    apply(ev);
    seq_ = seq;
  }
}

void AnnotationStore::set_catalog(std::set<std::string> item_ids) {
  std::unique_lock lock(mutex_);
  catalog_ = std::move(item_ids);
}

void AnnotationStore::apply(const json& ev) {
  const auto type = ev.at("type").get<std::string>();
  if (type == "session_created") {
    auto s = session_from_json(ev.at("session"));
    sessions_[s.session_id] = std::move(s);
  } else if (type == "grades_submitted") {
    auto& s = mutable_session(ev.at("session_id").get<std::string>());
    s.grades[{ev.at("annotator_id").get<std::string>(), ev.at("item_id").get<std::string>()}] =
        GradeRecord{ev.at("version").get<int>(), ev.at("grades").get<std::map<std::string, int>>()};
  } else if (type == "session_closed") {
    mutable_session(ev.at("session_id").get<std::string>()).status = Status::Closed;
  } else {
    throw Error(ErrorCode::Io, "unknown event type " + type);
  }
}

void AnnotationStore::append_event(const json& event) {
  // Caller holds the unique lock; the event is durable before it is applied.
  json ev = event;
  ev["seq"] = seq_ + 1;
  if (!dir_.empty()) {
    std::ofstream out(dir_ / kEventsFile, std::ios::app | std::ios::binary);
    out << ev.dump() << '\n';
    out.flush();
    if (!out) throw Error(ErrorCode::Io, "cannot append to the event log");
  }
  apply(ev);
  ++seq_;
  if (!dir_.empty() && options_.snapshot_every > 0 && ++events_since_snapshot_ >= options_.snapshot_every) {
    write_snapshot();
    events_since_snapshot_ = 0;
  }
}

void AnnotationStore::write_snapshot() {
  json sessions = json::array();
  for (const auto& [id, s] : sessions_) sessions.push_back(to_json(s));
  const auto tmp = dir_ / (std::string(kSnapshotFile) + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << json{{"seq", seq_}, {"sessions", sessions}}.dump() << '\n';
  }
  std::filesystem::rename(tmp, dir_ / kSnapshotFile);
}

Session& AnnotationStore::mutable_session(const std::string& id) {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorCode::UnknownSession, "no session " + id);
  return it->second;
}

const Session& AnnotationStore::find_session(const std::string& id) const {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorCode::UnknownSession, "no session " + id);
  return it->second;
}

Session AnnotationStore::create_session(const SessionRequest& request) {
  if (request.annotators.empty()) throw Error(ErrorCode::EmptyRoster, "a session needs at least one annotator");
  std::set<std::string> roster(request.annotators.begin(), request.annotators.end());
  if (roster.size() != request.annotators.size()) throw Error(ErrorCode::InvalidConfig, "duplicate annotator");
  if (request.items.empty()) throw Error(ErrorCode::InvalidConfig, "a session needs items");
  if (request.phase == Phase::Calibration && request.items.size() < kMinCalibrationItems) {
    throw Error(ErrorCode::InvalidConfig,
                "a calibration round needs at least " + std::to_string(kMinCalibrationItems) + " items");
  }

  std::unique_lock lock(mutex_);
  std::set<std::string> seen;
  for (const auto& it : request.items) {
    if (catalog_ && !catalog_->count(it.item_id)) throw Error(ErrorCode::UnknownItem, "unknown item " + it.item_id);
    if (!seen.insert(it.item_id).second) throw Error(ErrorCode::InvalidConfig, "duplicate item " + it.item_id);
    if (it.candidates.empty()) throw Error(ErrorCode::InvalidConfig, "item " + it.item_id + " has no candidates");
    std::set<std::string> systems;
    for (const auto& c : it.candidates) {
      if (!systems.insert(c.system_id).second) {
        throw Error(ErrorCode::InvalidConfig, "duplicate system " + c.system_id + " in item " + it.item_id);
      }
    }
  }

  Session s;
  char id[32];
  std::snprintf(id, sizeof id, "session-%04zu", sessions_.size() + 1);
  s.session_id = id;
  s.task = request.task;
  s.phase = request.phase;
  s.seed = request.seed;
  s.annotators = request.annotators;
  Rng rng(request.seed);
  for (const auto& spec : request.items) {
    SessionItem item{spec, std::vector<std::size_t>(spec.candidates.size())};
    std::iota(item.slot_order.begin(), item.slot_order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(item.slot_order));
    s.items.push_back(std::move(item));
  }
  append_event({{"type", "session_created"}, {"session", to_json(s)}});
  return s;
}

Session AnnotationStore::session(const std::string& session_id) const {
  std::shared_lock lock(mutex_);
  return find_session(session_id);
}

std::vector<std::string> AnnotationStore::session_ids() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, s] : sessions_) out.push_back(id);
  return out;
}

json AnnotationStore::session_summary(const std::string& session_id) const {
  std::shared_lock lock(mutex_);
  const auto& s = find_session(session_id);
  json items = json::array();
  for (const auto& it : s.items) items.push_back({{"item_id", it.spec.item_id}, {"slots", it.slot_order.size()}});
  json progress = json::object();
  for (const auto& a : s.annotators) {
    std::size_t done = 0;
    for (const auto& it : s.items) done += s.grades.count({a, it.spec.item_id});
    progress[a] = done;
  }
  return {{"session_id", s.session_id}, {"task", to_token(s.task)}, {"phase", to_token(s.phase)},
          {"status", to_token(s.status)}, {"annotators", s.annotators}, {"items", items},
          {"progress", progress}};
}

json AnnotationStore::item_view(const std::string& session_id, const std::string& item_id,
                                const std::string& annotator_id) const {
  std::shared_lock lock(mutex_);
  const auto& s = find_session(session_id);
  if (std::find(s.annotators.begin(), s.annotators.end(), annotator_id) == s.annotators.end()) {
    throw Error(ErrorCode::UnknownAnnotator, "annotator " + annotator_id + " is not on the roster");
  }
  const auto* item = s.find_item(item_id);
  if (!item) throw Error(ErrorCode::UnknownItem, "no item " + item_id + " in " + session_id);
  json slots = json::array();
  for (std::size_t i = 0; i < item->slot_order.size(); ++i) {
    slots.push_back({{"slot", slot_name(i)}, {"text", item->spec.candidates[item->slot_order[i]].text}});
  }
  json out{{"session_id", s.session_id}, {"item_id", item_id},  {"task", to_token(s.task)},
           {"phase", to_token(s.phase)},  {"status", to_token(s.status)}, {"fields", item->spec.fields},
           {"slots", slots}};
  auto g = s.grades.find({annotator_id, item_id});
  if (g != s.grades.end()) {
    out["grades"] = grades_json(g->second.grades);
    out["version"] = g->second.version;
  } else {
    out["grades"] = nullptr;
    out["version"] = 0;
  }
  return out;
}

int AnnotationStore::submit_grades(const GradeSubmission& sub) {
  std::unique_lock lock(mutex_);
  const auto& s = find_session(sub.session_id);
  if (s.status == Status::Closed) throw Error(ErrorCode::SessionClosed, sub.session_id + " is closed");
  if (std::find(s.annotators.begin(), s.annotators.end(), sub.annotator_id) == s.annotators.end()) {
    throw Error(ErrorCode::UnknownAnnotator, "annotator " + sub.annotator_id + " is not on the roster");
  }
  const auto* item = s.find_item(sub.item_id);
  if (!item) throw Error(ErrorCode::UnknownItem, "no item " + sub.item_id + " in " + sub.session_id);
  if (sub.version < 1) throw Error(ErrorCode::InvalidField, "versions start at 1");
  auto prev = s.grades.find({sub.annotator_id, sub.item_id});
  if (prev != s.grades.end() && sub.version <= prev->second.version) {
    throw Error(ErrorCode::StaleVersion, "version " + std::to_string(sub.version) + " is not newer than " +
                                             std::to_string(prev->second.version));
  }
  for (const auto& [slot, g] : sub.grades) {
    bool known = false;
    for (std::size_t i = 0; i < item->slot_order.size() && !known; ++i) known = slot_name(i) == slot;
    if (!known) throw Error(ErrorCode::InvalidField, "item has no slot " + slot);
    if (g < 1 || g > 5) throw Error(ErrorCode::GradeOutOfRange, "grade " + std::to_string(g) + " for " + slot);
  }
  if (sub.grades.size() != item->slot_order.size()) {
    throw Error(ErrorCode::IncompleteGrades, "every slot needs a grade");
  }
  append_event({{"type", "grades_submitted"},
                {"session_id", sub.session_id},
                {"annotator_id", sub.annotator_id},
                {"item_id", sub.item_id},
                {"version", sub.version},
                {"grades", grades_json(sub.grades)}});
  return sub.version;
}

void AnnotationStore::close(const std::string& session_id) {
  std::unique_lock lock(mutex_);
  const auto& s = find_session(session_id);
  if (s.status == Status::Closed) throw Error(ErrorCode::SessionClosed, session_id + " is already closed");
  append_event({{"type", "session_closed"}, {"session_id", session_id}});
}

stats::AlphaResult AnnotationStore::compute_ita(const std::string& session_id) {
  std::unique_lock lock(mutex_);
  const auto& s = find_session(session_id);
  std::vector<stats::HumanGradeSheet> sheets;
  for (const auto& a : s.annotators) {
    if (!s.completed_by(a)) continue;
    stats::HumanGradeSheet sheet{a, {}};
    for (const auto& it : s.items) {
      for (const auto& [slot, g] : s.grades.at({a, it.spec.item_id}).grades) sheet.grades[{it.spec.item_id, slot}] = g;
    }
    sheets.push_back(std::move(sheet));
  }
  if (sheets.size() < 2) {
    throw Error(ErrorCode::IncompleteCalibration, "fewer than two annotators have graded every item");
  }
  json key = json::array();
  for (const auto& sh : sheets) key.push_back(stats::to_json(sh));
  const auto hash = text::sha256_hex(key.dump());
  if (auto c = ita_cache_.find(session_id); c != ita_cache_.end() && c->second.first == hash) {
    ++ita_hits_;
    return c->second.second;
  }
  auto res = stats::krippendorff_alpha(sheets, stats::AlphaMetric::Ordinal);
  ita_cache_[session_id] = {hash, res};
  return res;
}

std::size_t AnnotationStore::ita_cache_hits() const {
  std::shared_lock lock(mutex_);
  return ita_hits_;
}

std::vector<stats::HumanGradeSheet> AnnotationStore::export_sheets(const std::string& session_id) const {
  std::shared_lock lock(mutex_);
  const auto& s = find_session(session_id);
  if (s.status == Status::Open) throw Error(ErrorCode::SessionOpen, session_id + " is still open");
  std::vector<stats::HumanGradeSheet> out;
  for (const auto& a : s.annotators) {
    stats::HumanGradeSheet sheet{a, {}};
    for (const auto& it : s.items) {
      auto g = s.grades.find({a, it.spec.item_id});
      if (g == s.grades.end()) continue;
      for (std::size_t i = 0; i < it.slot_order.size(); ++i) {
        const auto& system = it.spec.candidates[it.slot_order[i]].system_id;
        sheet.grades[{it.spec.item_id, system}] = g->second.grades.at(slot_name(i));
      }
    }
    if (!sheet.grades.empty()) out.push_back(std::move(sheet));
  }
  return out;
}

}  // namespace proxyrank::annotate
