#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "proxyrank/error.hpp"
#include "proxyrank/stats.hpp"
#include "proxyrank/types.hpp"

namespace proxyrank::annotate {

enum class Phase { Calibration, Full };
enum class Status { Open, Closed };

std::string_view to_token(Phase p) noexcept;
std::string_view to_token(Status s) noexcept;
std::optional<Phase> parse_phase(std::string_view token) noexcept;

struct Candidate {
  std::string system_id;
  std::string text;
};

struct ItemSpec {
  std::string item_id;
  // Instance fields shown to the annotator (question, case, ...).
  std::map<std::string, std::string> fields;
  std::vector<Candidate> candidates;
};

struct SessionRequest {
  TaskKind task = TaskKind::Mmcqa;
  Phase phase = Phase::Calibration;
  std::vector<ItemSpec> items;
  std::uint64_t seed = 0;
  std::vector<std::string> annotators;
};

/// Latest accepted grades of one annotator for one item, keyed by slot.
struct GradeRecord {
  int version = 0;
  std::map<std::string, int> grades;
};

struct SessionItem {
  ItemSpec spec;
  // slot_order[i] is the candidate shown in slot "s<i+1>".
  std::vector<std::size_t> slot_order;
};

struct Session {
  std::string session_id;
  TaskKind task = TaskKind::Mmcqa;
  Phase phase = Phase::Calibration;
  std::uint64_t seed = 0;
  std::vector<std::string> annotators;
  std::vector<SessionItem> items;
  Status status = Status::Open;
  // (annotator, item) -> latest grades.
  std::map<std::pair<std::string, std::string>, GradeRecord> grades;

  const SessionItem* find_item(const std::string& item_id) const;
  bool completed_by(const std::string& annotator) const;
};

struct GradeSubmission {
  std::string session_id;
  std::string annotator_id;
  std::string item_id;
  std::map<std::string, int> grades;
  int version = 0;
};

/// Slot name of position i: "s1", "s2", ...
std::string slot_name(std::size_t i);

/// Calibration rounds need at least this many items.
inline constexpr std::size_t kMinCalibrationItems = 2;
inline constexpr std::size_t kDefaultCalibrationItems = 5;

struct StoreOptions {
  // Write a snapshot after this many events; 0 disables snapshots.
  std::size_t snapshot_every = 50;
};

/// Session store with an append-only JSON-lines event log (`events.jsonl`)
/// and periodic snapshots (`snapshot.json`) under a directory. An empty
/// directory path keeps everything in memory. Readers share a lock; writers
/// are serialized and persist before returning.
class AnnotationStore {
 public:
  explicit AnnotationStore(std::filesystem::path dir = {}, StoreOptions options = {});

  /// Restricts sessions to known item ids; UNKNOWN_ITEM otherwise.
  void set_catalog(std::set<std::string> item_ids);

  /// Throws UNKNOWN_ITEM, EMPTY_ROSTER or INVALID_CONFIG.
  Session create_session(const SessionRequest& request);

  /// Full state, including the slot → system mapping. Throws UNKNOWN_SESSION.
  Session session(const std::string& session_id) const;
  std::vector<std::string> session_ids() const;

  /// Annotator-facing summary without any system identifiers.
  nlohmann::json session_summary(const std::string& session_id) const;

  /// Blinded item payload: fields, slot texts, the annotator's current grades.
  nlohmann::json item_view(const std::string& session_id, const std::string& item_id,
                           const std::string& annotator_id) const;

  /// Returns the accepted version. Throws SESSION_CLOSED, UNKNOWN_ANNOTATOR,
  /// UNKNOWN_ITEM, STALE_VERSION, GRADE_OUT_OF_RANGE, INCOMPLETE_GRADES.
  int submit_grades(const GradeSubmission& submission);

  void close(const std::string& session_id);

  /// Ordinal alpha over (item, slot) units from annotators who graded every
  /// item. Throws INCOMPLETE_CALIBRATION with fewer than two such annotators.
  stats::AlphaResult compute_ita(const std::string& session_id);
  std::size_t ita_cache_hits() const;

  /// De-blinded sheets keyed by (item_id, system_id). Throws SESSION_OPEN.
  std::vector<stats::HumanGradeSheet> export_sheets(const std::string& session_id) const;

 private:
  void append_event(const nlohmann::json& event);
  void apply(const nlohmann::json& event);
  void write_snapshot();
  Session& mutable_session(const std::string& id);
  const Session& find_session(const std::string& id) const;

  std::filesystem::path dir_;
  StoreOptions options_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, Session> sessions_;
  std::optional<std::set<std::string>> catalog_;
  std::uint64_t seq_ = 0;
  std::size_t events_since_snapshot_ = 0;
  std::map<std::string, std::pair<std::string, stats::AlphaResult>> ita_cache_;
  std::size_t ita_hits_ = 0;
};

nlohmann::json to_json(const Session& s);
Session session_from_json(const nlohmann::json& j);

/// HTTP front end for a store. Errors map to 400 (validation), 403 (unknown
/// annotator), 404 (unknown session or item) and 409 (state conflicts); the
/// body is {error, message}.
class AnnotateServer {
 public:
  explicit AnnotateServer(AnnotationStore& store);
  ~AnnotateServer();
  AnnotateServer(const AnnotateServer&) = delete;
  AnnotateServer& operator=(const AnnotateServer&) = delete;

  /// Binds; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); blocking.
  void listen();
  /// bind + listen on a background thread.
  int start(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// HTTP status for a library error code.
int http_status(ErrorCode code);

}  // namespace proxyrank::annotate
