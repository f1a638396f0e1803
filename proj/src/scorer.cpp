#include "proxyrank/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <set>

#include "proxyrank/text.hpp"

namespace proxyrank::scorer {

using nlohmann::json;

namespace {

constexpr double kDistributionTolerance = 1e-6;

std::string argument_segment_name(TaskKind task, SourceKind source) {
  return std::string(to_token(source)) + (task == TaskKind::ClinicalNli ? "_evidences" : "_argumentation");
}

std::string render_possible_answers(const MmcqaInstance& q) {
  std::string out;
  for (std::size_t i = 0; i < q.options.size(); ++i) {
    if (i) out += '\n';
    out += std::to_string(i + 1) + "- " + q.options[i];
  }
  return out;
}

std::size_t argmax(const std::map<std::string, double>& probs, std::span<const std::string> labels) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < labels.size(); ++i) {
    if (probs.at(labels[i]) > probs.at(labels[best])) best = i;
  }
  return best;
}

ScoreColumn reduce(const ScoreRequest& request, const std::vector<std::optional<std::map<std::string, double>>>& dists,
                   const std::vector<std::string>& problems, ScoreSemantics semantics) {
  ScoreColumn col;
  col.system_id = request.system_id;
  col.semantics = semantics;
  for (std::size_t i = 0; i < request.items.size(); ++i) {
    const auto& item = request.items[i];
    if (!dists[i]) {
      col.rejected.push_back({item.instance_id, ErrorCode::BadDistribution, problems[i]});
      continue;
    }
    const auto& probs = *dists[i];
    const auto pred = item.label_space[argmax(probs, item.label_space)];
    double value = semantics == ScoreSemantics::GoldLabelProbability ? probs.at(item.gold_label)
                                                                     : (pred == item.gold_label ? 1.0 : 0.0);
    col.instance_ids.push_back(item.instance_id);
    col.values.push_back(std::clamp(value, 0.0, 1.0));
    col.predictions.push_back(pred);
    col.gold_labels.push_back(item.gold_label);
  }
  return col;
}

// Maps the backend's answers back onto request order.
std::vector<std::map<std::string, double>> align(const ScoreRequest& request, std::vector<ItemProbs> results) {
  std::map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < request.items.size(); ++i) {
    if (!position.emplace(request.items[i].instance_id, i).second) {
      throw Error(ErrorCode::ShapeMismatch, "duplicate instance id " + request.items[i].instance_id + " in request");
    }
  }
  std::vector<std::map<std::string, double>> out(request.items.size());
  std::vector<bool> seen(request.items.size(), false);
  for (auto& r : results) {
    auto it = position.find(r.instance_id);
    if (it == position.end()) throw Error(ErrorCode::ShapeMismatch, "backend answered for unknown item " + r.instance_id);
    if (seen[it->second]) throw Error(ErrorCode::ShapeMismatch, "backend answered twice for " + r.instance_id);
    seen[it->second] = true;
    out[it->second] = std::move(r.probs);
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) throw Error(ErrorCode::ShapeMismatch, "backend gave no answer for " + request.items[i].instance_id);
  }
  return out;
}

}  // namespace

std::string_view to_token(EvaluatorKind v) noexcept {
  switch (v) {
    case EvaluatorKind::Baseline: return "baseline";
    case EvaluatorKind::ExpertTrained: return "expert_trained";
    case EvaluatorKind::LlmTrained: return "llm_trained";
  }
  return "";
}

std::optional<EvaluatorKind> parse_evaluator_kind(std::string_view token) noexcept {
  for (auto k : {EvaluatorKind::Baseline, EvaluatorKind::ExpertTrained, EvaluatorKind::LlmTrained}) {
    if (token == to_token(k)) return k;
  }
  return std::nullopt;
}

std::string_view to_token(ScoreSemantics v) noexcept {
  return v == ScoreSemantics::GoldLabelProbability ? "gold_label_probability" : "correctness_0_1";
}

std::optional<ScoreSemantics> parse_semantics(std::string_view token) noexcept {
  if (token == "gold_label_probability") return ScoreSemantics::GoldLabelProbability;
  if (token == "correctness_0_1") return ScoreSemantics::Correctness01;
  return std::nullopt;
}

std::string AssembledInput::flat_text() const {
  std::string out;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (i) out += kSegmentSeparator;
    out += segments[i].text;
  }
  return out;
}

json AssembledInput::to_wire() const {
  json segs = json::array();
  for (const auto& s : segments) segs.push_back({{"name", s.name}, {"text", s.text}});
  return {{"instance_id", instance_id}, {"segments", segs}, {"label_space", label_space}, {"gold_label", gold_label}};
}

AssembledInput assemble_input(const ProxyInstance& inst, const ArgumentVariant* argument, EvaluatorKind kind,
                              const AssembleOptions& options) {
  if (kind == EvaluatorKind::Baseline && argument && !options.allow_baseline_argument) {
    throw Error(ErrorCode::ArgumentForbidden, "the baseline evaluator takes no argument");
  }
  if (kind != EvaluatorKind::Baseline && !argument) {
    throw Error(ErrorCode::ArgumentRequired, std::string(to_token(kind)) + " needs an argument for " + instance_id(inst));
  }
  if (argument && argument->instance_id != instance_id(inst)) {
    throw Error(ErrorCode::InvalidField, "argument " + argument->variant_id + " belongs to another instance");
  }

  AssembledInput in;
  in.instance_id = instance_id(inst);
  const auto task = task_of(inst);
  if (const auto* q = std::get_if<MmcqaInstance>(&inst)) {
    in.segments = {{"question", q->question}, {"clinical_case", q->clinical_case},
                   {"possible_answers", render_possible_answers(*q)}};
  } else if (const auto* m = std::get_if<MisinfoInstance>(&inst)) {
    in.segments = {{"question", m->claim}};
  } else {
    in.segments = {{"statement", std::get<NliInstance>(inst).statement}};
  }
  if (argument) {
    in.segments.push_back({argument_segment_name(task, argument->source), argument->text});
  } else if (const auto* n = std::get_if<NliInstance>(&inst)) {
    in.segments.push_back({"full_section", n->full_section});
  }

  in.label_space = label_space(inst);
  if (task == TaskKind::Misinfo && options.evidence_subset) {
    std::erase(in.label_space, std::string(to_token(MisinfoLabel::NotEnoughEvidence)));
  }
  in.gold_label = gold_label_token(inst);
  if (std::find(in.label_space.begin(), in.label_space.end(), in.gold_label) == in.label_space.end()) {
    throw Error(ErrorCode::LabelOutOfDomain, "gold label " + in.gold_label + " is outside the label space");
  }
  return in;
}

json ScoreRequest::to_wire() const {
  json items_json = json::array();
  for (const auto& it : items) items_json.push_back(it.to_wire());
  return {{"task", to_token(task)}, {"evaluator", to_token(evaluator)}, {"items", items_json}};
}

HttpScorerBackend::HttpScorerBackend(http::Endpoint endpoint, std::size_t batch_size, std::size_t max_in_flight)
    : endpoint_(std::move(endpoint)),
      batch_size_(std::max<std::size_t>(1, batch_size)),
      max_in_flight_(std::max<std::size_t>(1, max_in_flight)) {}

bool HttpScorerBackend::healthy() { return http::get_status(endpoint_, "/health") == 200; }

std::vector<ItemProbs> HttpScorerBackend::score(const ScoreRequest& request) {
  auto send = [this, &request](std::size_t begin, std::size_t end) {
    ScoreRequest part{request.task, request.evaluator, request.system_id,
                      {request.items.begin() + begin, request.items.begin() + end}};
    auto res = http::post_json(endpoint_, "/score", part.to_wire());
    if (res.status == 429 || res.status >= 500) {
      throw Error(ErrorCode::BackendUnavailable, "scorer returned status " + std::to_string(res.status));
    }
    if (res.status != 200) throw Error(ErrorCode::EndpointError, "scorer returned status " + std::to_string(res.status));
    if (!res.body.is_object() || !res.body.contains("items") || !res.body["items"].is_array()) {
      throw Error(ErrorCode::ShapeMismatch, "scorer response has no items array");
    }
    std::vector<ItemProbs> out;
    for (const auto& item : res.body["items"]) {
      if (!item.is_object() || !item.contains("instance_id") || !item.contains("probs") || !item["probs"].is_object()) {
        throw Error(ErrorCode::ShapeMismatch, "scorer item lacks instance_id or probs");
      }
      ItemProbs ip;
      ip.instance_id = item["instance_id"].get<std::string>();
      for (const auto& [label, p] : item["probs"].items()) {
        ip.probs[label] = p.is_number() ? p.get<double>() : std::nan("");
      }
      out.push_back(std::move(ip));
    }
    return out;
  };

  std::vector<ItemProbs> all;
  std::vector<std::future<std::vector<ItemProbs>>> pending;
  auto collect = [&](std::size_t keep) {
    while (pending.size() > keep) {
      auto part = pending.front().get();
      pending.erase(pending.begin());
      std::move(part.begin(), part.end(), std::back_inserter(all));
    }
  };
  for (std::size_t begin = 0; begin < request.items.size(); begin += batch_size_) {
    const auto end = std::min(request.items.size(), begin + batch_size_);
    pending.push_back(std::async(std::launch::async, send, begin, end));
    collect(max_in_flight_ - 1);
  }
  collect(0);
  return all;
}

void TableScorerBackend::set(const std::string& instance_id, const std::string& system_id, double p) {
  table_[{instance_id, system_id}] = Entry{p, {}};
}

void TableScorerBackend::set_distribution(const std::string& instance_id, const std::string& system_id,
                                          std::map<std::string, double> probs) {
  table_[{instance_id, system_id}] = Entry{std::nullopt, std::move(probs)};
}

TableScorerBackend TableScorerBackend::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open mock table " + path.string());
  TableScorerBackend backend;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (text::trim(raw).empty()) continue;
    auto rec = json::parse(raw, nullptr, false);
    if (rec.is_discarded() || !rec.is_object() || !rec.contains("instance_id") || !rec.contains("system_id")) {
      throw Error(ErrorCode::MalformedLine, "expected {instance_id, system_id, p|probs}", line);
    }
    const auto iid = rec["instance_id"].get<std::string>();
    const auto sid = rec["system_id"].get<std::string>();
    if (rec.contains("p") && rec["p"].is_number()) {
      backend.set(iid, sid, rec["p"].get<double>());
    } else if (rec.contains("probs") && rec["probs"].is_object()) {
      backend.set_distribution(iid, sid, rec["probs"].get<std::map<std::string, double>>());
    } else {
      throw Error(ErrorCode::MissingField, "needs p or probs", line, "p");
    }
  }
  return backend;
}

std::vector<ItemProbs> TableScorerBackend::score(const ScoreRequest& request) {
  std::vector<ItemProbs> out;
  for (const auto& item : request.items) {
    auto it = table_.find({item.instance_id, request.system_id});
    if (it == table_.end()) {
      throw Error(ErrorCode::ShapeMismatch, "mock table has no entry for (" + item.instance_id + ", " +
                                                request.system_id + ")");
    }
    ItemProbs ip{item.instance_id, {}};
    if (it->second.p) {
      const double p = *it->second.p;
      const double rest = item.label_space.size() > 1 ? (1.0 - p) / static_cast<double>(item.label_space.size() - 1) : 0.0;
      for (const auto& label : item.label_space) ip.probs[label] = label == item.gold_label ? p : rest;
    } else {
      ip.probs = it->second.probs;
    }
    out.push_back(std::move(ip));
  }
  return out;
}

void ScoreColumn::require_complete() const {
  if (!rejected.empty()) {
    throw Error(rejected.front().code, rejected.front().instance_id + ": " + rejected.front().message);
  }
}

std::optional<std::string> distribution_problem(const std::map<std::string, double>& probs,
                                                std::span<const std::string> label_space) {
  double sum = 0.0;
  for (const auto& label : label_space) {
    auto it = probs.find(label);
    if (it == probs.end()) return "no probability for label " + label;
    if (!std::isfinite(it->second)) return "probability for " + label + " is not finite";
    if (it->second < 0.0) return "probability for " + label + " is negative";
    sum += it->second;
  }
  if (probs.size() != label_space.size()) return "distribution has labels outside the label space";
  if (std::abs(sum - 1.0) > kDistributionTolerance) return "probabilities sum to " + std::to_string(sum);
  return std::nullopt;
}

ScoreColumn score_batch(const ScoreRequest& request, ScorerBackend& backend, ScoreSemantics semantics) {
  ScorerBackend* members[] = {&backend};
  return score_ensemble(request, members, semantics);
}

ScoreColumn score_ensemble(const ScoreRequest& request, std::span<ScorerBackend* const> members,
                           ScoreSemantics semantics) {
  if (members.empty()) throw Error(ErrorCode::InvalidConfig, "no scorer backends");
  for (auto* m : members) {
    if (!m->healthy()) throw Error(ErrorCode::BackendUnavailable, "scorer health check failed");
  }
  // Members are queried concurrently; each answer is aligned to request order.
  std::vector<std::future<std::vector<std::map<std::string, double>>>> futures;
  for (auto* m : members) {
    futures.push_back(std::async(std::launch::async, [m, &request] { return align(request, m->score(request)); }));
  }
  std::vector<std::vector<std::map<std::string, double>>> answers;
  std::exception_ptr failure;
  for (auto& f : futures) {
    try {
      answers.push_back(f.get());
    } catch (...) {
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  const std::size_t n = request.items.size();
  std::vector<std::optional<std::map<std::string, double>>> dists(n);
  std::vector<std::string> problems(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& labels = request.items[i].label_space;
    std::map<std::string, double> mean;
    bool ok = true;
    for (const auto& member : answers) {
      if (auto problem = distribution_problem(member[i], labels)) {
        problems[i] = *problem;
        ok = false;
        break;
      }
      for (const auto& label : labels) mean[label] += member[i].at(label);
    }
    if (!ok) continue;
    for (auto& [label, v] : mean) v /= static_cast<double>(answers.size());
    dists[i] = std::move(mean);
  }
  return reduce(request, dists, problems, semantics);
}

double accuracy(std::span<const double> correctness) {
  if (correctness.empty()) throw Error(ErrorCode::Empty, "accuracy of an empty column");
  double sum = 0.0;
  for (double v : correctness) {
    if (v != 0.0 && v != 1.0) throw Error(ErrorCode::InvalidField, "correctness values must be 0 or 1");
    sum += v;
  }
  return sum / static_cast<double>(correctness.size()) * 100.0;
}

double micro_f1(std::span<const std::string> predictions, std::span<const std::string> gold) {
  if (predictions.empty()) throw Error(ErrorCode::Empty, "micro-F1 of no predictions");
  if (predictions.size() != gold.size()) throw Error(ErrorCode::ShapeMismatch, "prediction and gold lengths differ");
  // Pooled over labels: a wrong prediction is a false positive for the
  // predicted label and a false negative for the gold one.
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] == gold[i]) {
      tp += 1;
    } else {
      fp += 1;
      fn += 1;
    }
  }
  return 2.0 * tp / (2.0 * tp + fp + fn) * 100.0;
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

json to_json(const ScoreRecord& r) {
  return {{"instance_id", r.instance_id},
          {"system_id", r.system_id},
          {"evaluator", r.evaluator},
          {"score", r.score},
          {"semantics", to_token(r.semantics)}};
}

std::vector<ScoreRecord> parse_scores(std::istream& in) {
  std::vector<ScoreRecord> out;
  std::string raw;
  std::size_t line = 0;
  auto str = [&line](const json& rec, const char* field) {
    if (!rec.contains(field)) throw Error(ErrorCode::MissingField, "required field is absent", line, field);
    if (!rec[field].is_string()) throw Error(ErrorCode::InvalidField, "expected a string", line, field);
    return rec[field].get<std::string>();
  };
  while (std::getline(in, raw)) {
    ++line;
    if (text::trim(raw).empty()) continue;
    auto rec = json::parse(raw, nullptr, false);
    if (rec.is_discarded() || !rec.is_object()) throw Error(ErrorCode::MalformedLine, "invalid JSON object", line);
    ScoreRecord r;
    r.instance_id = str(rec, "instance_id");
    r.system_id = str(rec, "system_id");
    r.evaluator = str(rec, "evaluator");
    if (!rec.contains("score")) throw Error(ErrorCode::MissingField, "required field is absent", line, "score");
    if (!rec["score"].is_number()) throw Error(ErrorCode::InvalidField, "expected a number", line, "score");
    r.score = rec["score"].get<double>();
    if (!std::isfinite(r.score)) throw Error(ErrorCode::NonFinite, "score is not finite", line, "score");
    auto sem = parse_semantics(str(rec, "semantics"));
    if (!sem) throw Error(ErrorCode::LabelOutOfDomain, "unknown semantics", line, "semantics");
    r.semantics = *sem;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<ScoreRecord> read_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return parse_scores(in);
}

void write_scores(const std::filesystem::path& path, std::span<const ScoreRecord> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

std::vector<ScoreRecord> to_records(const ScoreColumn& column, std::string_view evaluator) {
  std::vector<ScoreRecord> out;
  for (std::size_t i = 0; i < column.values.size(); ++i) {
    out.push_back({column.instance_ids[i], column.system_id, std::string(evaluator), column.values[i], column.semantics});
  }
  return out;
}

std::vector<double> ScoreMatrix::row(std::size_t instance) const {
  const auto k = system_ids.size();
  return {values.begin() + static_cast<std::ptrdiff_t>(instance * k),
          values.begin() + static_cast<std::ptrdiff_t>((instance + 1) * k)};
}

std::vector<double> ScoreMatrix::column(std::size_t system) const {
  std::vector<double> out;
  for (std::size_t i = 0; i < instance_ids.size(); ++i) out.push_back(at(i, system));
  return out;
}

void ScoreMatrix::validate() const {
  if (values.size() != system_ids.size() * instance_ids.size()) {
    throw Error(ErrorCode::ShapeMismatch, "matrix size does not match its labels");
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "score matrix holds a non-finite value");
    if (v < 0.0 || v > 1.0) throw Error(ErrorCode::InvalidField, "score outside [0, 1]");
  }
}

ScoreMatrix matrix_from_records(std::span<const ScoreRecord> records, std::string_view evaluator) {
  std::set<std::string> systems, instances;
  std::optional<ScoreSemantics> semantics;
  for (const auto& r : records) {
    if (r.evaluator != evaluator) continue;
    systems.insert(r.system_id);
    instances.insert(r.instance_id);
    if (semantics && *semantics != r.semantics) {
      throw Error(ErrorCode::ShapeMismatch, "evaluator " + std::string(evaluator) + " mixes score semantics");
    }
    semantics = r.semantics;
  }
  if (systems.empty()) throw Error(ErrorCode::Empty, "no scores for evaluator " + std::string(evaluator));

  ScoreMatrix m;
  m.system_ids.assign(systems.begin(), systems.end());
  m.instance_ids.assign(instances.begin(), instances.end());
  m.semantics = *semantics;
  const auto k = m.system_ids.size();
  m.values.assign(k * m.instance_ids.size(), std::nan(""));
  std::vector<bool> filled(m.values.size(), false);
  for (const auto& r : records) {
    if (r.evaluator != evaluator) continue;
    const auto i = static_cast<std::size_t>(
        std::lower_bound(m.instance_ids.begin(), m.instance_ids.end(), r.instance_id) - m.instance_ids.begin());
    const auto j = static_cast<std::size_t>(
        std::lower_bound(m.system_ids.begin(), m.system_ids.end(), r.system_id) - m.system_ids.begin());
    if (filled[i * k + j]) {
      throw Error(ErrorCode::ShapeMismatch, "duplicate score for (" + r.instance_id + ", " + r.system_id + ")");
    }
    filled[i * k + j] = true;
    m.values[i * k + j] = r.score;
  }
  for (std::size_t c = 0; c < filled.size(); ++c) {
    if (!filled[c]) {
      throw Error(ErrorCode::ShapeMismatch,
                  "missing score for (" + m.instance_ids[c / k] + ", " + m.system_ids[c % k] + ")");
    }
  }
  m.validate();
  return m;
}

std::vector<std::string> evaluators_in(std::span<const ScoreRecord> records) {
  std::set<std::string> names;
  for (const auto& r : records) names.insert(r.evaluator);
  return {names.begin(), names.end()};
}

}  // namespace proxyrank::scorer
