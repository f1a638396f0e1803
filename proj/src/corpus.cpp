#include "proxyrank/corpus.hpp"

#include <fstream>
#include <istream>
#include <set>
#include <sstream>

#include "proxyrank/error.hpp"
#include "proxyrank/text.hpp"

namespace proxyrank::corpus {

using nlohmann::json;

namespace {

const json& require(const json& rec, const char* field, std::size_t line) {
  auto it = rec.find(field);
  if (it == rec.end() || it->is_null()) {
    throw Error(ErrorCode::MissingField, "required field is absent", line, field);
  }
  return *it;
}

std::string require_string(const json& rec, const char* field, std::size_t line, bool nonempty) {
  const auto& v = require(rec, field, line);
  if (!v.is_string()) throw Error(ErrorCode::InvalidField, "expected a string", line, field);
  auto s = v.get<std::string>();
  if (nonempty && text::trim(s).empty()) {
    throw Error(ErrorCode::InvalidField, "must not be empty", line, field);
  }
  return s;
}

std::optional<Split> optional_split(const json& rec, std::size_t line) {
  auto it = rec.find("split");
  if (it == rec.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw Error(ErrorCode::InvalidField, "expected a string", line, "split");
  auto s = parse_split(it->get<std::string>());
  if (!s) throw Error(ErrorCode::LabelOutOfDomain, "unknown split token", line, "split");
  return s;
}

MmcqaInstance parse_mmcqa(const json& rec, std::size_t line) {
  MmcqaInstance inst;
  inst.id = require_string(rec, "id", line, true);
  inst.clinical_case = require_string(rec, "clinical_case", line, true);
  inst.question = require_string(rec, "question", line, true);
  const auto& opts = require(rec, "options", line);
  if (!opts.is_array()) throw Error(ErrorCode::InvalidField, "expected an array", line, "options");
  if (opts.size() < 2 || opts.size() > 5) {
    throw Error(ErrorCode::InvalidField, "expected 2 to 5 options", line, "options");
  }
  std::set<std::string> seen;
  for (const auto& o : opts) {
    if (!o.is_string()) throw Error(ErrorCode::InvalidField, "option must be a string", line, "options");
    auto s = o.get<std::string>();
    if (!seen.insert(text::normalize_whitespace(s)).second) {
      throw Error(ErrorCode::InvalidField, "options must be pairwise distinct", line, "options");
    }
    inst.options.push_back(std::move(s));
  }
  const auto& ci = require(rec, "correct_index", line);
  if (!ci.is_number_integer()) {
    throw Error(ErrorCode::InvalidField, "expected an integer", line, "correct_index");
  }
  const auto idx = ci.get<long long>();
  if (idx < 0 || static_cast<std::size_t>(idx) >= inst.options.size()) {
    throw Error(ErrorCode::LabelOutOfDomain,
                "correct_index " + std::to_string(idx) + " outside [0, " +
                    std::to_string(inst.options.size()) + ")",
                line, "correct_index");
  }
  inst.correct_index = static_cast<std::size_t>(idx);
  inst.gold_explanation = require_string(rec, "gold_explanation", line, false);
  inst.split = optional_split(rec, line);
  return inst;
}

MisinfoInstance parse_misinfo(const json& rec, std::size_t line) {
  MisinfoInstance inst;
  inst.id = require_string(rec, "id", line, true);
  inst.claim = require_string(rec, "claim", line, true);
  auto label = parse_misinfo_label(require_string(rec, "label", line, true));
  if (!label) throw Error(ErrorCode::LabelOutOfDomain, "unknown misinformation label", line, "label");
  inst.label = *label;
  inst.gold_argument = require_string(rec, "gold_argument", line, true);
  inst.split = optional_split(rec, line);
  return inst;
}

NliInstance parse_nli(const json& rec, std::size_t line) {
  NliInstance inst;
  inst.id = require_string(rec, "id", line, true);
  inst.statement = require_string(rec, "statement", line, true);
  inst.full_section = require_string(rec, "full_section", line, true);
  if (auto it = rec.find("full_document"); it != rec.end() && !it->is_null()) {
    if (!it->is_string()) throw Error(ErrorCode::InvalidField, "expected a string", line, "full_document");
    inst.full_document = it->get<std::string>();
  }
  auto label = parse_nli_label(require_string(rec, "label", line, true));
  if (!label) throw Error(ErrorCode::LabelOutOfDomain, "unknown NLI label", line, "label");
  inst.label = *label;
  inst.gold_evidence = require_string(rec, "gold_evidence", line, false);
  inst.split = optional_split(rec, line);
  return inst;
}

}  // namespace

ProxyInstance parse_instance(const json& record, TaskKind task, std::size_t line) {
  if (!record.is_object()) throw Error(ErrorCode::MalformedLine, "expected a JSON object", line);
  if (auto it = record.find("task"); it != record.end() && !it->is_null()) {
    if (!it->is_string() || parse_task(it->get<std::string>()) != task) {
      throw Error(ErrorCode::InvalidField, "record task does not match the requested task", line, "task");
    }
  }
  switch (task) {
    case TaskKind::Mmcqa: return parse_mmcqa(record, line);
    case TaskKind::Misinfo: return parse_misinfo(record, line);
    case TaskKind::ClinicalNli: return parse_nli(record, line);
  }
  throw Error(ErrorCode::InvalidField, "unknown task", line, "task");
}

ParseResult parse_dataset(std::istream& in, TaskKind task) {
  ParseResult result;
  std::set<std::string> ids;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (text::trim(raw).empty()) continue;
    json rec = json::parse(raw, nullptr, /*allow_exceptions=*/false);
    if (rec.is_discarded()) throw Error(ErrorCode::MalformedLine, "invalid JSON", line_no);
    auto inst = parse_instance(rec, task, line_no);
    if (!ids.insert(instance_id(inst)).second) {
      throw Error(ErrorCode::DuplicateId, "duplicate id '" + instance_id(inst) + "'", line_no, "id");
    }
    if (const auto* nli = std::get_if<NliInstance>(&inst)) {
      for (const auto& seg : missing_evidence_segments(*nli)) {
        result.warnings.push_back("line " + std::to_string(line_no) + " (" + nli->id +
                                  "): evidence segment not found in full_document: \"" + seg + "\"");
      }
    }
    result.instances.push_back(std::move(inst));
  }
  return result;
}

ParseResult parse_dataset(const std::filesystem::path& path, TaskKind task) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return parse_dataset(in, task);
}

json to_json(const ProxyInstance& inst) {
  json j;
  j["id"] = instance_id(inst);
  j["task"] = to_token(task_of(inst));
  if (const auto* q = std::get_if<MmcqaInstance>(&inst)) {
    j["clinical_case"] = q->clinical_case;
    j["question"] = q->question;
    j["options"] = q->options;
    j["correct_index"] = q->correct_index;
    j["gold_explanation"] = q->gold_explanation;
  } else if (const auto* m = std::get_if<MisinfoInstance>(&inst)) {
    j["claim"] = m->claim;
    j["label"] = to_token(m->label);
    j["gold_argument"] = m->gold_argument;
  } else {
    const auto& n = std::get<NliInstance>(inst);
    j["statement"] = n.statement;
    j["full_section"] = n.full_section;
    if (n.full_document) j["full_document"] = *n.full_document;
    j["label"] = to_token(n.label);
    j["gold_evidence"] = n.gold_evidence;
  }
  if (auto s = split_of(inst)) j["split"] = to_token(*s);
  return j;
}

std::string serialize_dataset(std::span<const ProxyInstance> instances) {
  std::string out;
  for (const auto& inst : instances) {
    out += to_json(inst).dump();
    out += '\n';
  }
  return out;
}

void write_dataset(const std::filesystem::path& path, std::span<const ProxyInstance> instances) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << serialize_dataset(instances);
}

std::vector<std::string> missing_evidence_segments(const NliInstance& inst) {
  std::vector<std::string> missing;
  if (!inst.full_document) return missing;
  for (const auto& part : text::split(inst.gold_evidence, " ** ")) {
    auto seg = text::trim(part);
    if (seg.empty()) continue;
    if (inst.full_document->find(seg) == std::string::npos) missing.push_back(seg);
  }
  return missing;
}

std::vector<MmcqaInstance> permute_answer_positions(const MmcqaInstance& inst) {
  const std::size_t k = inst.options.size();
  std::vector<MmcqaInstance> variants;
  variants.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    MmcqaInstance v = inst;
    v.id = inst.id + "#p" + std::to_string(j);
    // Position p of the variant holds original option (p - j + correct) mod k.
    for (std::size_t p = 0; p < k; ++p) {
      v.options[p] = inst.options[(p + k - j + inst.correct_index) % k];
    }
    v.correct_index = j;
    variants.push_back(std::move(v));
  }
  return variants;
}

EvidenceSubset filter_evidence_subset(std::span<const MisinfoInstance> instances) {
  EvidenceSubset out;
  for (const auto& inst : instances) {
    if (inst.label != MisinfoLabel::NotEnoughEvidence) out.instances.push_back(inst);
  }
  if (out.instances.empty()) {
    out.warning = instances.empty()
                      ? "input is empty"
                      : "every instance is labeled not_enough_evidence; the subset is empty";
  }
  return out;
}

std::map<std::string, std::string> load_overrides(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::map<std::string, std::string> out;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (text::trim(raw).empty()) continue;
    json rec = json::parse(raw, nullptr, false);
    if (rec.is_discarded() || !rec.is_object()) {
      throw Error(ErrorCode::MalformedLine, "invalid override record", line_no);
    }
    out[require_string(rec, "id", line_no, true)] = require_string(rec, "text", line_no, false);
  }
  return out;
}

json to_json(const ArgumentVariant& arg) {
  json j{{"variant_id", arg.variant_id},
         {"instance_id", arg.instance_id},
         {"system_id", arg.system_id},
         {"source", to_token(arg.source)}};
  if (arg.control) j["control"] = to_token(*arg.control);
  j["text"] = arg.text;
  return j;
}

ArgumentVariant argument_from_json(const json& rec, std::size_t line) {
  if (!rec.is_object()) throw Error(ErrorCode::MalformedLine, "expected a JSON object", line);
  ArgumentVariant v;
  v.instance_id = require_string(rec, "instance_id", line, true);
  v.text = require_string(rec, "text", line, false);
  if (rec.contains("provider_id") && !rec.contains("system_id")) {
    v.system_id = require_string(rec, "provider_id", line, true);
    v.source = SourceKind::Llm;
    v.variant_id = v.instance_id + "#" + v.system_id;
    return v;
  }
  v.system_id = require_string(rec, "system_id", line, true);
  v.variant_id = rec.contains("variant_id") ? require_string(rec, "variant_id", line, true)
                                            : v.instance_id + "#" + v.system_id;
  auto source = parse_source_kind(require_string(rec, "source", line, true));
  if (!source) throw Error(ErrorCode::LabelOutOfDomain, "unknown source token", line, "source");
  v.source = *source;
  if (rec.contains("control") && !rec["control"].is_null()) {
    auto kind = parse_control_kind(require_string(rec, "control", line, true));
    if (!kind) throw Error(ErrorCode::LabelOutOfDomain, "unknown control token", line, "control");
    v.control = kind;
  }
  if ((v.source == SourceKind::Control) != v.control.has_value()) {
    throw Error(ErrorCode::InvalidField, "control is required exactly for control sources", line, "control");
  }
  return v;
}

std::vector<ArgumentVariant> read_arguments(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<ArgumentVariant> out;
  std::set<std::string> seen;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (text::trim(raw).empty()) continue;
    json rec = json::parse(raw, nullptr, false);
    if (rec.is_discarded()) throw Error(ErrorCode::MalformedLine, "invalid JSON", line_no);
    auto v = argument_from_json(rec, line_no);
    if (!seen.insert(v.variant_id).second) {
      throw Error(ErrorCode::DuplicateId, "duplicate variant id " + v.variant_id, line_no, "variant_id");
    }
    out.push_back(std::move(v));
  }
  return out;
}

void write_arguments(const std::filesystem::path& path, std::span<const ArgumentVariant> args) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  for (const auto& a : args) out << to_json(a).dump() << '\n';
}

}  // namespace proxyrank::corpus
