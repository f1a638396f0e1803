#include "proxyrank/controls.hpp"

#include <numeric>

#include "proxyrank/error.hpp"
#include "proxyrank/rng.hpp"
#include "proxyrank/text.hpp"

namespace proxyrank::controls {

namespace {

ArgumentVariant control_variant(const ProxyInstance& inst, ControlKind kind, std::string_view suffix,
                                std::string text) {
  ArgumentVariant v;
  v.instance_id = instance_id(inst);
  v.variant_id = v.instance_id + std::string(suffix);
  v.system_id = std::string(to_token(kind));
  v.source = SourceKind::Control;
  v.control = kind;
  v.text = std::move(text);
  return v;
}

}  // namespace

ArgumentVariant make_no_argument(const ProxyInstance& inst) {
  return control_variant(inst, ControlKind::NoArgument, "#ctl-noarg", "");
}

ArgumentVariant make_label_only(const ProxyInstance& inst) {
  std::string text;
  if (const auto* q = std::get_if<MmcqaInstance>(&inst)) {
    text = q->options.at(q->correct_index);
  } else {
    text = "The correct label is: " + gold_label_token(inst) + ".";
  }
  return control_variant(inst, ControlKind::LabelOnly, "#ctl-label", std::move(text));
}

std::vector<std::size_t> random_derangement(std::size_t n, std::uint64_t seed) {
  if (n < 2) throw Error(ErrorCode::TooFewInstances, "noise arguments need at least two instances");
  Rng rng(seed);
  std::vector<std::size_t> perm(n);
  // Rejection sampling over uniform permutations; the acceptance rate tends
  // to 1/e, so the expected number of rounds is below 3.
  while (true) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(perm));
    bool fixed_point = false;
    for (std::size_t i = 0; i < n && !fixed_point; ++i) fixed_point = perm[i] == i;
    if (!fixed_point) return perm;
  }
}

std::vector<ArgumentVariant> make_noise(std::span<const ProxyInstance> instances, std::uint64_t seed) {
  if (instances.size() < 2) {
    throw Error(ErrorCode::TooFewInstances, "noise arguments need at least two instances");
  }
  const auto task = task_of(instances.front());
  for (const auto& inst : instances) {
    if (task_of(inst) != task) throw Error(ErrorCode::InvalidField, "noise donors must share one task");
  }
  const auto donor = random_derangement(instances.size(), seed);
  std::vector<ArgumentVariant> out;
  out.reserve(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    out.push_back(control_variant(instances[i], ControlKind::Noise, "#ctl-noise",
                                  gold_argument_text(instances[donor[i]])));
  }
  return out;
}

std::vector<PassageChunk> chunk_document(std::string_view doc_text, std::size_t chunk_size,
                                         std::string_view doc_id) {
  if (chunk_size == 0) throw Error(ErrorCode::InvalidConfig, "chunk_size must be at least 1");
  std::vector<PassageChunk> chunks;
  const auto bounds = text::utf8_boundaries(doc_text);
  const std::size_t points = bounds.size() - 1;
  for (std::size_t start = 0; start < points; start += chunk_size) {
    const std::size_t end = std::min(points, start + chunk_size);
    PassageChunk c;
    c.doc_id = std::string(doc_id);
    c.char_start = start;
    c.char_end = end;
    c.text = std::string(doc_text.substr(bounds[start], bounds[end] - bounds[start]));
    chunks.push_back(std::move(c));
  }
  return chunks;
}

std::string retrieval_query(const ProxyInstance& inst) {
  if (const auto* q = std::get_if<MmcqaInstance>(&inst)) return q->clinical_case + " " + q->question;
  if (const auto* m = std::get_if<MisinfoInstance>(&inst)) return m->claim;
  return std::get<NliInstance>(inst).statement;
}

ArgumentVariant make_ir_variant(const ProxyInstance& inst, std::span<const PassageChunk> passages) {
  if (passages.empty()) throw Error(ErrorCode::NoPassages, "no passages for " + instance_id(inst));
  std::vector<std::string> texts;
  for (const auto& p : passages) texts.push_back(p.text);
  return control_variant(inst, ControlKind::IrPassages, "#ctl-ir", text::join(texts, kPassageSeparator));
}

}  // namespace proxyrank::controls
