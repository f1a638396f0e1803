#include "proxyrank/types.hpp"

#include <array>
#include <utility>

namespace proxyrank {

namespace {

template <typename E, std::size_t N>
std::optional<E> lookup(const std::array<std::pair<E, std::string_view>, N>& table,
                        std::string_view token) noexcept {
  for (const auto& [value, name] : table) {
    if (name == token) return value;
  }
  return std::nullopt;
}

template <typename E, std::size_t N>
std::string_view name_of(const std::array<std::pair<E, std::string_view>, N>& table, E v) noexcept {
  for (const auto& [value, name] : table) {
    if (value == v) return name;
  }
  return "unknown";
}

constexpr std::array<std::pair<TaskKind, std::string_view>, 3> kTasks{{
    {TaskKind::Mmcqa, "mmcqa"},
    {TaskKind::Misinfo, "misinfo"},
    {TaskKind::ClinicalNli, "clinical_nli"},
}};

constexpr std::array<std::pair<Split, std::string_view>, 3> kSplits{{
    {Split::Train, "train"},
    {Split::Dev, "dev"},
    {Split::Test, "test"},
}};

constexpr std::array<std::pair<MisinfoLabel, std::string_view>, 3> kMisinfo{{
    {MisinfoLabel::Supported, "supported"},
    {MisinfoLabel::Refuted, "refuted"},
    {MisinfoLabel::NotEnoughEvidence, "not_enough_evidence"},
}};

constexpr std::array<std::pair<NliLabel, std::string_view>, 2> kNli{{
    {NliLabel::Entailment, "entailment"},
    {NliLabel::Contradiction, "contradiction"},
}};

constexpr std::array<std::pair<ControlKind, std::string_view>, 4> kControls{{
    {ControlKind::NoArgument, "no_argument"},
    {ControlKind::LabelOnly, "label_only"},
    {ControlKind::Noise, "noise"},
    {ControlKind::IrPassages, "ir_passages"},
}};

constexpr std::array<std::pair<SourceKind, std::string_view>, 3> kSources{{
    {SourceKind::Gold, "gold"},
    {SourceKind::Llm, "llm"},
    {SourceKind::Control, "control"},
}};

}  // namespace

std::string_view to_token(TaskKind v) noexcept { return name_of(kTasks, v); }
std::string_view to_token(Split v) noexcept { return name_of(kSplits, v); }
std::string_view to_token(MisinfoLabel v) noexcept { return name_of(kMisinfo, v); }
std::string_view to_token(NliLabel v) noexcept { return name_of(kNli, v); }
std::string_view to_token(ControlKind v) noexcept { return name_of(kControls, v); }
std::string_view to_token(SourceKind v) noexcept { return name_of(kSources, v); }

std::optional<TaskKind> parse_task(std::string_view t) noexcept { return lookup(kTasks, t); }
std::optional<Split> parse_split(std::string_view t) noexcept { return lookup(kSplits, t); }
std::optional<MisinfoLabel> parse_misinfo_label(std::string_view t) noexcept {
  return lookup(kMisinfo, t);
}
std::optional<NliLabel> parse_nli_label(std::string_view t) noexcept { return lookup(kNli, t); }
std::optional<ControlKind> parse_control_kind(std::string_view t) noexcept {
  return lookup(kControls, t);
}
std::optional<SourceKind> parse_source_kind(std::string_view t) noexcept {
  return lookup(kSources, t);
}

TaskKind task_of(const ProxyInstance& inst) noexcept {
  switch (inst.index()) {
    case 0: return TaskKind::Mmcqa;
    case 1: return TaskKind::Misinfo;
    default: return TaskKind::ClinicalNli;
  }
}

const std::string& instance_id(const ProxyInstance& inst) noexcept {
  return std::visit([](const auto& i) -> const std::string& { return i.id; }, inst);
}

std::optional<Split> split_of(const ProxyInstance& inst) noexcept {
  return std::visit([](const auto& i) { return i.split; }, inst);
}

void set_split(ProxyInstance& inst, std::optional<Split> split) noexcept {
  std::visit([&](auto& i) { i.split = split; }, inst);
}

const std::string& gold_argument_text(const ProxyInstance& inst) noexcept {
  struct Visitor {
    const std::string& operator()(const MmcqaInstance& i) const { return i.gold_explanation; }
    const std::string& operator()(const MisinfoInstance& i) const { return i.gold_argument; }
    const std::string& operator()(const NliInstance& i) const { return i.gold_evidence; }
  };
  return std::visit(Visitor{}, inst);
}

std::string gold_label_token(const ProxyInstance& inst) {
  struct Visitor {
    std::string operator()(const MmcqaInstance& i) const { return std::to_string(i.correct_index); }
    std::string operator()(const MisinfoInstance& i) const { return std::string(to_token(i.label)); }
    std::string operator()(const NliInstance& i) const { return std::string(to_token(i.label)); }
  };
  return std::visit(Visitor{}, inst);
}

std::vector<std::string> label_space(const ProxyInstance& inst) {
  std::vector<std::string> out;
  if (const auto* q = std::get_if<MmcqaInstance>(&inst)) {
    for (std::size_t i = 0; i < q->options.size(); ++i) out.push_back(std::to_string(i));
  } else if (std::holds_alternative<MisinfoInstance>(inst)) {
    for (const auto& [v, name] : kMisinfo) out.emplace_back(name);
  } else {
    for (const auto& [v, name] : kNli) out.emplace_back(name);
  }
  return out;
}

ArgumentVariant make_gold_argument(const ProxyInstance& inst) {
  ArgumentVariant v;
  v.instance_id = instance_id(inst);
  v.variant_id = v.instance_id + "#gold";
  v.system_id = std::string(kGoldSystemId);
  v.source = SourceKind::Gold;
  v.text = gold_argument_text(inst);
  return v;
}

}  // namespace proxyrank
