#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace proxyrank {

enum class TaskKind { Mmcqa, Misinfo, ClinicalNli };

enum class Split { Train, Dev, Test };

enum class MisinfoLabel { Supported, Refuted, NotEnoughEvidence };

enum class NliLabel { Entailment, Contradiction };

// Lowercase snake_case tokens used in every serialized artifact.
std::string_view to_token(TaskKind v) noexcept;
std::string_view to_token(Split v) noexcept;
std::string_view to_token(MisinfoLabel v) noexcept;
std::string_view to_token(NliLabel v) noexcept;

// Token parsers return nullopt for anything outside the domain.
std::optional<TaskKind> parse_task(std::string_view token) noexcept;
std::optional<Split> parse_split(std::string_view token) noexcept;
std::optional<MisinfoLabel> parse_misinfo_label(std::string_view token) noexcept;
std::optional<NliLabel> parse_nli_label(std::string_view token) noexcept;

struct MmcqaInstance {
  std::string id;
  std::string clinical_case;
  std::string question;
  std::vector<std::string> options;
  std::size_t correct_index = 0;
  std::string gold_explanation;
  std::optional<Split> split;

  bool operator==(const MmcqaInstance&) const = default;
};

struct MisinfoInstance {
  std::string id;
  std::string claim;
  MisinfoLabel label = MisinfoLabel::Supported;
  std::string gold_argument;
  std::optional<Split> split;

  bool operator==(const MisinfoInstance&) const = default;
};

struct NliInstance {
  std::string id;
  std::string statement;
  std::string full_section;
  std::optional<std::string> full_document;
  NliLabel label = NliLabel::Entailment;
  // Segments separated by " ** ".
  std::string gold_evidence;
  std::optional<Split> split;

  bool operator==(const NliInstance&) const = default;
};

using ProxyInstance = std::variant<MmcqaInstance, MisinfoInstance, NliInstance>;

TaskKind task_of(const ProxyInstance& inst) noexcept;
const std::string& instance_id(const ProxyInstance& inst) noexcept;
std::optional<Split> split_of(const ProxyInstance& inst) noexcept;
void set_split(ProxyInstance& inst, std::optional<Split> split) noexcept;

/// The expert-written argument attached to the instance.
const std::string& gold_argument_text(const ProxyInstance& inst) noexcept;

/// Gold label as a token of the instance's label space. For MMCQA this is the
/// 0-based option index rendered in decimal.
std::string gold_label_token(const ProxyInstance& inst);

/// Full label space of the instance's task, in canonical order.
std::vector<std::string> label_space(const ProxyInstance& inst);

enum class ControlKind { NoArgument, LabelOnly, Noise, IrPassages };

std::string_view to_token(ControlKind v) noexcept;
std::optional<ControlKind> parse_control_kind(std::string_view token) noexcept;

enum class SourceKind { Gold, Llm, Control };

std::string_view to_token(SourceKind v) noexcept;
std::optional<SourceKind> parse_source_kind(std::string_view token) noexcept;

/// System id used for the expert argument in score matrices.
inline constexpr std::string_view kGoldSystemId = "gold";

/// One candidate argument for one instance.
struct ArgumentVariant {
  std::string variant_id;
  std::string instance_id;
  std::string system_id;
  SourceKind source = SourceKind::Gold;
  std::optional<ControlKind> control;
  std::string text;

  bool operator==(const ArgumentVariant&) const = default;
};

ArgumentVariant make_gold_argument(const ProxyInstance& inst);

}  // namespace proxyrank
