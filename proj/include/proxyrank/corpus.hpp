#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "proxyrank/types.hpp"

namespace proxyrank::corpus {

// ---------------------------------------------------------------------------
// Canonical line-delimited JSON form
// ---------------------------------------------------------------------------

struct ParseResult {
  std::vector<ProxyInstance> instances;
  // Soft validation findings (e.g. NLI evidence not found in the document).
  std::vector<std::string> warnings;
};

/// Parses one JSON object per line. The whole input is rejected on the first
/// schema violation; the thrown Error carries the 1-based line number and the
/// offending field. Blank lines are skipped.
ParseResult parse_dataset(std::istream& in, TaskKind task);
ParseResult parse_dataset(const std::filesystem::path& path, TaskKind task);

/// Validates a single decoded record. `line` is only used for diagnostics.
ProxyInstance parse_instance(const nlohmann::json& record, TaskKind task, std::size_t line = 0);

nlohmann::json to_json(const ProxyInstance& inst);
std::string serialize_dataset(std::span<const ProxyInstance> instances);
void write_dataset(const std::filesystem::path& path, std::span<const ProxyInstance> instances);

/// Evidence segments of an NLI instance that do not occur verbatim in its
/// full document. Empty when the document is absent.
std::vector<std::string> missing_evidence_segments(const NliInstance& inst);

// ---------------------------------------------------------------------------
// MMCQA preprocessing
// ---------------------------------------------------------------------------

/// One variant per option position. Variant j is the cyclic rotation of the
/// options that puts the correct option at position j, so every other option
/// keeps its original relative order. Ids get the suffix "#p<j>".
std::vector<MmcqaInstance> permute_answer_positions(const MmcqaInstance& inst);

struct NeutralizationConfig {
  // ECMAScript regexes, matched case-insensitively. A sentence matching any of
  // them is dropped because it names the correct answer outright.
  std::vector<std::string> identification_patterns;
  // Base-form verbs that open imperative option texts ("Follow specific
  // dietary measures."). Such options are rendered as gerunds when spliced
  // into running text.
  std::vector<std::string> imperative_verbs;
  // Manual override file contents: instance id -> replacement explanation.
  std::map<std::string, std::string> overrides;

  static NeutralizationConfig defaults();
};

struct NeutralizedText {
  std::string text;
  // Positional references that neither rule could rewrite; they need a manual
  // pass (and usually an override entry).
  std::vector<std::string> unresolved;
};

/// Rewrites an explanation so it no longer refers to options by position.
/// `question` is optional; when given it supplies the neutral noun for
/// phrases like "the most appropriate answer seems to be 2".
NeutralizedText neutralize_explanation(std::string_view text,
                                       std::span<const std::string> options,
                                       std::size_t correct_index,
                                       const NeutralizationConfig& config = NeutralizationConfig::defaults(),
                                       std::string_view question = {});

/// Applies the override for inst.id when present, otherwise the heuristic.
NeutralizedText neutralize_instance(const MmcqaInstance& inst, const NeutralizationConfig& config);

std::map<std::string, std::string> load_overrides(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

struct SplitFractions {
  double train = 0.70;
  double dev = 0.15;
  double test = 0.15;
};

/// Largest-remainder apportionment of `total` items. Equal remainders go to
/// the earlier split (train, then dev, then test).
std::array<std::size_t, 3> largest_remainder_sizes(std::size_t total, const SplitFractions& fractions);

struct SplitAssignment {
  std::map<std::string, Split> by_id;

  std::size_t count(Split s) const;
  std::array<std::size_t, 3> sizes() const;
};

/// Label-stratified split. Per-label counts stay within one item of exact
/// proportionality and global sizes equal largest_remainder_sizes().
/// Deterministic for a given seed.
SplitAssignment stratified_split(std::span<const ProxyInstance> instances,
                                 const SplitFractions& fractions, std::uint64_t seed);

/// Same contract over parallel id/label arrays.
SplitAssignment stratified_split(std::span<const std::string> ids,
                                 std::span<const std::string> labels,
                                 const SplitFractions& fractions, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Misinformation subsets
// ---------------------------------------------------------------------------

struct EvidenceSubset {
  std::vector<MisinfoInstance> instances;
  std::optional<std::string> warning;
};

/// Keeps SUPPORTED and REFUTED instances in input order.
EvidenceSubset filter_evidence_subset(std::span<const MisinfoInstance> instances);

// ---------------------------------------------------------------------------
// Argument files
// ---------------------------------------------------------------------------

/// {variant_id, instance_id, system_id, source, control?, text}
nlohmann::json to_json(const ArgumentVariant& arg);
ArgumentVariant argument_from_json(const nlohmann::json& rec, std::size_t line = 0);

/// Reads argument variants. Records produced by the generation client
/// ({instance_id, provider_id, text, ...}) are accepted as LLM arguments whose
/// system id is the provider id.
std::vector<ArgumentVariant> read_arguments(const std::filesystem::path& path);
void write_arguments(const std::filesystem::path& path, std::span<const ArgumentVariant> args);

}  // namespace proxyrank::corpus
