#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace proxyrank {

enum class ErrorCode {
  // corpus
  MalformedLine,
  MissingField,
  InvalidField,
  LabelOutOfDomain,
  DuplicateId,
  EmptyDataset,
  BadFractions,
  // controls
  TooFewInstances,
  EmptyIndex,
  NoPassages,
  BackendUnavailable,
  // genclient
  PlaceholderMissing,
  EndpointError,
  RateLimited,
  EmptyCompletion,
  // scorer
  ArgumentRequired,
  ArgumentForbidden,
  BadDistribution,
  ShapeMismatch,
  Empty,
  // stats
  NonFinite,
  TooSmall,
  UndefinedExpectedDisagreement,
  SingleRater,
  MismatchedSystems,
  NoComparisons,
  // annotate
  UnknownSession,
  UnknownItem,
  UnknownAnnotator,
  EmptyRoster,
  SessionClosed,
  SessionOpen,
  StaleVersion,
  GradeOutOfRange,
  IncompleteGrades,
  IncompleteCalibration,
  // plumbing
  InvalidConfig,
  Io,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Exception type used across the library. Carries a stable error code plus
/// optional location information for parse errors.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  Error(ErrorCode code, const std::string& message, std::size_t line, std::string field = {})
      : std::runtime_error(std::string(to_string(code)) + ": line " + std::to_string(line) +
                           (field.empty() ? std::string() : " field '" + field + "'") + ": " +
                           message),
        code_(code),
        line_(line),
        field_(std::move(field)) {}

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> line_;
  std::string field_;
};

}  // namespace proxyrank
