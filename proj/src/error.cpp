#include "proxyrank/error.hpp"

namespace proxyrank {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedLine: return "MALFORMED_LINE";
    case ErrorCode::MissingField: return "MISSING_FIELD";
    case ErrorCode::InvalidField: return "INVALID_FIELD";
    case ErrorCode::LabelOutOfDomain: return "LABEL_OUT_OF_DOMAIN";
    case ErrorCode::DuplicateId: return "DUPLICATE_ID";
    case ErrorCode::EmptyDataset: return "EMPTY_DATASET";
    case ErrorCode::BadFractions: return "BAD_FRACTIONS";
    case ErrorCode::TooFewInstances: return "TOO_FEW_INSTANCES";
    case ErrorCode::EmptyIndex: return "EMPTY_INDEX";
    case ErrorCode::NoPassages: return "NO_PASSAGES";
    case ErrorCode::BackendUnavailable: return "BACKEND_UNAVAILABLE";
    case ErrorCode::PlaceholderMissing: return "PLACEHOLDER_MISSING";
    case ErrorCode::EndpointError: return "ENDPOINT_ERROR";
    case ErrorCode::RateLimited: return "RATE_LIMITED";
    case ErrorCode::EmptyCompletion: return "EMPTY_COMPLETION";
    case ErrorCode::ArgumentRequired: return "ARGUMENT_REQUIRED";
    case ErrorCode::ArgumentForbidden: return "ARGUMENT_FORBIDDEN";
    case ErrorCode::BadDistribution: return "BAD_DISTRIBUTION";
    case ErrorCode::ShapeMismatch: return "SHAPE_MISMATCH";
    case ErrorCode::Empty: return "EMPTY";
    case ErrorCode::NonFinite: return "NON_FINITE";
    case ErrorCode::TooSmall: return "TOO_SMALL";
    case ErrorCode::UndefinedExpectedDisagreement: return "UNDEFINED_EXPECTED_DISAGREEMENT";
    case ErrorCode::SingleRater: return "SINGLE_RATER";
    case ErrorCode::MismatchedSystems: return "MISMATCHED_SYSTEMS";
    case ErrorCode::NoComparisons: return "NO_COMPARISONS";
    case ErrorCode::UnknownSession: return "UNKNOWN_SESSION";
    case ErrorCode::UnknownItem: return "UNKNOWN_ITEM";
    case ErrorCode::UnknownAnnotator: return "UNKNOWN_ANNOTATOR";
    case ErrorCode::EmptyRoster: return "EMPTY_ROSTER";
    case ErrorCode::SessionClosed: return "SESSION_CLOSED";
    case ErrorCode::SessionOpen: return "SESSION_OPEN";
    case ErrorCode::StaleVersion: return "STALE_VERSION";
    case ErrorCode::GradeOutOfRange: return "GRADE_OUT_OF_RANGE";
    case ErrorCode::IncompleteGrades: return "INCOMPLETE_GRADES";
    case ErrorCode::IncompleteCalibration: return "INCOMPLETE_CALIBRATION";
    case ErrorCode::InvalidConfig: return "INVALID_CONFIG";
    case ErrorCode::Io: return "IO";
  }
  return "UNKNOWN";
}

}  // namespace proxyrank
