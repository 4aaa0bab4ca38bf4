#pragma once

#include <stdexcept>
#include <string>

namespace factor_timing {

/// Broad failure class; the CLI maps each one onto a process exit code.
enum class ErrorCategory { config = 1, data = 2, numeric = 3 };

enum class ErrorCode {
  // configuration / usage
  invalid_argument,
  invalid_config,
  missing_artifacts,
  // data
  malformed_row,
  empty_input,
  duplicate_month,
  missing_column,
  no_overlap,
  insufficient_rows,
  empty_partition,
  misalignment,
  empty_period,
  io_failure,
  // numeric
  singular_design,
  too_few_rows,
  arity_mismatch,
  diverged_training,
  zero_denominator,
  too_few_observations,
  zero_variance,
  nonpositive_variance,
  zero_volatility,
};

constexpr const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "InvalidArgument";
    case ErrorCode::invalid_config: return "InvalidConfig";
    case ErrorCode::missing_artifacts: return "MissingArtifacts";
    case ErrorCode::malformed_row: return "MalformedRow";
    case ErrorCode::empty_input: return "EmptyInput";
    case ErrorCode::duplicate_month: return "DuplicateMonth";
    case ErrorCode::missing_column: return "MissingColumn";
    case ErrorCode::no_overlap: return "NoOverlap";
    case ErrorCode::insufficient_rows: return "InsufficientRows";
    case ErrorCode::empty_partition: return "EmptyPartition";
    case ErrorCode::misalignment: return "Misalignment";
    case ErrorCode::empty_period: return "EmptyPeriod";
    case ErrorCode::io_failure: return "IoFailure";
    case ErrorCode::singular_design: return "SingularDesign";
    case ErrorCode::too_few_rows: return "TooFewRows";
    case ErrorCode::arity_mismatch: return "ArityMismatch";
    case ErrorCode::diverged_training: return "DivergedTraining";
    case ErrorCode::zero_denominator: return "ZeroDenominator";
    case ErrorCode::too_few_observations: return "TooFewObservations";
    case ErrorCode::zero_variance: return "ZeroVariance";
    case ErrorCode::nonpositive_variance: return "NonpositiveVariance";
    case ErrorCode::zero_volatility: return "ZeroVolatility";
  }
  return "Unknown";
}

constexpr ErrorCategory category_of(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument:
    case ErrorCode::invalid_config:
    case ErrorCode::missing_artifacts:
      return ErrorCategory::config;
    case ErrorCode::malformed_row:
    case ErrorCode::empty_input:
    case ErrorCode::duplicate_month:
    case ErrorCode::missing_column:
    case ErrorCode::no_overlap:
    case ErrorCode::insufficient_rows:
    case ErrorCode::empty_partition:
    case ErrorCode::misalignment:
    case ErrorCode::empty_period:
    case ErrorCode::io_failure:
      return ErrorCategory::data;
    default:
      return ErrorCategory::numeric;
  }
}

/// The single exception type thrown by the library.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return category_of(code_); }

 private:
  ErrorCode code_;
};

}  // namespace factor_timing
