#pragma once

#include <stdexcept>
#include <string>

namespace adagauss {

// Every failure the library reports deliberately carries one of these codes so
// callers can branch on the condition instead of parsing messages.
enum class ErrorCode {
  kNotPositiveDefinite,
  kNotSymmetric,
  kShapeMismatch,
  kTooFewSamples,
  kNoConvergence,
  kEmptyInput,
  kAllZero,
  kCollapsedBatch,
  kNonScalarLoss,
  kNaNGradient,
  kNonFiniteUpdate,
  kTapeReuse,
  kInvalidConfig,
  kLabelOutOfRange,
  kNoPreviousHeads,
  kDuplicateClass,
  kTooFewSamplesForClass,
  kAdapterDimMismatch,
  kEmptyMemory,
  kEmptyTask,
  kClassMismatch,
  kPlacementFailure,
  kParseError,
  kNonNumericFeature,
  kMissingLabelColumn,
  kEmptyDataset,
  kTooFewClasses,
  kMissingCheckpoint,
  kIoError,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace adagauss
