#include "adagauss/error.hpp"

namespace adagauss {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::kNotSymmetric: return "NotSymmetric";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kTooFewSamples: return "TooFewSamples";
    case ErrorCode::kNoConvergence: return "NoConvergence";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kAllZero: return "AllZero";
    case ErrorCode::kCollapsedBatch: return "CollapsedBatch";
    case ErrorCode::kNonScalarLoss: return "NonScalarLoss";
    case ErrorCode::kNaNGradient: return "NaNGradient";
    case ErrorCode::kNonFiniteUpdate: return "NonFiniteUpdate";
    case ErrorCode::kTapeReuse: return "TapeReuse";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kLabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::kNoPreviousHeads: return "NoPreviousHeads";
    case ErrorCode::kDuplicateClass: return "DuplicateClass";
    case ErrorCode::kTooFewSamplesForClass: return "TooFewSamplesForClass";
    case ErrorCode::kAdapterDimMismatch: return "AdapterDimMismatch";
    case ErrorCode::kEmptyMemory: return "EmptyMemory";
    case ErrorCode::kEmptyTask: return "EmptyTask";
    case ErrorCode::kClassMismatch: return "ClassMismatch";
    case ErrorCode::kPlacementFailure: return "PlacementFailure";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kNonNumericFeature: return "NonNumericFeature";
    case ErrorCode::kMissingLabelColumn: return "MissingLabelColumn";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kTooFewClasses: return "TooFewClasses";
    case ErrorCode::kMissingCheckpoint: return "MissingCheckpoint";
    case ErrorCode::kIoError: return "IoError";
  }
  return "UnknownError";
}

}  // namespace adagauss
