#include "memgrain/error.hpp"

namespace memgrain {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnknownType: return "UnknownType";
    case ErrorCode::kClockOutOfRange: return "ClockOutOfRange";
    case ErrorCode::kEmptyContent: return "EmptyContent";
    case ErrorCode::kExternalUnavailable: return "ExternalUnavailable";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kInvalidRange: return "InvalidRange";
    case ErrorCode::kNotFound: return "NotFound";
    case ErrorCode::kIllegalTransition: return "IllegalTransition";
    case ErrorCode::kAlreadyResolved: return "AlreadyResolved";
    case ErrorCode::kStorageFailure: return "StorageFailure";
    case ErrorCode::kCorruptLog: return "CorruptLog";
    case ErrorCode::kFutureDate: return "FutureDate";
    case ErrorCode::kLlmUnavailable: return "LlmUnavailable";
  }
  return "Unknown";
}

}  // namespace memgrain
