#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace memgrain {

enum class ErrorCode {
  kUnknownType,
  kClockOutOfRange,
  kEmptyContent,
  kExternalUnavailable,
  kDimensionMismatch,
  kInvalidArgument,
  kInvalidRange,
  kNotFound,
  kIllegalTransition,
  kAlreadyResolved,
  kStorageFailure,
  kCorruptLog,
  kFutureDate,
  kLlmUnavailable,
};

std::string_view to_string(ErrorCode code);

// Domain error carried through every layer. The service maps each code to a
// single (HTTP status, machine code) pair.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  // Position of the failing element for batch operations.
  std::optional<std::size_t> index;
  // Offending sequence number for log corruption.
  std::optional<std::uint64_t> seq;

 private:
  ErrorCode code_;
};

}  // namespace memgrain
