#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sribo {

enum class ErrorCode {
  kInvalidDrag,
  kDegeneratePosition,
  kDimensionMismatch,
  kInconsistentWindow,
  kInvalidConfig,
  kNumericalFailure,
  kAnchorCollision,
  kParseError,
  kNonMonotoneTime,
  kUnknownKey,
  kTypeError,
  kIoError,
  kEmptyInput,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidDrag: return "invalid-drag";
    case ErrorCode::kDegeneratePosition: return "degenerate-position";
    case ErrorCode::kDimensionMismatch: return "dimension-mismatch";
    case ErrorCode::kInconsistentWindow: return "inconsistent-window";
    case ErrorCode::kInvalidConfig: return "invalid-config";
    case ErrorCode::kNumericalFailure: return "numerical-failure";
    case ErrorCode::kAnchorCollision: return "anchor-collision";
    case ErrorCode::kParseError: return "parse-error";
    case ErrorCode::kNonMonotoneTime: return "non-monotone-time";
    case ErrorCode::kUnknownKey: return "unknown-key";
    case ErrorCode::kTypeError: return "type-error";
    case ErrorCode::kIoError: return "io-error";
    case ErrorCode::kEmptyInput: return "empty-input";
  }
  return "unknown";
}

/// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace sribo
