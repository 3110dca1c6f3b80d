#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace evstr {

enum class ErrorCategory {
  kInvalidArgument,
  kInsufficientData,
  kDegenerateGeometry,
  kDegenerateInput,
  kOptimizationFailure,
  kParse,
  kOrdering,
  kData,
  kOutOfSpan,
  kLengthMismatch,
  kIo,
};

inline std::string_view to_string(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kInvalidArgument: return "invalid-argument";
    case ErrorCategory::kInsufficientData: return "insufficient-data";
    case ErrorCategory::kDegenerateGeometry: return "degenerate-geometry";
    case ErrorCategory::kDegenerateInput: return "degenerate-input";
    case ErrorCategory::kOptimizationFailure: return "optimization-failure";
    case ErrorCategory::kParse: return "parse";
    case ErrorCategory::kOrdering: return "ordering";
    case ErrorCategory::kData: return "data";
    case ErrorCategory::kOutOfSpan: return "out-of-span";
    case ErrorCategory::kLengthMismatch: return "length-mismatch";
    case ErrorCategory::kIo: return "io";
  }
  return "unknown";
}

// Every failure raised by the library carries a category so that callers
// (and the CLI) can react without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] inline void raise(ErrorCategory category,
                               const std::string& message) {
  throw Error(category, message);
}

}  // namespace evstr
