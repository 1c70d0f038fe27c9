#pragma once

#include <stdexcept>
#include <string>

namespace rankone {

/// Machine-readable error classes. The CLI prints the class name on failure.
enum class ErrorClass {
  kConfig,
  kInfeasiblePlan,
  kStageOverflow,
  kInfeasiblePairing,
  kBudgetExceeded,
  kShiftTooLarge,
  kWindowTooSmall,
  kStageMismatch,
  kFitDiverged,
  kNotRelativeProduct,
  kDegenerateStrip,
  kNotPaired,
  kEmptyRange,
  kInvalidArgument,
};

inline const char* error_class_name(ErrorClass c) {
  switch (c) {
    case ErrorClass::kConfig: return "CONFIG_ERROR";
    case ErrorClass::kInfeasiblePlan: return "INFEASIBLE_PLAN";
    case ErrorClass::kStageOverflow: return "STAGE_OVERFLOW";
    case ErrorClass::kInfeasiblePairing: return "INFEASIBLE_PAIRING";
    case ErrorClass::kBudgetExceeded: return "BUDGET_EXCEEDED";
    case ErrorClass::kShiftTooLarge: return "SHIFT_TOO_LARGE";
    case ErrorClass::kWindowTooSmall: return "WINDOW_TOO_SMALL";
    case ErrorClass::kStageMismatch: return "STAGE_MISMATCH";
    case ErrorClass::kFitDiverged: return "FIT_DIVERGED";
    case ErrorClass::kNotRelativeProduct: return "NOT_RELATIVE_PRODUCT";
    case ErrorClass::kDegenerateStrip: return "DEGENERATE_STRIP";
    case ErrorClass::kNotPaired: return "NOT_PAIRED";
    case ErrorClass::kEmptyRange: return "EMPTY_RANGE";
    case ErrorClass::kInvalidArgument: return "INVALID_ARGUMENT";
  }
  return "UNKNOWN";
}

/// Process exit status used by the CLI for each class.
inline int error_exit_code(ErrorClass c) {
  return c == ErrorClass::kConfig ? 2 : 3 + static_cast<int>(c);
}

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, const std::string& what)
      : std::runtime_error(what), cls_(cls) {}

  ErrorClass error_class() const noexcept { return cls_; }
  const char* class_name() const noexcept { return error_class_name(cls_); }

 private:
  ErrorClass cls_;
};

/// Raised by pair_with_offset_one; carries the first stage with no
/// nonnegative spacer split.
class InfeasiblePairing : public Error {
 public:
  InfeasiblePairing(std::size_t stage, const std::string& what)
      : Error(ErrorClass::kInfeasiblePairing, what), stage_(stage) {}
  std::size_t stage() const noexcept { return stage_; }

 private:
  std::size_t stage_;
};

}  // namespace rankone
