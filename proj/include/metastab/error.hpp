#pragma once

#include <stdexcept>
#include <string>

namespace metastab {

// Numeric values are shared with the C API (ms_status) and must stay stable.
enum class ErrorCode : int {
  InvalidArgument = 1,
  NegativeRate = 2,
  DuplicateEntry = 3,
  EmptyStateSet = 4,
  Reducible = 5,
  NonconvergentSeries = 6,
  SupportMismatch = 7,
  TargetIsWholeSpace = 8,
  EmptySubset = 9,
  ReducibleReflection = 10,
  NonpositiveGamma = 11,
  Overlap = 12,
  NotReversible = 13,
  BoundaryViolation = 14,
  NotAFlow = 15,
  EtaInA = 16,
  PsiOnDelta = 17,
  NoBottoms = 18,
  ProductTooLarge = 19,
  ParameterOutOfRange = 20,
  StateSpaceTooLarge = 21,
  SaddleNotFound = 22,
  NonSmoothBoundary = 23,
  SpecParseError = 24,
  TimesBeyondHorizon = 25,
  NoExitsObserved = 26,
  IoError = 27,
  UnknownCondition = 28,
  Internal = 99,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace metastab
