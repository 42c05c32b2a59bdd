#pragma once

#include <stdexcept>
#include <string>

namespace mixgw {

enum class ErrorCode {
  kNotSymmetric,
  kNotPsd,
  kDimensionMismatch,
  kDimensionOrder,
  kSingularSourceCovariance,
  kDegenerateSource,
  kInfeasibleWeights,
  kInvalidWeights,
  kNumericalUnderflow,
  kTooFewPoints,
  kDegenerateComponent,
  kSingularComponent,
  kSingularInnerMatrix,
  kRankDeficientP,
  kZeroDensity,
  kInvalidConfig,
  kSolverFailure,
  kParse,
  kIo,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotSymmetric: return "NotSymmetric";
    case ErrorCode::kNotPsd: return "NotPSD";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kDimensionOrder: return "DimensionOrder";
    case ErrorCode::kSingularSourceCovariance: return "SingularSourceCovariance";
    case ErrorCode::kDegenerateSource: return "DegenerateSource";
    case ErrorCode::kInfeasibleWeights: return "InfeasibleWeights";
    case ErrorCode::kInvalidWeights: return "InvalidWeights";
    case ErrorCode::kNumericalUnderflow: return "NumericalUnderflow";
    case ErrorCode::kTooFewPoints: return "TooFewPoints";
    case ErrorCode::kDegenerateComponent: return "DegenerateComponent";
    case ErrorCode::kSingularComponent: return "SingularComponent";
    case ErrorCode::kSingularInnerMatrix: return "SingularInnerMatrix";
    case ErrorCode::kRankDeficientP: return "RankDeficientP";
    case ErrorCode::kZeroDensity: return "ZeroDensity";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kSolverFailure: return "SolverFailure";
    case ErrorCode::kParse: return "Parse";
    case ErrorCode::kIo: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace mixgw
