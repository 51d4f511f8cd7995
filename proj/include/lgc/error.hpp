#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lgc {

enum class ErrorCode {
  VarCountMismatch,
  DegreeMismatch,
  NonZeroConstant,
  SingularLinearPart,
  NotCritical,
  RankAmbiguity,
  FibrednessViolation,
  DimensionMismatch,
  HypothesisViolation,
  SingularFlow,
  NoIntersection,
  NotGraphicalAfterRetry,
  ClosednessViolation,
  StageDivergence,
  ResidualTooLarge,
  NotSingular,
  ParseError,
  InvalidInput,
  Indeterminate,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::VarCountMismatch: return "VarCountMismatch";
    case ErrorCode::DegreeMismatch: return "DegreeMismatch";
    case ErrorCode::NonZeroConstant: return "NonZeroConstant";
    case ErrorCode::SingularLinearPart: return "SingularLinearPart";
    case ErrorCode::NotCritical: return "NotCritical";
    case ErrorCode::RankAmbiguity: return "RankAmbiguity";
    case ErrorCode::FibrednessViolation: return "FibrednessViolation";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::HypothesisViolation: return "HypothesisViolation";
    case ErrorCode::SingularFlow: return "SingularFlow";
    case ErrorCode::NoIntersection: return "NoIntersection";
    case ErrorCode::NotGraphicalAfterRetry: return "NotGraphicalAfterRetry";
    case ErrorCode::ClosednessViolation: return "ClosednessViolation";
    case ErrorCode::StageDivergence: return "StageDivergence";
    case ErrorCode::ResidualTooLarge: return "ResidualTooLarge";
    case ErrorCode::NotSingular: return "NotSingular";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::Indeterminate: return "Indeterminate";
  }
  return "Unknown";
}

/// Base exception for every precondition or numerical failure in the library.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// A Hessian eigenvalue fell into the band where zero and nonzero cannot be told apart.
class RankAmbiguity : public Error {
 public:
  explicit RankAmbiguity(double eigenvalue)
      : Error(ErrorCode::RankAmbiguity,
              "eigenvalue " + std::to_string(eigenvalue) + " lies in the rank dead band"),
        eigenvalue_(eigenvalue) {}

  double eigenvalue() const noexcept { return eigenvalue_; }

 private:
  double eigenvalue_;
};

/// Implicit midpoint stage solve failed to converge.
class StageDivergence : public Error {
 public:
  explicit StageDivergence(int step)
      : Error(ErrorCode::StageDivergence, "implicit stage diverged at step " + std::to_string(step)),
        step_(step) {}

  int step() const noexcept { return step_; }

 private:
  int step_;
};

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) throw Error(code, what);
}

}  // namespace lgc
