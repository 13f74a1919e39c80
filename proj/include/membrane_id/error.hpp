#pragma once

#include <stdexcept>
#include <string>

namespace membrane_id {

enum class ErrorCode {
  InvalidArgument,
  NumericalFailure,
  StepsizeTooLarge,
  InfeasibleIterate,
  UndefinedMetric,
  InvalidPerturbation,
  ForwardFailure,
  Io,
  Config,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::NumericalFailure: return "numerical-failure";
    case ErrorCode::StepsizeTooLarge: return "stepsize-too-large";
    case ErrorCode::InfeasibleIterate: return "infeasible-iterate";
    case ErrorCode::UndefinedMetric: return "undefined-metric";
    case ErrorCode::InvalidPerturbation: return "invalid-perturbation";
    case ErrorCode::ForwardFailure: return "forward-failure";
    case ErrorCode::Io: return "io";
    case ErrorCode::Config: return "config";
  }
  return "unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool condition, const std::string& what) {
  if (!condition) throw Error(ErrorCode::InvalidArgument, what);
}

}  // namespace membrane_id
