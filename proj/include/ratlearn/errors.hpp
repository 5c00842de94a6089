#pragma once

#include <stdexcept>
#include <string>

namespace ratlearn {

enum class ErrorCode {
  DimensionMismatch,
  InvalidArgument,
  Infeasible,
  IllConditioned,
  SingularSystem,
  Format,
};

inline const char *to_string(ErrorCode code) {
  switch (code) {
  case ErrorCode::DimensionMismatch:
    return "dimension mismatch";
  case ErrorCode::InvalidArgument:
    return "invalid argument";
  case ErrorCode::Infeasible:
    return "infeasible";
  case ErrorCode::IllConditioned:
    return "ill-conditioned";
  case ErrorCode::SingularSystem:
    return "singular system";
  case ErrorCode::Format:
    return "format error";
  }
  return "unknown";
}

/// Single exception type for the library; `code()` tells callers what failed.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string &what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

/// Solver failures (Infeasible, IllConditioned, SingularSystem) are the ones the
/// learner may attach iteration/datapoint context to.
inline bool is_solver_failure(ErrorCode code) {
  return code == ErrorCode::Infeasible || code == ErrorCode::IllConditioned ||
         code == ErrorCode::SingularSystem;
}

} // namespace ratlearn
