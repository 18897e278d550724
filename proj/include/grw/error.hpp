#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace grw {

enum class ErrorKind {
  InvalidArgument,
  RankDeficient,
  NoConvergence,
  NotPositiveDefinite,
  NotSeparable,
  Unsupported,
  FormatError,
  IoError,
  Diverged,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries one of the ErrorKind tags so
/// callers (and the CLI exit path) can dispatch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::RankDeficient: return "rank-deficient";
    case ErrorKind::NoConvergence: return "no-convergence";
    case ErrorKind::NotPositiveDefinite: return "not-positive-definite";
    case ErrorKind::NotSeparable: return "not-separable";
    case ErrorKind::Unsupported: return "unsupported";
    case ErrorKind::FormatError: return "format-error";
    case ErrorKind::IoError: return "io-error";
    case ErrorKind::Diverged: return "diverged";
  }
  return "unknown";
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace grw
