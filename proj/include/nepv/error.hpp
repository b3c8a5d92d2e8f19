#pragma once

#include <stdexcept>
#include <string>

namespace nepv {

enum class ErrorKind {
  argument,
  symmetry,
  orthonormality,
  definiteness,
  positivity,
  degenerate_problem,
  rank_preserving,
  gap,
  mispositioning,
  singular_scaling,
  capability,
  io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::argument: return "argument";
    case ErrorKind::symmetry: return "symmetry-violation";
    case ErrorKind::orthonormality: return "orthonormality";
    case ErrorKind::definiteness: return "definiteness";
    case ErrorKind::positivity: return "positivity";
    case ErrorKind::degenerate_problem: return "degenerate-problem";
    case ErrorKind::rank_preserving: return "rank-preserving";
    case ErrorKind::gap: return "gap";
    case ErrorKind::mispositioning: return "mispositioning";
    case ErrorKind::singular_scaling: return "singular-scaling";
    case ErrorKind::capability: return "capability";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

/// Every failure raised by the library. `kind()` lets callers branch without
/// parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace nepv
