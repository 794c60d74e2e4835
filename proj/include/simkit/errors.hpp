#pragma once

#include <stdexcept>
#include <string>

namespace simkit {

enum class ErrorKind {
  invalid_input,
  domain,
  singularity,
  stiffness,
  nonlinear_solver,
  singular_matrix,
  non_graph,
  minimizer,
  shooting,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_input: return "invalid-input";
    case ErrorKind::domain: return "domain";
    case ErrorKind::singularity: return "singularity";
    case ErrorKind::stiffness: return "stiffness";
    case ErrorKind::nonlinear_solver: return "nonlinear-solver";
    case ErrorKind::singular_matrix: return "singular-matrix";
    case ErrorKind::non_graph: return "non-graph";
    case ErrorKind::minimizer: return "minimizer";
    case ErrorKind::shooting: return "shooting";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// Input errors map to CLI exit code 2, everything else is a numerical failure.
  bool is_input_error() const noexcept { return kind_ == ErrorKind::invalid_input; }

 private:
  ErrorKind kind_;
};

template <ErrorKind Kind>
class KindedError : public Error {
 public:
  explicit KindedError(const std::string& what) : Error(Kind, what) {}
};

using InvalidInput = KindedError<ErrorKind::invalid_input>;
using DomainError = KindedError<ErrorKind::domain>;
using SingularityError = KindedError<ErrorKind::singularity>;
using StiffnessFailure = KindedError<ErrorKind::stiffness>;
using NonlinearSolverFailure = KindedError<ErrorKind::nonlinear_solver>;
using SingularMatrixError = KindedError<ErrorKind::singular_matrix>;
using NonGraphError = KindedError<ErrorKind::non_graph>;
using MinimizerError = KindedError<ErrorKind::minimizer>;
using ShootingFailure = KindedError<ErrorKind::shooting>;

}  // namespace simkit
