#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "simkit/asymptotics.hpp"
#include "simkit/errors.hpp"
#include "simkit/geometry.hpp"
#include "simkit/manifold.hpp"
#include "simkit/model.hpp"
#include "simkit/variational.hpp"

namespace simkit {

enum class Method { qssa, eps0, eps1, curvature, variational };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::qssa: return "qssa";
    case Method::eps0: return "eps0";
    case Method::eps1: return "eps1";
    case Method::curvature: return "curvature";
    case Method::variational: return "variational";
  }
  return "unknown";
}

inline Method parse_method(const std::string& name) {
  for (Method m : {Method::qssa, Method::eps0, Method::eps1, Method::curvature, Method::variational})
    if (to_string(m) == name) return m;
  throw InvalidInput("unknown method '" + name + "' (expected qssa, eps0, eps1, curvature, variational)");
}

/// Objective constants used when a method needs the variational problem and
/// none is supplied: k1 = 1, k2 = 1/(eps (z1+1)) for Davis-Skodje, k2 = 0 with
/// bracket (-1, 1) for the linear model.
inline VariationalSpec default_variational_spec(const ModelSpec& model) {
  if (model.name() == "davis-skodje") return davis_skodje_variational(model.eps());
  if (model.name() == "linear") {
    VariationalSpec spec;
    spec.k2 = [](const State&) { return 0.0; };
    spec.k2_grad = [](const State& z) { return State(State::Zero(z.size())); };
    spec.bracket_lo = -1.0;
    spec.bracket_hi = 1.0;
    spec.z1_t0 = 1.0;
    spec.z1_tf = std::exp(-1.0);
    return spec;
  }
  throw InvalidInput("no default variational constants for model '" + model.name() + "'");
}

struct MethodOptions {
  int deriv_order = 4;
  CurvatureSolveOptions curvature;
  /// Seed for the curvature solver; QSSA when absent.
  std::optional<GraphManifold> curvature_seed;
  std::optional<VariationalSpec> variational;
};

inline GraphManifold compute_manifold(Method method, const ModelSpec& model, const std::vector<double>& grid,
                                      const MethodOptions& opts = {}) {
  switch (method) {
    case Method::qssa: return qssa(model, grid, opts.deriv_order);
    case Method::eps0: return eps_expansion(model, grid, 0, opts.deriv_order);
    case Method::eps1: return eps_expansion(model, grid, 1, opts.deriv_order);
    case Method::curvature: {
      const GraphManifold seed = opts.curvature_seed ? *opts.curvature_seed : qssa(model, grid, opts.deriv_order);
      return solve_curvature_criterion(model, grid, seed, opts.curvature);
    }
    case Method::variational: {
      const VariationalSpec spec = opts.variational ? *opts.variational : default_variational_spec(model);
      return variational_manifold(model, spec, grid, opts.deriv_order);
    }
  }
  throw InvalidInput("unknown method");
}

}  // namespace simkit
