#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "simkit/errors.hpp"
#include "simkit/grid.hpp"
#include "simkit/manifold.hpp"
#include "simkit/model.hpp"

namespace simkit {

inline constexpr const char* kDefectConvention = "delta = f_fast(z1,h) - h'(z1) * f_slow(z1,h)";

struct DefectReport {
  std::vector<double> grid;
  std::vector<double> defect;
  /// Max |defect| over interior points (one-sided stencil points excluded).
  double max_abs = 0.0;
  /// Richardson estimate of the stencil contribution to max_abs, from a
  /// comparison with the same defect on the grid of every other point.
  /// NaN when that grid is too coarse.
  double stencil_error_bound = std::numeric_limits<double>::quiet_NaN();
  int boundary_excluded = 0;
  std::string convention = kDefectConvention;
};

/// Point-wise invariance residual of the graph under the flow.
inline std::vector<double> defect_field(const ModelSpec& model, const GraphManifold& m) {
  validate(m);
  const int slow = single_slow_index(model);
  const int fast = single_fast_index(model);
  if (m.size() < static_cast<std::size_t>(m.deriv_order + 1))
    throw InvalidInput("grid too coarse for the stencil order");
  const std::vector<double> dh = first_derivative(m.values, m.spacing(), m.deriv_order);
  std::vector<double> delta(m.size());
  for (std::size_t j = 0; j < m.size(); ++j) {
    const State v = eval_field(model, graph_point(model, m.grid[j], m.values[j]));
    delta[j] = v[fast] - dh[j] * v[slow];
  }
  return delta;
}

inline DefectReport invariance_defect(const ModelSpec& model, const GraphManifold& m) {
  DefectReport rep;
  rep.grid = m.grid;
  rep.defect = defect_field(model, m);
  rep.max_abs = interior_max_abs(rep.defect, m.deriv_order);
  rep.boundary_excluded = boundary_width(m.deriv_order);

  const std::size_t coarse_n = (m.size() + 1) / 2;
  if (coarse_n >= 5 && coarse_n >= static_cast<std::size_t>(m.deriv_order + 1)) {
    GraphManifold coarse = m;
    coarse.grid.clear();
    coarse.values.clear();
    for (std::size_t j = 0; j < m.size(); j += 2) {
      coarse.grid.push_back(m.grid[j]);
      coarse.values.push_back(m.values[j]);
    }
    const std::vector<double> dc = defect_field(model, coarse);
    const std::size_t w = static_cast<std::size_t>(boundary_width(m.deriv_order));
    double worst = 0.0;
    for (std::size_t j = w; j + w < dc.size(); ++j)
      worst = std::max(worst, std::abs(dc[j] - rep.defect[2 * j]));
    rep.stencil_error_bound = worst / (std::pow(2.0, m.deriv_order) - 1.0);
  }
  return rep;
}

namespace detail {

// Scalar Newton for g(h) = 0 with derivative dg; backtracks on singular or
// non-finite trial points.
template <class Residual, class Derivative>
double scalar_newton(Residual g, Derivative dg, double h, double tol, int max_iter, const char* what) {
  double r = g(h);
  for (int it = 0; it < max_iter; ++it) {
    if (std::abs(r) <= tol) return h;
    const double d = dg(h);
    if (!(std::abs(d) > 0.0) || !std::isfinite(d))
      throw SingularMatrixError(std::string(what) + ": vanishing derivative in Newton iteration");
    double step = -r / d;
    bool moved = false;
    for (int back = 0; back < 30 && !moved; ++back, step *= 0.5) {
      try {
        const double rn = g(h + step);
        if (std::isfinite(rn)) {
          h += step;
          r = rn;
          moved = true;
        }
      } catch (const SingularityError&) {
      }
    }
    if (!moved) break;
  }
  if (std::abs(r) <= tol) return h;
  throw NonlinearSolverFailure(std::string(what) + ": Newton did not converge in " + std::to_string(max_iter) +
                               " iterations");
}

}  // namespace detail

/// Quasi-steady-state graph: f_fast(z1, h) = 0 point-wise, Newton seeds
/// chained along the grid starting from 0.
inline GraphManifold qssa(const ModelSpec& model, const std::vector<double>& grid, int deriv_order = 4) {
  const int fast = single_fast_index(model);
  single_slow_index(model);
  const double tol = 1e-12 / model.eps();
  std::vector<double> values(grid.size());
  double seed = 0.0;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const double s = grid[j];
    auto g = [&](double h) { return eval_field(model, graph_point(model, s, h))[fast]; };
    auto dg = [&](double h) { return eval_jacobian(model, graph_point(model, s, h))(fast, fast); };
    seed = detail::scalar_newton(g, dg, seed, tol, 50, "qssa");
    values[j] = seed;
  }
  return make_graph(grid, std::move(values), model.eps(), deriv_order, "qssa");
}

namespace detail {

inline const FastSplit& require_split(const ModelSpec& model) {
  if (!model.has_fast_split())
    throw InvalidInput("model '" + model.name() + "' has no fast split; eps expansion unavailable");
  return *model.definition().fast_split;
}

inline double leading_fast(const ModelSpec& model, double s, double h) {
  const State z = graph_point(model, s, h);
  model.check_domain(z);
  return require_split(model).leading(z)[0];
}

inline double leading_fast_slope(const ModelSpec& model, double s, double h) {
  const double step = 1e-7 * std::max(1.0, std::abs(h));
  return (leading_fast(model, s, h + step) - leading_fast(model, s, h - step)) / (2.0 * step);
}

}  // namespace detail

/// Critical manifold G0(z1, h0) = 0.
inline GraphManifold critical_manifold(const ModelSpec& model, const std::vector<double>& grid,
                                       int deriv_order = 4) {
  detail::require_split(model);
  single_fast_index(model);
  std::vector<double> values(grid.size());
  double seed = 0.0;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const double s = grid[j];
    auto g = [&](double h) { return detail::leading_fast(model, s, h); };
    auto dg = [&](double h) { return detail::leading_fast_slope(model, s, h); };
    seed = detail::scalar_newton(g, dg, seed, 1e-12, 50, "eps expansion (order 0)");
    values[j] = seed;
  }
  return make_graph(grid, std::move(values), model.eps(), deriv_order, "eps0");
}

/// First-order coefficient h1 = [h0' f_slow - G1] / (dG0/dz_fast) along h0.
inline std::vector<double> eps_correction(const ModelSpec& model, const GraphManifold& h0) {
  const FastSplit& split = detail::require_split(model);
  const int slow = single_slow_index(model);
  validate(h0);
  const std::vector<double> dh = first_derivative(h0.values, h0.spacing(), h0.deriv_order);
  std::vector<double> h1(h0.size());
  for (std::size_t j = 0; j < h0.size(); ++j) {
    const double s = h0.grid[j];
    const double h = h0.values[j];
    const double slope = detail::leading_fast_slope(model, s, h);
    if (std::abs(slope) <= 1e-12)
      throw SingularMatrixError("eps expansion: dG0/dz_fast vanishes at z1=" + std::to_string(s));
    const State z = graph_point(model, s, h);
    const double f_slow = eval_field(model, z)[slow];
    h1[j] = (dh[j] * f_slow - split.correction(z)[0]) / slope;
  }
  return h1;
}

inline GraphManifold eps_expansion(const ModelSpec& model, const std::vector<double>& grid, int order,
                                   int deriv_order = 4) {
  if (order != 0 && order != 1) throw InvalidInput("eps expansion order must be 0 or 1");
  GraphManifold h0 = critical_manifold(model, grid, deriv_order);
  if (order == 0) return h0;
  const std::vector<double> h1 = eps_correction(model, h0);
  for (std::size_t j = 0; j < h0.size(); ++j) h0.values[j] += model.eps() * h1[j];
  h0.provenance = "eps1";
  return h0;
}

}  // namespace simkit
