#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "simkit/asymptotics.hpp"
#include "simkit/errors.hpp"
#include "simkit/grid.hpp"
#include "simkit/integrate.hpp"
#include "simkit/manifold.hpp"
#include "simkit/model.hpp"

namespace simkit {

inline constexpr const char* kExtendedMetric = "euclidean (z1, t, z2), unit weights";

/// Slice h(., t) of a family transported by the flow, with the derivatives
/// of the graph surface (z1, t) -> (z1, t, h) in extended phase space.
struct AdvectedFamily {
  GraphManifold base;
  double t = 0.0;
  std::vector<double> h_t;
  std::vector<double> h_tz1;
  std::vector<double> h_tt;
  std::vector<double> h_z1;
  std::vector<double> h_z1z1;
};

struct CurvatureReport {
  std::vector<double> grid;
  std::vector<double> K;
  std::vector<double> II_11;
  std::vector<double> II_12;
  std::vector<double> II_22;
  std::vector<double> W;
  /// Max |K| over points whose nested stencils are all central.
  double max_abs_K = 0.0;
  int boundary_excluded = 0;
  std::string metric = kExtendedMetric;
};

/// Number of points at each end where K depends on a one-sided stencil
/// (K uses a first derivative of the defect, itself built from h').
inline int curvature_boundary_width(int deriv_order) { return 2 * boundary_width(deriv_order); }

/// Time derivatives through the transport identity h_t = defect.
inline AdvectedFamily time_derivatives(const ModelSpec& model, const GraphManifold& m, double t = 0.0) {
  validate(m);
  const int slow = single_slow_index(model);
  const int fast = single_fast_index(model);
  const double step = m.spacing();
  AdvectedFamily fam;
  fam.base = m;
  fam.t = t;
  fam.h_z1 = first_derivative(m.values, step, m.deriv_order);
  fam.h_z1z1 = second_derivative(m.values, step, m.deriv_order);
  fam.h_t.resize(m.size());
  std::vector<double> f_slow(m.size());
  std::vector<double> transport(m.size());
  for (std::size_t j = 0; j < m.size(); ++j) {
    const State z = graph_point(model, m.grid[j], m.values[j]);
    const State v = eval_field(model, z);
    const Matrix jac = eval_jacobian(model, z);
    f_slow[j] = v[slow];
    fam.h_t[j] = v[fast] - fam.h_z1[j] * v[slow];
    transport[j] = jac(fast, fast) - fam.h_z1[j] * jac(slow, fast);
  }
  fam.h_tz1 = first_derivative(fam.h_t, step, m.deriv_order);
  fam.h_tt.resize(m.size());
  for (std::size_t j = 0; j < m.size(); ++j)
    fam.h_tt[j] = transport[j] * fam.h_t[j] - f_slow[j] * fam.h_tz1[j];
  return fam;
}

/// Gaussian (time-sectional) curvature of the graph surface with unit
/// normal (-h_z1, -h_t, 1)/W:  K = (h_z1z1 h_tt - h_tz1^2) / W^4.
inline CurvatureReport curvature_field(const AdvectedFamily& fam) {
  const std::size_t n = fam.base.size();
  CurvatureReport rep;
  rep.grid = fam.base.grid;
  rep.K.resize(n);
  rep.II_11.resize(n);
  rep.II_12.resize(n);
  rep.II_22.resize(n);
  rep.W.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double w2 = 1.0 + fam.h_z1[j] * fam.h_z1[j] + fam.h_t[j] * fam.h_t[j];
    const double w = std::sqrt(w2);
    rep.W[j] = w;
    rep.II_11[j] = fam.h_z1z1[j] / w;
    rep.II_12[j] = fam.h_tz1[j] / w;
    rep.II_22[j] = fam.h_tt[j] / w;
    rep.K[j] = (fam.h_z1z1[j] * fam.h_tt[j] - fam.h_tz1[j] * fam.h_tz1[j]) / (w2 * w2);
  }
  rep.boundary_excluded = curvature_boundary_width(fam.base.deriv_order);
  rep.max_abs_K = interior_max_abs(rep.K, fam.base.deriv_order, boundary_width(fam.base.deriv_order));
  return rep;
}

/// K recomputed from the second fundamental form in the exchanged tangent
/// order (Y, X); equals curvature_field's K.
inline std::vector<double> curvature_swapped_frame(const AdvectedFamily& fam) {
  const std::size_t n = fam.base.size();
  std::vector<double> k(n);
  for (std::size_t j = 0; j < n; ++j) {
    // Frame (Y, X): first fundamental form entries exchange E <-> G,
    // second fundamental form entries exchange L <-> N.
    const double e = 1.0 + fam.h_t[j] * fam.h_t[j];
    const double f = fam.h_t[j] * fam.h_z1[j];
    const double g = 1.0 + fam.h_z1[j] * fam.h_z1[j];
    const double w = std::sqrt(e * g - f * f);
    const double l = fam.h_tt[j] / w;
    const double m = fam.h_tz1[j] / w;
    const double nn = fam.h_z1z1[j] / w;
    k[j] = (l * nn - m * m) / (e * g - f * f);
  }
  return k;
}

// ---------------------------------------------------------------------------
// Flow advection of an initial-value manifold.

struct AdvectOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  /// Seeds added beyond each end of the grid with the grid spacing.
  int guard_points = 4;
  /// Initial profile used for guard seeds; when empty the guard values are
  /// extrapolated with the cubic through the four nearest grid values.
  ScalarProfile initial_profile;
};

struct AdvectedSnapshot {
  double t = 0.0;
  GraphManifold slice;
  /// Grid points dropped from the low and high ends (no extrapolation).
  std::size_t trim_low = 0;
  std::size_t trim_high = 0;
};

namespace detail {

inline double cubic_extrapolate(const double* x, const double* y, double q) {
  double out = 0.0;
  for (int i = 0; i < 4; ++i) {
    double w = 1.0;
    for (int k = 0; k < 4; ++k)
      if (k != i) w *= (q - x[k]) / (x[i] - x[k]);
    out += w * y[i];
  }
  return out;
}

}  // namespace detail

/// Method of characteristics: every seed (z1_j, h0_j) and the guard seeds
/// are integrated under the full flow; each snapshot is re-interpolated onto
/// the original grid, trimmed to the span covered by the advected points.
inline std::vector<AdvectedSnapshot> advect_family(const ModelSpec& model, const GraphManifold& h0, double T,
                                                   int snapshots, const AdvectOptions& opts = {}) {
  validate(h0);
  if (!(T > 0.0)) throw InvalidInput("advection horizon must be positive");
  if (snapshots < 1) throw InvalidInput("need at least one snapshot");
  const int slow = single_slow_index(model);
  const int fast = single_fast_index(model);
  const double step = h0.spacing();
  const std::size_t n = h0.size();
  const int guard = std::max(0, opts.guard_points);

  std::vector<double> seed_s;
  std::vector<double> seed_h;
  for (int g = guard; g >= 1; --g) {
    const double s = h0.grid.front() - g * step;
    seed_s.push_back(s);
    seed_h.push_back(opts.initial_profile ? opts.initial_profile(s)
                                          : detail::cubic_extrapolate(h0.grid.data(), h0.values.data(), s));
  }
  for (std::size_t j = 0; j < n; ++j) {
    seed_s.push_back(h0.grid[j]);
    seed_h.push_back(h0.values[j]);
  }
  for (int g = 1; g <= guard; ++g) {
    const double s = h0.grid.back() + g * step;
    seed_s.push_back(s);
    seed_h.push_back(opts.initial_profile
                         ? opts.initial_profile(s)
                         : detail::cubic_extrapolate(h0.grid.data() + n - 4, h0.values.data() + n - 4, s));
  }

  std::vector<double> times(static_cast<std::size_t>(snapshots));
  for (int k = 0; k < snapshots; ++k) times[static_cast<std::size_t>(k)] = T * (k + 1) / snapshots;
  times.back() = T;

  IntegratorOptions iopts;
  iopts.rtol = opts.rtol;
  iopts.atol = opts.atol;
  iopts.stop_times = times;

  // positions[k][i]: advected seed i at snapshot k
  std::vector<std::vector<double>> pos_s(times.size(), std::vector<double>(seed_s.size()));
  std::vector<std::vector<double>> pos_h(times.size(), std::vector<double>(seed_s.size()));
  for (std::size_t i = 0; i < seed_s.size(); ++i) {
    const State z0 = graph_point(model, seed_s[i], seed_h[i]);
    const Trajectory traj = integrate(model, z0, 0.0, T, iopts);
    for (std::size_t k = 0; k < times.size(); ++k) {
      const State z = traj.at(times[k]);
      pos_s[k][i] = z[slow];
      pos_h[k][i] = z[fast];
    }
  }

  std::vector<AdvectedSnapshot> out;
  out.reserve(times.size());
  for (std::size_t k = 0; k < times.size(); ++k) {
    std::vector<double> xs = pos_s[k];
    std::vector<double> ys = pos_h[k];
    bool increasing = true;
    bool decreasing = true;
    for (std::size_t i = 1; i < xs.size(); ++i) {
      increasing = increasing && xs[i] > xs[i - 1];
      decreasing = decreasing && xs[i] < xs[i - 1];
    }
    if (decreasing) {
      std::reverse(xs.begin(), xs.end());
      std::reverse(ys.begin(), ys.end());
    } else if (!increasing) {
      throw NonGraphError("advected seeds are no longer ordered along the slow coordinate at t=" +
                          std::to_string(times[k]));
    }
    const MonotoneCubic interp(std::move(xs), std::move(ys));
    std::size_t lo = 0;
    while (lo < n && !interp.covers(h0.grid[lo])) ++lo;
    std::size_t hi = n;
    while (hi > lo && !interp.covers(h0.grid[hi - 1])) --hi;
    if (hi - lo < 5)
      throw InvalidInput("advected span covers fewer than 5 grid points at t=" + std::to_string(times[k]));
    AdvectedSnapshot snap;
    snap.t = times[k];
    snap.trim_low = lo;
    snap.trim_high = n - hi;
    std::vector<double> grid(h0.grid.begin() + static_cast<std::ptrdiff_t>(lo),
                             h0.grid.begin() + static_cast<std::ptrdiff_t>(hi));
    std::vector<double> values(grid.size());
    for (std::size_t j = 0; j < grid.size(); ++j) values[j] = interp(grid[j]);
    snap.slice = make_graph(std::move(grid), std::move(values), h0.eps, h0.deriv_order, "advected");
    out.push_back(std::move(snap));
  }
  return out;
}

/// Exponential decay rate of sup_z1 |h(z1, t) - reference(z1)| over the
/// advected snapshots, by a least-squares fit of its logarithm (t = 0
/// included).
inline double attraction_rate(const GraphManifold& h0, const std::vector<AdvectedSnapshot>& snaps,
                              const ScalarProfile& reference) {
  std::vector<double> ts{0.0};
  std::vector<double> ls{std::log(sup_distance(h0, reference))};
  for (const auto& s : snaps) {
    ts.push_back(s.t);
    ls.push_back(std::log(sup_distance(s.slice, reference)));
  }
  const double n = static_cast<double>(ts.size());
  double st = 0, sl = 0, stt = 0, stl = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    st += ts[i];
    sl += ls[i];
    stt += ts[i] * ts[i];
    stl += ts[i] * ls[i];
  }
  return -(n * stl - st * sl) / (n * stt - st * st);
}

// ---------------------------------------------------------------------------
// Zero-curvature root solver.

enum class CurvatureJacobian {
  /// Chain rule through the stencil operators (exact up to the second
  /// field derivative in the fast direction, which is differenced).
  analytic,
  /// Forward differences on the residual.
  forward_difference,
};

struct CurvatureSolveOptions {
  int max_iterations = 100;
  double residual_tol = 1e-10;
  double step_tol = 1e-10;
  double armijo_c = 1e-4;
  double min_damping = 1.0 / 1024.0;
  CurvatureJacobian jacobian = CurvatureJacobian::analytic;
};

struct CurvatureSolveResult {
  GraphManifold manifold;
  int iterations = 0;
  double max_residual = 0.0;
  double last_step = 0.0;
  int rank_deficiency = 0;
  /// False when the solve stopped at the residual floor with the last Newton
  /// step still above step_tol.
  bool step_criterion_met = true;
};

inline std::vector<double> curvature_residual(const ModelSpec& model, const GraphManifold& m) {
  return curvature_field(time_derivatives(model, m)).K;
}

namespace detail {

inline std::string format_sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

using SparseMatrix = Eigen::SparseMatrix<double>;

inline SparseMatrix stencil_operator(std::size_t n, double step, int order, bool second) {
  std::vector<Eigen::Triplet<double>> triplets;
  std::vector<double> unit(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    unit[j] = 1.0;
    const std::vector<double> col = second ? second_derivative(unit, step, order) : first_derivative(unit, step, order);
    for (std::size_t i = 0; i < n; ++i)
      if (col[i] != 0.0)
        triplets.emplace_back(static_cast<int>(i), static_cast<int>(j), col[i]);
    unit[j] = 0.0;
  }
  SparseMatrix op(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  op.setFromTriplets(triplets.begin(), triplets.end());
  return op;
}

inline Eigen::VectorXd as_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace detail

/// dK_i/dh_j for the residual K(h) of curvature_residual.
inline Eigen::MatrixXd curvature_residual_jacobian(const ModelSpec& model, const GraphManifold& m) {
  validate(m);
  const int slow = single_slow_index(model);
  const int fast = single_fast_index(model);
  const std::size_t n = m.size();
  const auto ni = static_cast<Eigen::Index>(n);
  const double step = m.spacing();
  const detail::SparseMatrix d1 = detail::stencil_operator(n, step, m.deriv_order, false);
  const detail::SparseMatrix d2 = detail::stencil_operator(n, step, m.deriv_order, true);
  const Eigen::VectorXd h = detail::as_vector(m.values);
  const Eigen::VectorXd hz = d1 * h;
  const Eigen::VectorXd hzz = d2 * h;

  Eigen::VectorXd s(ni), transport(ni), delta(ni), sh(ni), transport_h(ni);
  for (std::size_t j = 0; j < n; ++j) {
    const auto i = static_cast<Eigen::Index>(j);
    const State z = graph_point(model, m.grid[j], m.values[j]);
    const State v = eval_field(model, z);
    const Matrix jac = eval_jacobian(model, z);
    const double e = 1e-5 * std::max(1.0, std::abs(m.values[j]));
    const Matrix jp = eval_jacobian(model, graph_point(model, m.grid[j], m.values[j] + e));
    const Matrix jm = eval_jacobian(model, graph_point(model, m.grid[j], m.values[j] - e));
    const double fhh = (jp(fast, fast) - jm(fast, fast)) / (2.0 * e);
    const double shh = (jp(slow, fast) - jm(slow, fast)) / (2.0 * e);
    s[i] = v[slow];
    sh[i] = jac(slow, fast);
    transport[i] = jac(fast, fast) - hz[i] * jac(slow, fast);
    transport_h[i] = fhh - hz[i] * shh;
    delta[i] = v[fast] - hz[i] * v[slow];
  }
  const Eigen::VectorXd htz = d1 * delta;
  const Eigen::VectorXd htt = transport.cwiseProduct(delta) - s.cwiseProduct(htz);

  const Eigen::MatrixXd d1_dense = Eigen::MatrixXd(d1);
  const Eigen::MatrixXd d_delta = Eigen::MatrixXd(transport.asDiagonal()) - s.asDiagonal() * d1_dense;
  const Eigen::MatrixXd d_htz = d1 * d_delta;
  const Eigen::MatrixXd d_transport = Eigen::MatrixXd(transport_h.asDiagonal()) - sh.asDiagonal() * d1_dense;
  Eigen::MatrixXd d_htt = delta.asDiagonal() * d_transport + transport.asDiagonal() * d_delta -
                          s.asDiagonal() * d_htz;
  d_htt.diagonal() -= sh.cwiseProduct(htz);

  const Eigen::VectorXd num = hzz.cwiseProduct(htt) - htz.cwiseProduct(htz);
  const Eigen::MatrixXd d_num = htt.asDiagonal() * Eigen::MatrixXd(d2) + hzz.asDiagonal() * d_htt -
                                2.0 * (htz.asDiagonal() * d_htz);
  const Eigen::VectorXd w2 = (1.0 + hz.array().square() + delta.array().square()).matrix();
  const Eigen::MatrixXd d_w2 = 2.0 * (hz.asDiagonal() * d1_dense) + 2.0 * (delta.asDiagonal() * d_delta);
  const Eigen::VectorXd inv_w4 = w2.array().square().inverse().matrix();
  const Eigen::VectorXd dk_dw2 = (-2.0 * num.array() / w2.array().cube()).matrix();
  return inv_w4.asDiagonal() * d_num + dk_dw2.asDiagonal() * d_w2;
}

inline Eigen::MatrixXd curvature_residual_fd_jacobian(const ModelSpec& model, const GraphManifold& m,
                                                      const Eigen::VectorXd& r) {
  const std::size_t n = m.size();
  Eigen::MatrixXd jac(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  GraphManifold probe = m;
  for (std::size_t j = 0; j < n; ++j) {
    const double dh = 1.4901161193847656e-08 * std::max(1.0, std::abs(m.values[j]));
    probe.values[j] = m.values[j] + dh;
    jac.col(static_cast<Eigen::Index>(j)) = (detail::as_vector(curvature_residual(model, probe)) - r) / dh;
    probe.values[j] = m.values[j];
  }
  return jac;
}

/// Damped Newton on K(z1_j; h) = 0 for every grid value (boundary values
/// are unknowns too, resolved through one-sided stencils), with Armijo
/// backtracking on |R|^2/2 and minimum-norm steps when the Jacobian is rank
/// deficient. Vanishing K is only necessary for invariance; see
/// select_invariant_root.
inline CurvatureSolveResult solve_curvature_criterion_detailed(const ModelSpec& model,
                                                               const std::vector<double>& grid,
                                                               const GraphManifold& seed,
                                                               const CurvatureSolveOptions& opts = {}) {
  validate(seed);
  if (seed.grid.size() != grid.size()) throw InvalidInput("seed manifold is not on the requested grid");
  for (std::size_t j = 0; j < grid.size(); ++j)
    if (std::abs(seed.grid[j] - grid[j]) > 1e-12 * std::max(1.0, std::abs(grid[j])))
      throw InvalidInput("seed manifold is not on the requested grid");
  if (seed.size() < static_cast<std::size_t>(seed.deriv_order + 2))
    throw InvalidInput("grid too coarse for the curvature stencils");

  const std::size_t n = seed.size();
  const auto ni = static_cast<Eigen::Index>(n);
  GraphManifold cur = seed;
  cur.grid = grid;
  Eigen::VectorXd r = detail::as_vector(curvature_residual(model, cur));
  if (!r.allFinite()) throw DomainError("curvature residual of the seed is not finite");

  CurvatureSolveResult res;
  double last_step = std::numeric_limits<double>::infinity();
  for (int it = 0; it <= opts.max_iterations; ++it) {
    const double rmax = r.lpNorm<Eigen::Infinity>();
    if (rmax <= opts.residual_tol && (it == 0 || last_step <= opts.step_tol)) {
      res.iterations = it;
      res.max_residual = rmax;
      res.last_step = it == 0 ? 0.0 : last_step;
      cur.provenance = "curvature";
      res.manifold = std::move(cur);
      return res;
    }
    if (it == opts.max_iterations) break;

    const Eigen::MatrixXd jac = opts.jacobian == CurvatureJacobian::analytic
                                    ? curvature_residual_jacobian(model, cur)
                                    : curvature_residual_fd_jacobian(model, cur, r);
    if (!jac.allFinite()) throw SingularMatrixError("curvature residual Jacobian is not finite");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(jac);
    if (qr.rank() == 0) throw SingularMatrixError("curvature residual Jacobian is singular");
    Eigen::VectorXd step;
    if (qr.rank() < ni) {
      res.rank_deficiency = static_cast<int>(ni - qr.rank());
      step = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(jac).solve(-r);
    } else {
      step = qr.solve(-r);
    }
    if (!step.allFinite()) throw SingularMatrixError("curvature Newton step is not finite");

    const double merit = 0.5 * r.squaredNorm();
    double alpha = 1.0;
    bool accepted = false;
    GraphManifold trial = cur;
    Eigen::VectorXd rt;
    for (; alpha >= opts.min_damping; alpha *= 0.5) {
      for (std::size_t j = 0; j < n; ++j)
        trial.values[j] = cur.values[j] + alpha * step[static_cast<Eigen::Index>(j)];
      try {
        rt = detail::as_vector(curvature_residual(model, trial));
      } catch (const SingularityError&) {
        continue;
      }
      if (rt.allFinite() && 0.5 * rt.squaredNorm() <= (1.0 - 2.0 * opts.armijo_c * alpha) * merit) {
        accepted = true;
        break;
      }
    }
    if (!accepted && rmax <= opts.residual_tol) {
      // Residual at its roundoff floor; the remaining step lives in weak
      // Jacobian modes and cannot lower the merit any further.
      res.iterations = it;
      res.max_residual = rmax;
      res.last_step = step.lpNorm<Eigen::Infinity>();
      res.step_criterion_met = false;
      cur.provenance = "curvature";
      res.manifold = std::move(cur);
      return res;
    }
    if (!accepted)
      throw NonlinearSolverFailure("curvature solver: line search failed at iteration " + std::to_string(it) +
                                   " (max |K| = " + detail::format_sci(rmax) + ")");
    last_step = alpha * step.lpNorm<Eigen::Infinity>();
    cur.values = trial.values;
    r = rt;
  }
  throw NonlinearSolverFailure("curvature solver: no convergence after " + std::to_string(opts.max_iterations) +
                               " Newton iterations (max |K| = " + detail::format_sci(r.lpNorm<Eigen::Infinity>()) + ")");
}

inline GraphManifold solve_curvature_criterion(const ModelSpec& model, const std::vector<double>& grid,
                                               const GraphManifold& seed, const CurvatureSolveOptions& opts = {}) {
  return solve_curvature_criterion_detailed(model, grid, seed, opts).manifold;
}

}  // namespace simkit
