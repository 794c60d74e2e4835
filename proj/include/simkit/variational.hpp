#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/tools/minima.hpp>

#include "simkit/errors.hpp"
#include "simkit/integrate.hpp"
#include "simkit/manifold.hpp"
#include "simkit/model.hpp"

namespace simkit {

using ScalarField = std::function<double(const State&)>;
using GradientField = std::function<State(const State&)>;

/// How the slow coordinate is pinned.
enum class SlowAnchor {
  /// z_slow(tf) = z1_tf; z_slow(t0) found by shooting.
  terminal,
  /// z_slow(t0) = z1_t0 directly (graph sampling over the slow grid).
  initial,
};

/// Phi = int_{t0}^{tf} k1 |F(z)|^2 - k2(z) |z|^2 dt over the trajectory
/// from (z_slow(t0), z_fast(t0)), minimized over z_fast(t0).
struct VariationalSpec {
  double k1 = 1.0;
  ScalarField k2;
  /// Optional gradient of k2; central differences otherwise.
  GradientField k2_grad;
  double t0 = 0.0;
  double tf = 1.0;
  SlowAnchor anchor = SlowAnchor::terminal;
  double z1_tf = 0.0;
  double z1_t0 = 0.0;
  int quad_points = 64;
  double bracket_lo = 0.0;
  double bracket_hi = 1.0;
  double rtol = 1e-11;
  double atol = 1e-13;
};

inline void validate(const VariationalSpec& spec) {
  if (!(spec.tf > spec.t0)) throw InvalidInput("variational horizon requires tf > t0");
  if (!(spec.bracket_lo < spec.bracket_hi)) throw InvalidInput("variational bracket requires lo < hi");
  if (spec.quad_points < 64) throw InvalidInput("variational quad_points must be at least 64");
  if (!spec.k2) throw InvalidInput("variational spec is missing k2");
  if (!std::isfinite(spec.k1) || !std::isfinite(spec.z1_tf) || !std::isfinite(spec.z1_t0))
    throw InvalidInput("variational constants must be finite");
}

/// k1 = 1, k2 = 1 / (eps (z1 + 1)) on the Davis-Skodje model, anchored at
/// z1(t0) = z1_t0 through the terminal constraint z1(tf) = z1_t0 e^{-(tf-t0)}.
inline VariationalSpec davis_skodje_variational(double eps, double z1_t0 = 1.0, double t0 = 0.0,
                                                double tf = 1.0) {
  if (!(eps > 0.0)) throw InvalidInput("eps must be positive");
  VariationalSpec spec;
  spec.k1 = 1.0;
  spec.k2 = [eps](const State& z) { return 1.0 / (eps * (z[0] + 1.0)); };
  spec.k2_grad = [eps](const State& z) {
    State g = State::Zero(z.size());
    g[0] = -1.0 / (eps * (z[0] + 1.0) * (z[0] + 1.0));
    return g;
  };
  spec.t0 = t0;
  spec.tf = tf;
  spec.z1_tf = z1_t0 * std::exp(-(tf - t0));
  spec.z1_t0 = z1_t0;
  return spec;
}

inline State k2_gradient(const VariationalSpec& spec, const State& z) {
  if (spec.k2_grad) return spec.k2_grad(z);
  State g(z.size());
  State p = z;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double dz = jacobian_fd_step(z[i]);
    p[i] = z[i] + dz;
    const double up = spec.k2(p);
    p[i] = z[i] - dz;
    const double down = spec.k2(p);
    p[i] = z[i];
    g[i] = (up - down) / (2.0 * dz);
  }
  return g;
}

inline double running_cost(const ModelSpec& model, const VariationalSpec& spec, const State& z) {
  const State f = eval_field(model, z);
  return spec.k1 * f.squaredNorm() - spec.k2(z) * z.squaredNorm();
}

/// dL/dz = 2 k1 J^T F - |z|^2 grad k2 - 2 k2 z.
inline State running_cost_gradient(const ModelSpec& model, const VariationalSpec& spec, const State& z) {
  const State f = eval_field(model, z);
  const Matrix jac = eval_jacobian(model, z);
  return 2.0 * spec.k1 * (jac.transpose() * f) - z.squaredNorm() * k2_gradient(spec, z) - 2.0 * spec.k2(z) * z;
}

struct ShotTrajectory {
  Trajectory trajectory;
  double z1_t0 = 0.0;
  int shooting_iterations = 0;
};

namespace detail {

inline IntegratorOptions variational_integrator(const VariationalSpec& spec) {
  IntegratorOptions opts;
  opts.rtol = spec.rtol;
  opts.atol = spec.atol;
  return opts;
}

}  // namespace detail

/// Trajectory from the fast initial value z2_0 that satisfies the slow
/// anchor. The terminal constraint is met by secant shooting on z_slow(t0),
/// started from z1_tf e^{tf-t0} (exact when the slow equation is z1' = -z1).
inline ShotTrajectory shoot(const ModelSpec& model, const VariationalSpec& spec, double z2_0) {
  validate(spec);
  if (!std::isfinite(z2_0)) throw InvalidInput("fast initial value must be finite");
  const int slow = single_slow_index(model);
  const int fast = single_fast_index(model);
  const IntegratorOptions opts = detail::variational_integrator(spec);
  auto run = [&](double s) {
    State z0(2);
    z0[slow] = s;
    z0[fast] = z2_0;
    return integrate(model, z0, spec.t0, spec.tf, opts);
  };

  ShotTrajectory out;
  if (spec.anchor == SlowAnchor::initial) {
    out.z1_t0 = spec.z1_t0;
    out.trajectory = run(spec.z1_t0);
    return out;
  }

  const double tol = 1e-10 * std::max(1.0, std::abs(spec.z1_tf));
  double s0 = spec.z1_tf * std::exp(spec.tf - spec.t0);
  Trajectory t0 = run(s0);
  double r0 = t0.final_state()[slow] - spec.z1_tf;
  if (std::abs(r0) <= tol) {
    out.z1_t0 = s0;
    out.trajectory = std::move(t0);
    return out;
  }
  double s1 = s0 + (s0 != 0.0 ? 1e-3 * s0 : 1e-3);
  Trajectory t1 = run(s1);
  double r1 = t1.final_state()[slow] - spec.z1_tf;
  for (int it = 1; it <= 50; ++it) {
    if (std::abs(r1) <= tol) {
      out.z1_t0 = s1;
      out.trajectory = std::move(t1);
      out.shooting_iterations = it;
      return out;
    }
    if (r1 == r0) break;
    const double s2 = s1 - r1 * (s1 - s0) / (r1 - r0);
    s0 = s1;
    r0 = r1;
    s1 = s2;
    t1 = run(s1);
    r1 = t1.final_state()[slow] - spec.z1_tf;
  }
  throw ShootingFailure("terminal constraint z_slow(tf) = " + std::to_string(spec.z1_tf) +
                        " not met by secant shooting");
}

/// Composite 4-point Gauss-Legendre quadrature of the running cost over
/// the accepted steps, each step split into equal panels so that at least
/// spec.quad_points nodes are used; states between steps come from the
/// Hermite dense output.
inline double objective_on(const ModelSpec& model, const VariationalSpec& spec, const Trajectory& traj) {
  const std::size_t steps = traj.size() - 1;
  const std::size_t nodes_per_step = 4;
  const std::size_t panels = std::max<std::size_t>(
      1, (static_cast<std::size_t>(spec.quad_points) + nodes_per_step * steps - 1) / (nodes_per_step * steps));
  using Gauss = boost::math::quadrature::gauss<double, 4>;
  double total = 0.0;
  for (std::size_t i = 0; i < steps; ++i) {
    const double a = traj.times[i];
    const double width = (traj.times[i + 1] - a) / static_cast<double>(panels);
    for (std::size_t p = 0; p < panels; ++p) {
      const double lo = a + width * static_cast<double>(p);
      total += Gauss::integrate([&](double t) { return running_cost(model, spec, traj.at(t)); }, lo, lo + width);
    }
  }
  if (!std::isfinite(total)) throw MinimizerError("objective is not finite");
  return total;
}

inline double objective(const ModelSpec& model, const VariationalSpec& spec, double z2_0) {
  return objective_on(model, spec, shoot(model, spec, z2_0).trajectory);
}

struct CandidateComparison {
  std::string name;
  /// Candidate graph value above z_slow(t0).
  double value = 0.0;
  /// z2_0* minus value.
  double gap = 0.0;
  /// Invariance defect of the candidate graph at z_slow(t0).
  double defect = 0.0;
};

struct VariationalResult {
  double z2_0 = 0.0;
  double phi = 0.0;
  double z1_t0 = 0.0;
  Trajectory extremal;
  std::vector<double> scan_points;
  std::vector<double> scan_values;
  long evaluations = 0;
  int brent_iterations = 0;
  std::vector<CandidateComparison> candidates;
  /// Name of the candidate with the smallest |gap|; empty without candidates.
  std::string nearest_candidate;
};

/// Point-wise invariance defect of a closed-form graph at s.
inline double graph_defect_at(const ModelSpec& model, const ScalarProfile& h, double s) {
  const int slow = single_slow_index(model);
  const int fast = single_fast_index(model);
  const double ds = 1e-5 * std::max(1.0, std::abs(s));
  const double slope = (h(s + ds) - h(s - ds)) / (2.0 * ds);
  const State v = eval_field(model, graph_point(model, s, h(s)));
  return v[fast] - slope * v[slow];
}

/// 16-point scan of the bracket (endpoints included), then Brent on the
/// two cells around the lowest interior local minimum of the scan, to 1e-8
/// in z2_0.
inline VariationalResult minimize_fast_ic(const ModelSpec& model, const VariationalSpec& spec) {
  validate(spec);
  VariationalResult res;
  constexpr int scan = 16;
  const double cell = (spec.bracket_hi - spec.bracket_lo) / (scan - 1);
  // Trajectories that run into a model singularity are infeasible and score
  // +inf; any other non-finite value is an error.
  auto eval = [&](double x) {
    ++res.evaluations;
    double v = 0.0;
    try {
      v = objective(model, spec, x);
    } catch (const SingularityError&) {
      return std::numeric_limits<double>::infinity();
    }
    if (!std::isfinite(v)) throw MinimizerError("objective is not finite at z2_0 = " + std::to_string(x));
    return v;
  };
  for (int i = 0; i < scan; ++i) {
    const double x = i == scan - 1 ? spec.bracket_hi : spec.bracket_lo + cell * i;
    res.scan_points.push_back(x);
    res.scan_values.push_back(eval(x));
  }
  // Lowest interior scan point that beats both neighbours. (Phi can be
  // unbounded below towards a model singularity, so the scan's global
  // minimum may sit on the bracket edge.)
  int best = -1;
  for (int i = 1; i + 1 < scan; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double v = res.scan_values[k];
    if (std::isfinite(v) && v < res.scan_values[k - 1] && v <= res.scan_values[k + 1] &&
        (best < 0 || v < res.scan_values[static_cast<std::size_t>(best)]))
      best = i;
  }
  if (best < 0)
    throw MinimizerError("no interior minimizer in bracket [" + std::to_string(spec.bracket_lo) + ", " +
                         std::to_string(spec.bracket_hi) + "]");

  const double lo = res.scan_points[static_cast<std::size_t>(best - 1)];
  const double hi = res.scan_points[static_cast<std::size_t>(best + 1)];
  // Boost's tolerance is relative, 2^(1-bits) |x| + 2^(1-bits)/4; pick bits
  // so that it stays below 1e-8 across the cell.
  const double scale = std::max(std::abs(lo), std::abs(hi)) + 0.25;
  const int bits = static_cast<int>(std::ceil(1.0 - std::log2(1e-8 / scale)));
  std::uintmax_t iterations = 200;
  const auto [x, fx] = boost::math::tools::brent_find_minima(eval, lo, hi, bits, iterations);
  if (iterations >= 200) throw MinimizerError("Brent minimization did not converge");
  res.brent_iterations = static_cast<int>(iterations);
  res.z2_0 = x;
  res.phi = fx;

  ShotTrajectory shot = shoot(model, spec, x);
  res.z1_t0 = shot.z1_t0;
  res.extremal = std::move(shot.trajectory);

  double closest = std::numeric_limits<double>::infinity();
  for (const ReferenceGraph& ref : model.reference_graphs()) {
    CandidateComparison c;
    c.name = ref.name;
    c.value = ref.h(res.z1_t0);
    c.gap = res.z2_0 - c.value;
    c.defect = graph_defect_at(model, ref.h, res.z1_t0);
    if (std::abs(c.gap) < closest) {
      closest = std::abs(c.gap);
      res.nearest_candidate = c.name;
    }
    res.candidates.push_back(std::move(c));
  }
  return res;
}

/// Variational graph over the slow grid: one minimization per grid value,
/// with z_slow(t0) pinned to it.
inline GraphManifold variational_manifold(const ModelSpec& model, const VariationalSpec& base,
                                          const std::vector<double>& grid, int deriv_order = 4) {
  std::vector<double> values(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    VariationalSpec spec = base;
    spec.anchor = SlowAnchor::initial;
    spec.z1_t0 = grid[j];
    values[j] = minimize_fast_ic(model, spec).z2_0;
  }
  return make_graph(grid, std::move(values), model.eps(), deriv_order, "variational");
}

// ---------------------------------------------------------------------------
// Hamiltonian diagnostic.

struct HamiltonianOptions {
  double rtol = 1e-11;
  double atol = 1e-13;
  /// |lambda_fast(t0)| must not exceed this multiple of
  /// max(1, sup_t |dL/dz|); larger residuals raise ShootingFailure.
  double transversality_tol = 1e-5;
  /// When false a transversality miss is only reported.
  bool enforce_transversality = true;
};

struct HamiltonianTrace {
  std::vector<double> times;
  std::vector<double> H_values;
  /// max |H(t) - H(t0)| / max(1, |H(t0)|).
  double drift = 0.0;
  /// Costate on the same times.
  std::vector<State> adjoint;
  /// lambda_slow(tf), chosen to cancel lambda(t0) in least squares.
  double terminal_slow_costate = 0.0;
  /// |lambda_fast(t0)| and its tolerance.
  double transversality_residual = 0.0;
  double transversality_scale = 1.0;
  bool transversality_ok = true;
};

/// Costate lambda' = -dL/dz - J^T lambda integrated backward from
/// lambda_fast(tf) = 0, lambda_slow(tf) = p, with p chosen so that lambda(t0)
/// is as close to zero as possible (it is affine in p). Free fast initial
/// state demands lambda_fast(t0) = 0; H = L + lambda^T F is then tracked on
/// the trajectory's own step times.
inline HamiltonianTrace hamiltonian_trace(const ModelSpec& model, const VariationalSpec& spec,
                                          const Trajectory& traj, const HamiltonianOptions& hopt = {}) {
  validate(spec);
  const int slow = single_slow_index(model);
  const int fast = single_fast_index(model);
  const double t0 = traj.t0();
  const double tf = traj.tf();
  const Eigen::Index n = model.dim();

  // Reversed time tau = tf - t.
  OdeSystem costate;
  costate.rhs = [&](double tau, const State& lam) {
    const State z = traj.at(tf - tau);
    return State(running_cost_gradient(model, spec, z) + eval_jacobian(model, z).transpose() * lam);
  };
  costate.jac = [&](double tau, const State&) { return Matrix(eval_jacobian(model, traj.at(tf - tau)).transpose()); };

  IntegratorOptions opts;
  opts.rtol = hopt.rtol;
  opts.atol = hopt.atol;
  for (std::size_t i = 1; i + 1 < traj.size(); ++i) opts.stop_times.push_back(tf - traj.times[i]);

  auto solve = [&](double p) {
    State lam_tf = State::Zero(n);
    lam_tf[slow] = p;
    return integrate_system(costate, lam_tf, 0.0, tf - t0, opts, model.name() + "-costate");
  };
  const Trajectory base = solve(0.0);
  const Trajectory unit = solve(1.0);
  const State a = base.final_state();
  const State b = unit.final_state() - a;
  const double p = b.squaredNorm() > 0.0 ? -a.dot(b) / b.squaredNorm() : 0.0;
  const Trajectory lam = p == 0.0 ? base : solve(p);

  HamiltonianTrace out;
  out.terminal_slow_costate = p;
  double grad_scale = 0.0;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const double t = traj.times[i];
    const State& z = traj.states[i];
    const State l = lam.at(tf - t);
    out.times.push_back(t);
    out.adjoint.push_back(l);
    out.H_values.push_back(running_cost(model, spec, z) + l.dot(eval_field(model, z)));
    grad_scale = std::max(grad_scale, running_cost_gradient(model, spec, z).lpNorm<Eigen::Infinity>());
  }
  const double h0 = out.H_values.front();
  for (double h : out.H_values) out.drift = std::max(out.drift, std::abs(h - h0));
  out.drift /= std::max(1.0, std::abs(h0));

  out.transversality_residual = std::abs(out.adjoint.front()[fast]);
  out.transversality_scale = std::max(1.0, grad_scale);
  out.transversality_ok = out.transversality_residual <= hopt.transversality_tol * out.transversality_scale;
  if (!out.transversality_ok && hopt.enforce_transversality)
    throw ShootingFailure("adjoint transversality lambda_fast(t0) = 0 violated: residual " +
                          std::to_string(out.transversality_residual) + " (scale " +
                          std::to_string(out.transversality_scale) + "); trajectory is not an extremal");
  return out;
}

}  // namespace simkit
