#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "simkit/errors.hpp"
#include "simkit/model.hpp"

namespace simkit {

/// Right-hand side y' = f(t, y) with optional Jacobian df/dy.
struct OdeSystem {
  std::function<State(double, const State&)> rhs;
  std::function<Matrix(double, const State&)> jac;
};

struct IntegratorOptions {
  double rtol = 1e-8;
  double atol = 1e-10;
  /// Initial step; 0 selects one automatically.
  double initial_step = 0.0;
  /// Absolute step below which the integration is declared failed.
  double min_step = 1e-14;
  long max_steps = 20'000'000;
  /// Allow the switch to the implicit scheme when the explicit pair is
  /// detected to be stability-limited.
  bool allow_implicit = true;
  /// Start directly in implicit mode (mainly for testing the fallback).
  bool force_implicit = false;
  /// Times the stepper must land on exactly, in (t0, tf].
  std::vector<double> stop_times;
};

struct IntegrationStats {
  long accepted = 0;
  long rejected = 0;
  long rhs_evals = 0;
  long newton_iterations = 0;
  bool switched_to_implicit = false;
  double switch_time = std::numeric_limits<double>::quiet_NaN();
};

/// Accepted steps of an integration plus the derivatives needed for
/// cubic Hermite dense output.
struct Trajectory {
  std::vector<double> times;
  std::vector<State> states;
  std::vector<State> derivs;
  std::string model_name;
  double rtol = 0.0;
  double atol = 0.0;
  IntegrationStats stats;

  std::size_t size() const noexcept { return times.size(); }
  double t0() const { return times.front(); }
  double tf() const { return times.back(); }
  const State& final_state() const { return states.back(); }

  /// Cubic Hermite interpolation between the bracketing accepted steps.
  State at(double t) const {
    const double slack = 1e-12 * std::max(1.0, std::abs(tf() - t0()));
    if (t < t0() - slack || t > tf() + slack)
      throw InvalidInput("dense output requested outside the integrated interval");
    t = std::clamp(t, t0(), tf());
    auto it = std::upper_bound(times.begin(), times.end(), t);
    std::size_t i = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, (it - times.begin()) - 1));
    if (i + 1 >= times.size()) i = times.size() - 2;
    const double h = times[i + 1] - times[i];
    const double s = (t - times[i]) / h;
    const double s2 = s * s;
    const double s3 = s2 * s;
    return (2.0 * s3 - 3.0 * s2 + 1.0) * states[i] + (s3 - 2.0 * s2 + s) * h * derivs[i] +
           (-2.0 * s3 + 3.0 * s2) * states[i + 1] + (s3 - s2) * h * derivs[i + 1];
  }
};

namespace detail {

// Dormand-Prince 5(4) tableau.
struct DormandPrince {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
};

inline double scaled_error(const State& err, const State& y0, const State& y1, double rtol, double atol) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < err.size(); ++i) {
    const double sc = atol + rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
    worst = std::max(worst, std::abs(err[i]) / sc);
  }
  return worst;
}

class Stepper {
 public:
  Stepper(const OdeSystem& sys, const IntegratorOptions& opts, IntegrationStats& stats)
      : sys_(sys), opts_(opts), stats_(stats) {}

  State f(double t, const State& y) {
    ++stats_.rhs_evals;
    State v = sys_.rhs(t, y);
    if (!v.allFinite()) throw DomainError("non-finite derivative during integration at t=" + std::to_string(t));
    return v;
  }

  Matrix jacobian(double t, const State& y) {
    if (sys_.jac) return sys_.jac(t, y);
    const Eigen::Index n = y.size();
    Matrix j(n, n);
    State yp = y;
    State ym = y;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double step = jacobian_fd_step(y[i]);
      yp[i] = y[i] + step;
      ym[i] = y[i] - step;
      j.col(i) = (f(t, yp) - f(t, ym)) / (2.0 * step);
      yp[i] = y[i];
      ym[i] = y[i];
    }
    return j;
  }

  struct ExplicitResult {
    State y;
    State dy;
    double err;
    double stiffness;  // h * |lambda| estimate
  };

  ExplicitResult dopri_step(double t, const State& y, const State& k1, double h) {
    using DP = DormandPrince;
    const State k2 = f(t + DP::c2 * h, y + h * DP::a21 * k1);
    const State k3 = f(t + DP::c3 * h, y + h * (DP::a31 * k1 + DP::a32 * k2));
    const State k4 = f(t + DP::c4 * h, y + h * (DP::a41 * k1 + DP::a42 * k2 + DP::a43 * k3));
    const State k5 =
        f(t + DP::c5 * h, y + h * (DP::a51 * k1 + DP::a52 * k2 + DP::a53 * k3 + DP::a54 * k4));
    const State y6 = y + h * (DP::a61 * k1 + DP::a62 * k2 + DP::a63 * k3 + DP::a64 * k4 + DP::a65 * k5);
    const State k6 = f(t + h, y6);
    State y1 = y + h * (DP::b1 * k1 + DP::b3 * k3 + DP::b4 * k4 + DP::b5 * k5 + DP::b6 * k6);
    State k7 = f(t + h, y1);
    const State e =
        h * (DP::e1 * k1 + DP::e3 * k3 + DP::e4 * k4 + DP::e5 * k5 + DP::e6 * k6 + DP::e7 * k7);
    const double err = scaled_error(e, y, y1, opts_.rtol, opts_.atol);
    const double den = (y1 - y6).squaredNorm();
    const double stiff = den > 0.0 ? h * std::sqrt((k7 - k6).squaredNorm() / den) : 0.0;
    return {std::move(y1), std::move(k7), err, stiff};
  }

  // Solves Y - a f(t, Y) = r by Newton's method starting from guess.
  State implicit_solve(double t, double a, const State& r, State guess) {
    const Eigen::Index n = r.size();
    const Matrix iter = Matrix::Identity(n, n) - a * jacobian(t, guess);
    Eigen::PartialPivLU<Matrix> lu(iter);
    for (int it = 0; it < 25; ++it) {
      ++stats_.newton_iterations;
      const State g = guess - a * f(t, guess) - r;
      const State delta = lu.solve(-g);
      if (!delta.allFinite()) break;
      guess += delta;
      double worst = 0.0;
      for (Eigen::Index i = 0; i < n; ++i)
        worst = std::max(worst, std::abs(delta[i]) / (opts_.atol + opts_.rtol * std::abs(guess[i])));
      if (worst <= 1e-2) return guess;
    }
    throw NonlinearSolverFailure("implicit stage: Newton did not converge in 25 iterations at t=" +
                                 std::to_string(t));
  }

  // One TR-BDF2 step (trapezoid to t + gamma h, then BDF2 to t + h); L-stable.
  State trbdf2(double t, const State& y, const State& fy, double h) {
    static const double gamma = 2.0 - std::sqrt(2.0);
    const double tg = t + gamma * h;
    const State yg = implicit_solve(tg, 0.5 * gamma * h, y + 0.5 * gamma * h * fy, y + gamma * h * fy);
    const double w = 1.0 / (gamma * (2.0 - gamma));
    const double d = (1.0 - gamma) / (2.0 - gamma);
    const State rhs = w * yg - (1.0 - gamma) * (1.0 - gamma) * w * y;
    return implicit_solve(t + h, d * h, rhs, yg);
  }

 private:
  const OdeSystem& sys_;
  const IntegratorOptions& opts_;
  IntegrationStats& stats_;
};

}  // namespace detail

/// Adaptive integration of y' = f(t, y) on [t0, tf].
///
/// Dormand-Prince 5(4) with max-norm error control
/// |err_i| <= atol + rtol * |y_i|. When the stiffness indicator h*|lambda|
/// exceeds 3.25 on 15 accepted steps (six clean steps reset the count) the
/// stepper switches for the remainder of the interval to TR-BDF2 with
/// step-doubling error estimates.
inline Trajectory integrate_system(const OdeSystem& sys, const State& y0, double t0, double tf,
                                   const IntegratorOptions& opts, std::string name = {}) {
  if (!(tf > t0)) throw InvalidInput("integration requires tf > t0");
  if (!(opts.rtol > 0.0) || !(opts.atol > 0.0)) throw InvalidInput("tolerances must be positive");
  if (!y0.allFinite()) throw DomainError("non-finite initial state");

  Trajectory traj;
  traj.model_name = std::move(name);
  traj.rtol = opts.rtol;
  traj.atol = opts.atol;
  detail::Stepper stepper(sys, opts, traj.stats);

  std::vector<double> stops;
  for (double s : opts.stop_times)
    if (s > t0 && s < tf) stops.push_back(s);
  std::sort(stops.begin(), stops.end());
  stops.push_back(tf);
  std::size_t next_stop = 0;

  double t = t0;
  State y = y0;
  State fy = stepper.f(t, y);
  traj.times.push_back(t);
  traj.states.push_back(y);
  traj.derivs.push_back(fy);

  const double span = tf - t0;
  double h = opts.initial_step;
  if (!(h > 0.0)) {
    // Hairer's starting-step heuristic.
    double d0 = 0.0, d1 = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double sc = opts.atol + opts.rtol * std::abs(y[i]);
      d0 = std::max(d0, std::abs(y[i]) / sc);
      d1 = std::max(d1, std::abs(fy[i]) / sc);
    }
    h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h = std::min(h, span);
    const State f1 = stepper.f(t + h, y + h * fy);
    double d2 = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i)
      d2 = std::max(d2, std::abs(f1[i] - fy[i]) / (opts.atol + opts.rtol * std::abs(y[i])));
    d2 /= h;
    const double h1 = std::max(d1, d2) <= 1e-15 ? std::max(1e-6, h * 1e-3)
                                                 : std::pow(0.01 / std::max(d1, d2), 0.2);
    h = std::min({100.0 * h, h1, span});
  }

  bool implicit = opts.force_implicit;
  if (implicit) {
    traj.stats.switched_to_implicit = true;
    traj.stats.switch_time = t0;
  }
  int stiff_hits = 0;
  int clean_steps = 0;
  bool last_rejected = false;

  while (next_stop < stops.size()) {
    if (traj.stats.accepted + traj.stats.rejected >= opts.max_steps)
      throw StiffnessFailure("step budget exhausted at t=" + std::to_string(t));
    const double target = stops[next_stop];
    const double min_step = std::max(opts.min_step, 8.0 * std::numeric_limits<double>::epsilon() * std::abs(t));
    bool lands = false;
    if (t + h >= target || target - (t + h) < min_step) {
      h = target - t;
      lands = true;
    }
    if (h < min_step) throw StiffnessFailure("step size underflow at t=" + std::to_string(t));

    State y1;
    State f1;
    double err = 0.0;
    double order = 5.0;
    if (!implicit) {
      auto res = stepper.dopri_step(t, y, fy, h);
      y1 = std::move(res.y);
      f1 = std::move(res.dy);
      err = res.err;
      if (err <= 1.0 && opts.allow_implicit) {
        if (res.stiffness > 3.25) {
          clean_steps = 0;
          if (++stiff_hits >= 15) {
            implicit = true;
            traj.stats.switched_to_implicit = true;
            traj.stats.switch_time = t + h;
          }
        } else if (++clean_steps >= 6) {
          stiff_hits = 0;
        }
      }
    } else {
      order = 2.0;
      State full;
      State half;
      bool solved = false;
      for (int attempt = 0; attempt < 4 && !solved; ++attempt) {
        try {
          full = stepper.trbdf2(t, y, fy, h);
          const State mid = stepper.trbdf2(t, y, fy, 0.5 * h);
          half = stepper.trbdf2(t + 0.5 * h, mid, stepper.f(t + 0.5 * h, mid), 0.5 * h);
          solved = true;
        } catch (const NonlinearSolverFailure&) {
          if (attempt == 3) throw;
          h *= 0.5;
          lands = false;
          if (h < min_step) throw StiffnessFailure("step size underflow at t=" + std::to_string(t));
        }
      }
      err = detail::scaled_error((half - full) / 3.0, y, half, opts.rtol, opts.atol);
      y1 = std::move(half);
      if (err <= 1.0) f1 = stepper.f(t + h, y1);
    }

    if (err <= 1.0 && y1.allFinite()) {
      t = lands ? target : t + h;
      if (lands) ++next_stop;
      y = std::move(y1);
      fy = std::move(f1);
      traj.times.push_back(t);
      traj.states.push_back(y);
      traj.derivs.push_back(fy);
      ++traj.stats.accepted;
      double fac = err > 0.0 ? 0.9 * std::pow(err, -1.0 / order) : 5.0;
      fac = std::clamp(fac, 0.2, last_rejected ? 1.0 : 5.0);
      h *= fac;
      last_rejected = false;
    } else {
      ++traj.stats.rejected;
      const double fac = std::isfinite(err) ? std::max(0.2, 0.9 * std::pow(err, -1.0 / order)) : 0.2;
      h *= fac;
      last_rejected = true;
    }
  }
  return traj;
}

inline Trajectory integrate(const ModelSpec& model, const State& z0, double t0, double tf,
                            const IntegratorOptions& opts) {
  eval_field(model, z0);
  OdeSystem sys{[&model](double, const State& z) { return eval_field(model, z); },
                [&model](double, const State& z) { return eval_jacobian(model, z); }};
  return integrate_system(sys, z0, t0, tf, opts, model.name());
}

inline Trajectory integrate(const ModelSpec& model, const State& z0, double t0, double tf, double rtol,
                            double atol) {
  IntegratorOptions opts;
  opts.rtol = rtol;
  opts.atol = atol;
  return integrate(model, z0, t0, tf, opts);
}

}  // namespace simkit
