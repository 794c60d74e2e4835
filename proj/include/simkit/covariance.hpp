#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "simkit/asymptotics.hpp"
#include "simkit/errors.hpp"
#include "simkit/grid.hpp"
#include "simkit/manifold.hpp"
#include "simkit/methods.hpp"
#include "simkit/model.hpp"
#include "simkit/variational.hpp"

namespace simkit {

/// Affine change w = A z + b.
class CoordinateChange {
 public:
  CoordinateChange(Matrix a, State b, bool orthogonal, std::string label)
      : a_(std::move(a)), b_(std::move(b)), orthogonal_(orthogonal), label_(std::move(label)) {
    if (a_.rows() != a_.cols() || a_.rows() == 0) throw InvalidInput("coordinate change needs a square matrix");
    if (b_.size() != a_.rows()) throw InvalidInput("coordinate change offset has the wrong length");
    if (!a_.allFinite() || !b_.allFinite()) throw InvalidInput("coordinate change must be finite");
    lu_ = a_.fullPivLu();
    if (!(std::abs(lu_.determinant()) > 1e-12)) throw SingularMatrixError("coordinate change matrix is singular");
    if (orthogonal_) {
      const double dev = (a_.transpose() * a_ - Matrix::Identity(a_.rows(), a_.cols())).norm();
      if (dev > 1e-12) throw InvalidInput("coordinate change flagged orthogonal but |A^T A - I| > 1e-12");
    }
    inverse_ = lu_.inverse();
  }

  static CoordinateChange identity(int n) {
    return {Matrix::Identity(n, n), State::Zero(n), true, "identity"};
  }

  /// Rotation of the (z1, z2) plane by deg degrees: A = [[c, -s], [s, c]].
  static CoordinateChange rotation(double deg) {
    if (!std::isfinite(deg)) throw InvalidInput("rotation angle must be finite");
    const double r = deg * std::numbers::pi / 180.0;
    Matrix a(2, 2);
    a << std::cos(r), -std::sin(r), std::sin(r), std::cos(r);
    return {a, State::Zero(2), true, "rotate:" + trim_number(deg)};
  }

  static CoordinateChange swap() {
    Matrix a(2, 2);
    a << 0.0, 1.0, 1.0, 0.0;
    return {a, State::Zero(2), true, "swap"};
  }

  const Matrix& A() const noexcept { return a_; }
  const Matrix& A_inverse() const noexcept { return inverse_; }
  const State& b() const noexcept { return b_; }
  bool orthogonal() const noexcept { return orthogonal_; }
  const std::string& label() const noexcept { return label_; }
  int dim() const noexcept { return static_cast<int>(a_.rows()); }

  State forward(const State& z) const { return a_ * z + b_; }
  State backward(const State& w) const { return inverse_ * (w - b_); }

  double condition_number() const {
    Eigen::JacobiSVD<Matrix> svd(a_);
    const auto& s = svd.singularValues();
    return s(0) / s(s.size() - 1);
  }

  /// Column index mapped to row k when A is a 0/1 permutation, else nullopt.
  std::optional<std::vector<int>> permutation() const {
    std::vector<int> rows_of(static_cast<std::size_t>(dim()), -1);
    for (int r = 0; r < dim(); ++r) {
      int hit = -1;
      for (int c = 0; c < dim(); ++c) {
        if (a_(r, c) == 1.0 && hit < 0) hit = c;
        else if (a_(r, c) != 0.0) return std::nullopt;
      }
      if (hit < 0) return std::nullopt;
      rows_of[static_cast<std::size_t>(r)] = hit;
    }
    return rows_of;
  }

  CoordinateChange inverse() const {
    return {inverse_, State(-(inverse_ * b_)), orthogonal_, label_ + "^-1"};
  }

 private:
  static std::string trim_number(double v) {
    std::string s = std::to_string(v);
    s.erase(s.find_last_not_of('0') + 1);
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
  }

  Matrix a_;
  State b_;
  bool orthogonal_ = false;
  std::string label_;
  Eigen::FullPivLU<Matrix> lu_;
  Matrix inverse_;
};

/// Model with field A F(A^-1 (w - b)) and Jacobian A J A^-1. For a
/// permutation the slow/fast labels follow the permuted coordinates unless
/// new indices are given; otherwise the labels stay in place and the model is
/// marked mixed. The fast split survives only when it still describes the
/// new fast components; reference graphs are dropped.
inline ModelSpec transform_model(const ModelSpec& model, const CoordinateChange& c,
                                 std::optional<std::pair<std::vector<int>, std::vector<int>>> new_split = {}) {
  if (c.dim() != model.dim()) throw InvalidInput("coordinate change dimension does not match the model");
  const ModelDefinition& src = model.definition();
  ModelDefinition def;
  def.name = src.name + "@" + c.label();
  def.description = src.description + " in coordinates " + c.label();
  def.dim = src.dim;
  def.eps = src.eps;

  const auto perm = c.permutation();
  if (new_split) {
    def.slow_idx = new_split->first;
    def.fast_idx = new_split->second;
  } else if (perm) {
    auto image = [&](const std::vector<int>& old) {
      std::vector<int> out;
      for (int r = 0; r < c.dim(); ++r)
        if (std::find(old.begin(), old.end(), (*perm)[static_cast<std::size_t>(r)]) != old.end()) out.push_back(r);
      return out;
    };
    def.slow_idx = image(src.slow_idx);
    def.fast_idx = image(src.fast_idx);
  } else {
    def.slow_idx = src.slow_idx;
    def.fast_idx = src.fast_idx;
  }
  def.mixed_coordinates = src.mixed_coordinates || !perm;

  const VectorField field = src.field;
  def.field = [field, c](const State& w) { return State(c.A() * field(c.backward(w))); };
  if (src.jac) {
    const JacobianField jac = *src.jac;
    def.jac = [jac, c](const State& w) { return Matrix(c.A() * jac(c.backward(w)) * c.A_inverse()); };
  }
  if (src.domain_check) {
    const auto check = src.domain_check;
    def.domain_check = [check, c](const State& w) { check(c.backward(w)); };
  }

  if (perm && src.fast_split) {
    // Position of each new fast coordinate within the old fast list.
    std::vector<Eigen::Index> pick;
    for (int r : def.fast_idx) {
      const int old = (*perm)[static_cast<std::size_t>(r)];
      const auto it = std::find(src.fast_idx.begin(), src.fast_idx.end(), old);
      if (it == src.fast_idx.end()) {
        pick.clear();
        break;
      }
      pick.push_back(it - src.fast_idx.begin());
    }
    if (pick.size() == def.fast_idx.size() && !pick.empty()) {
      auto wrap = [pick, c](VectorField g) {
        return VectorField([pick, c, g](const State& w) {
          const State full = g(c.backward(w));
          State out(static_cast<Eigen::Index>(pick.size()));
          for (std::size_t k = 0; k < pick.size(); ++k) out[static_cast<Eigen::Index>(k)] = full[pick[k]];
          return out;
        });
      };
      def.fast_split = FastSplit{wrap(src.fast_split->leading), wrap(src.fast_split->correction)};
    }
  }
  return ModelSpec(std::move(def));
}

/// Variational constants expressed in the new coordinates: k2(A^-1(w-b)),
/// gradient A^-T grad k2. The anchored values keep their meaning as slow
/// coordinates of the new model.
inline VariationalSpec transform_variational_spec(const VariationalSpec& spec, const CoordinateChange& c) {
  VariationalSpec out = spec;
  const ScalarField k2 = spec.k2;
  out.k2 = [k2, c](const State& w) { return k2(c.backward(w)); };
  if (spec.k2_grad) {
    const GradientField g = spec.k2_grad;
    out.k2_grad = [g, c](const State& w) { return State(c.A_inverse().transpose() * g(c.backward(w))); };
  }
  return out;
}

/// Pushes the graph points (z_slow = grid, z_fast = values; old_slow names
/// the slow slot) through the change and refits a graph over new_rpv on a
/// uniform grid with the same point count, by monotone cubic interpolation.
inline GraphManifold map_manifold(const GraphManifold& m, const CoordinateChange& c, int new_rpv,
                                  int old_slow = 0) {
  validate(m);
  if (c.dim() != 2) throw InvalidInput("map_manifold supports two-dimensional changes only");
  if ((new_rpv != 0 && new_rpv != 1) || (old_slow != 0 && old_slow != 1))
    throw InvalidInput("coordinate index must be 0 or 1");
  const std::size_t n = m.size();
  std::vector<double> x(n), y(n);
  for (std::size_t j = 0; j < n; ++j) {
    State z(2);
    z[old_slow] = m.grid[j];
    z[1 - old_slow] = m.values[j];
    const State w = c.forward(z);
    x[j] = w[new_rpv];
    y[j] = w[1 - new_rpv];
  }
  bool increasing = true, decreasing = true;
  for (std::size_t j = 1; j < n; ++j) {
    increasing = increasing && x[j] > x[j - 1];
    decreasing = decreasing && x[j] < x[j - 1];
  }
  if (!increasing && !decreasing)
    throw NonGraphError("mapped manifold is not a graph over coordinate " + std::to_string(new_rpv) + " under " +
                        c.label() + ": mapped abscissae are not strictly monotone");
  if (decreasing) {
    std::reverse(x.begin(), x.end());
    std::reverse(y.begin(), y.end());
  }
  const MonotoneCubic fit(x, y);
  std::vector<double> grid = uniform_grid(x.front(), x.back(), static_cast<int>(n));
  std::vector<double> values(n);
  for (std::size_t j = 0; j < n; ++j) values[j] = fit(grid[j]);
  return make_graph(std::move(grid), std::move(values), m.eps, m.deriv_order, m.provenance + "@" + c.label());
}

/// Where the transformed curvature solve starts.
enum class SeedFrame {
  /// QSSA of the transformed model (the method as-is in the new frame).
  native,
  /// The original-frame QSSA pushed through the change.
  mapped,
};

struct CovarianceOptions {
  MethodOptions method;
  SeedFrame curvature_seed = SeedFrame::native;
  /// New (slow, fast) indices for the transformed model; see transform_model.
  std::optional<std::pair<std::vector<int>, std::vector<int>>> new_split;
};

struct CovarianceReport {
  std::string method;
  std::string change;
  double gap = 0.0;
  /// Intersection of the two spans in the new rpv coordinate.
  double span_lo = 0.0;
  double span_hi = 0.0;
  std::size_t compared_points = 0;
  double condition_number = 1.0;
  GraphManifold mapped;
  GraphManifold transformed;
};

/// sup |map(method(model)) - method(transform(model))| in the new fast
/// coordinate, over the transformed grid points inside the mapped span. The
/// transformed result is also mapped back, so a degenerate transformed
/// solution surfaces as NonGraphError.
inline CovarianceReport covariance_gap(Method method, const ModelSpec& model, const CoordinateChange& c,
                                       const std::vector<double>& grid, const CovarianceOptions& opts = {}) {
  const int old_slow = single_slow_index(model);
  const ModelSpec moved = transform_model(model, c, opts.new_split);
  const int new_rpv = single_slow_index(moved);
  single_fast_index(moved);

  MethodOptions side_a = opts.method;
  MethodOptions side_b = opts.method;
  side_a.curvature_seed.reset();
  side_b.curvature_seed.reset();
  if (method == Method::variational) {
    const VariationalSpec base = opts.method.variational ? *opts.method.variational : default_variational_spec(model);
    side_a.variational = base;
    side_b.variational = transform_variational_spec(base, c);
  }

  CovarianceReport rep;
  rep.method = to_string(method);
  rep.change = c.label();
  rep.condition_number = c.condition_number();
  const GraphManifold original = compute_manifold(method, model, grid, side_a);
  rep.mapped = map_manifold(original, c, new_rpv, old_slow);

  std::vector<double> target = rep.mapped.grid;
  if (method == Method::curvature && opts.curvature_seed == SeedFrame::mapped) {
    side_b.curvature_seed = map_manifold(qssa(model, grid, opts.method.deriv_order), c, new_rpv, old_slow);
    target = side_b.curvature_seed->grid;
  }
  if (method == Method::variational) {
    // Bracket the transformed fast values around the mapped graph.
    const auto [lo, hi] = std::minmax_element(rep.mapped.values.begin(), rep.mapped.values.end());
    const double pad = std::max(1.0, *hi - *lo);
    side_b.variational->bracket_lo = *lo - pad;
    side_b.variational->bracket_hi = *hi + pad;
  }
  rep.transformed = compute_manifold(method, moved, target, side_b);
  map_manifold(rep.transformed, c.inverse(), old_slow, new_rpv);

  const MonotoneCubic fit(rep.mapped.grid, rep.mapped.values);
  rep.span_lo = std::max(rep.mapped.grid.front(), target.front());
  rep.span_hi = std::min(rep.mapped.grid.back(), target.back());
  for (std::size_t j = 0; j < target.size(); ++j) {
    if (target[j] < rep.span_lo || target[j] > rep.span_hi) continue;
    rep.gap = std::max(rep.gap, std::abs(fit(target[j]) - rep.transformed.values[j]));
    ++rep.compared_points;
  }
  if (rep.compared_points == 0) throw InvalidInput("covariance: mapped and transformed spans do not overlap");
  return rep;
}

}  // namespace simkit
