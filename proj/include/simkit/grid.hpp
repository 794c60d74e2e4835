#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "simkit/errors.hpp"

namespace simkit {

inline std::vector<double> uniform_grid(double lo, double hi, int count) {
  if (count < 2) throw InvalidInput("grid needs at least two points");
  if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi))
    throw InvalidInput("grid bounds must satisfy lo < hi");
  std::vector<double> g(static_cast<std::size_t>(count));
  const double step = (hi - lo) / (count - 1);
  for (int i = 0; i < count; ++i) g[static_cast<std::size_t>(i)] = lo + step * i;
  g.back() = hi;
  return g;
}

/// Throws unless the grid is strictly increasing with uniform spacing
/// (1e-12 relative). Returns the spacing.
inline double check_uniform(std::span<const double> grid) {
  if (grid.size() < 2) throw InvalidInput("grid needs at least two points");
  const double step = (grid.back() - grid.front()) / static_cast<double>(grid.size() - 1);
  if (!(step > 0.0)) throw InvalidInput("grid must be strictly increasing");
  const double scale = std::max({std::abs(grid.front()), std::abs(grid.back()), step});
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double d = grid[i] - grid[i - 1];
    if (!(d > 0.0)) throw InvalidInput("grid must be strictly increasing");
    if (std::abs(d - step) > 1e-12 * step + 4.0 * 2.220446049250313e-16 * scale)
      throw InvalidInput("grid spacing is not uniform");
  }
  return step;
}

/// Number of points at each end of the grid that use one-sided stencils.
inline int boundary_width(int order) { return order / 2; }

inline void check_stencil_order(int order) {
  if (order != 2 && order != 4) throw InvalidInput("stencil order must be 2 or 4");
}

/// First derivative on a uniform grid, central in the interior and one-sided
/// (same formal order) at the ends.
inline std::vector<double> first_derivative(std::span<const double> f, double step, int order) {
  check_stencil_order(order);
  const std::size_t n = f.size();
  if (n < static_cast<std::size_t>(order + 1))
    throw InvalidInput("grid too coarse for order-" + std::to_string(order) + " stencil: " +
                       std::to_string(n) + " points");
  std::vector<double> d(n);
  if (order == 2) {
    const double c = 1.0 / (2.0 * step);
    d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) * c;
    for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (f[i + 1] - f[i - 1]) * c;
    d[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) * c;
    return d;
  }
  const double c = 1.0 / (12.0 * step);
  d[0] = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) * c;
  d[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) * c;
  for (std::size_t i = 2; i + 2 < n; ++i)
    d[i] = (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) * c;
  d[n - 2] = (3.0 * f[n - 1] + 10.0 * f[n - 2] - 18.0 * f[n - 3] + 6.0 * f[n - 4] - f[n - 5]) * c;
  d[n - 1] =
      (25.0 * f[n - 1] - 48.0 * f[n - 2] + 36.0 * f[n - 3] - 16.0 * f[n - 4] + 3.0 * f[n - 5]) * c;
  return d;
}

inline std::vector<double> second_derivative(std::span<const double> f, double step, int order) {
  check_stencil_order(order);
  const std::size_t n = f.size();
  if (n < static_cast<std::size_t>(order + 2))
    throw InvalidInput("grid too coarse for order-" + std::to_string(order) +
                       " second-derivative stencil: " + std::to_string(n) + " points");
  std::vector<double> d(n);
  if (order == 2) {
    const double c = 1.0 / (step * step);
    d[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) * c;
    for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (f[i - 1] - 2.0 * f[i] + f[i + 1]) * c;
    d[n - 1] = (2.0 * f[n - 1] - 5.0 * f[n - 2] + 4.0 * f[n - 3] - f[n - 4]) * c;
    return d;
  }
  const double c = 1.0 / (12.0 * step * step);
  auto left0 = [&](auto at) {
    return 45.0 * at(0) - 154.0 * at(1) + 214.0 * at(2) - 156.0 * at(3) + 61.0 * at(4) - 10.0 * at(5);
  };
  auto left1 = [&](auto at) {
    return 10.0 * at(0) - 15.0 * at(1) - 4.0 * at(2) + 14.0 * at(3) - 6.0 * at(4) + at(5);
  };
  auto fwd = [&](std::size_t k) { return f[k]; };
  auto bwd = [&](std::size_t k) { return f[n - 1 - k]; };
  d[0] = left0(fwd) * c;
  d[1] = left1(fwd) * c;
  for (std::size_t i = 2; i + 2 < n; ++i)
    d[i] = (-f[i - 2] + 16.0 * f[i - 1] - 30.0 * f[i] + 16.0 * f[i + 1] - f[i + 2]) * c;
  d[n - 2] = left1(bwd) * c;
  d[n - 1] = left0(bwd) * c;
  return d;
}

/// Monotonicity-preserving piecewise cubic Hermite interpolant.
///
/// Node slopes come from the derivative of the local Lagrange polynomial
/// (five points where available, fourth-order accurate), then pass through
/// Hyman's filter: wherever the data are locally monotone the slope is held
/// to the data's sign and to 3x the smaller adjacent secant. Queries outside
/// the node span are refused.
class MonotoneCubic {
 public:
  MonotoneCubic(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
    if (x_.size() != y_.size()) throw InvalidInput("interpolation: x and y lengths differ");
    if (x_.size() < 2) throw InvalidInput("interpolation needs at least two nodes");
    for (std::size_t i = 1; i < x_.size(); ++i)
      if (!(x_[i] > x_[i - 1])) throw InvalidInput("interpolation nodes must be strictly increasing");
    build_slopes();
  }

  double lo() const noexcept { return x_.front(); }
  double hi() const noexcept { return x_.back(); }

  bool covers(double q) const noexcept {
    const double slack = 1e-12 * std::max(1.0, std::abs(hi() - lo()));
    return q >= lo() - slack && q <= hi() + slack;
  }

  double operator()(double q) const {
    if (!covers(q)) throw InvalidInput("interpolation: extrapolation refused at " + std::to_string(q));
    q = std::clamp(q, lo(), hi());
    auto it = std::upper_bound(x_.begin(), x_.end(), q);
    std::size_t i = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, (it - x_.begin()) - 1));
    if (i + 1 >= x_.size()) i = x_.size() - 2;
    const double h = x_[i + 1] - x_[i];
    const double t = (q - x_[i]) / h;
    const double t2 = t * t;
    const double t3 = t2 * t;
    const double h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    const double h10 = t3 - 2.0 * t2 + t;
    const double h01 = -2.0 * t3 + 3.0 * t2;
    const double h11 = t3 - t2;
    return h00 * y_[i] + h10 * h * slope_[i] + h01 * y_[i + 1] + h11 * h * slope_[i + 1];
  }

 private:
  double lagrange_slope(std::size_t i, std::size_t first, std::size_t last) const {
    double d = 0.0;
    for (std::size_t j = first; j <= last; ++j) {
      if (j == i) {
        double s = 0.0;
        for (std::size_t k = first; k <= last; ++k)
          if (k != i) s += 1.0 / (x_[i] - x_[k]);
        d += y_[i] * s;
      } else {
        double w = 1.0 / (x_[j] - x_[i]);
        for (std::size_t k = first; k <= last; ++k)
          if (k != i && k != j) w *= (x_[i] - x_[k]) / (x_[j] - x_[k]);
        d += y_[j] * w;
      }
    }
    return d;
  }

  void build_slopes() {
    const std::size_t n = x_.size();
    slope_.assign(n, 0.0);
    std::vector<double> secant(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) secant[i] = (y_[i + 1] - y_[i]) / (x_[i + 1] - x_[i]);
    if (n == 2) {
      slope_[0] = slope_[1] = secant[0];
      return;
    }
    const std::size_t width = std::min<std::size_t>(5, n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t first = i >= width / 2 ? i - width / 2 : 0;
      if (first + width > n) first = n - width;
      slope_[i] = lagrange_slope(i, first, first + width - 1);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const bool has_left = i > 0;
      const bool has_right = i + 1 < n;
      const double sl = has_left ? secant[i - 1] : secant[i];
      const double sr = has_right ? secant[i] : secant[i - 1];
      if (sl * sr > 0.0) {
        const double bound = 3.0 * std::min(std::abs(sl), std::abs(sr));
        const double sign = sl > 0.0 ? 1.0 : -1.0;
        slope_[i] = sign * std::clamp(sign * slope_[i], 0.0, bound);
      } else if (sl == 0.0 || sr == 0.0) {
        slope_[i] = 0.0;
      }
    }
  }

  std::vector<double> x_;
  std::vector<double> y_;
  std::vector<double> slope_;
};

}  // namespace simkit
