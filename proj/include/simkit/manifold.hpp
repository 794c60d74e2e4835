#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "simkit/errors.hpp"
#include "simkit/grid.hpp"
#include "simkit/model.hpp"

namespace simkit {

/// Candidate slow manifold as a graph z_fast = h(z_slow) sampled on a
/// uniform grid over the slow coordinate. Derivatives come from stencils of
/// order deriv_order.
struct GraphManifold {
  std::vector<double> grid;
  std::vector<double> values;
  double eps = 0.0;
  int deriv_order = 4;
  std::string provenance;

  std::size_t size() const noexcept { return grid.size(); }
  double spacing() const { return check_uniform(grid); }
};

inline void validate(const GraphManifold& m) {
  check_stencil_order(m.deriv_order);
  if (m.grid.size() < 5) throw InvalidInput("manifold needs at least 5 grid points");
  if (m.values.size() != m.grid.size()) throw InvalidInput("manifold grid and values differ in length");
  check_uniform(m.grid);
  for (double v : m.values)
    if (!std::isfinite(v)) throw DomainError("manifold values must be finite");
}

inline GraphManifold make_graph(std::vector<double> grid, std::vector<double> values, double eps,
                                int deriv_order, std::string provenance) {
  GraphManifold m{std::move(grid), std::move(values), eps, deriv_order, std::move(provenance)};
  validate(m);
  return m;
}

inline GraphManifold sample_graph(const std::vector<double>& grid, const ScalarProfile& h, double eps,
                                  int deriv_order, std::string provenance) {
  std::vector<double> values(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) values[i] = h(grid[i]);
  return make_graph(grid, std::move(values), eps, deriv_order, std::move(provenance));
}

/// Largest |f| over points not touched by one-sided stencils.
inline double interior_max_abs(const std::vector<double>& f, int deriv_order, int extra_width = 0) {
  const std::size_t w = static_cast<std::size_t>(boundary_width(deriv_order) + extra_width);
  double worst = 0.0;
  for (std::size_t i = w; i + w < f.size(); ++i) worst = std::max(worst, std::abs(f[i]));
  return worst;
}

inline double sup_distance(const GraphManifold& m, const ScalarProfile& h) {
  double worst = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) worst = std::max(worst, std::abs(m.values[i] - h(m.grid[i])));
  return worst;
}

}  // namespace simkit
