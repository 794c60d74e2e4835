// Walk through the toolkit on the Davis-Skodje model: candidate graphs,
// their invariance defects, the curvature root, one variational extremal
// and a rotated frame.
#include <cstdio>

#include "simkit/asymptotics.hpp"
#include "simkit/covariance.hpp"
#include "simkit/geometry.hpp"
#include "simkit/methods.hpp"
#include "simkit/variational.hpp"

using namespace simkit;

int main() {
  const double eps = 1e-2;
  const ModelSpec m = davis_skodje(eps);
  const auto grid = uniform_grid(0.1, 3.0, 256);

  std::printf("model %s, eps = %g, %zu grid points on [%g, %g]\n\n", m.name().c_str(), eps, grid.size(),
              grid.front(), grid.back());

  std::printf("%-12s %14s %14s\n", "graph", "max defect", "max |K|");
  for (const ReferenceGraph& ref : m.reference_graphs()) {
    const GraphManifold g = sample_graph(grid, ref.h, eps, 4, ref.name);
    std::printf("%-12s %14.3e %14.3e\n", ref.name.c_str(), invariance_defect(m, g).max_abs,
                curvature_field(time_derivatives(m, g)).max_abs_K);
  }
  for (Method method : {Method::qssa, Method::eps0, Method::eps1, Method::curvature}) {
    const GraphManifold g = compute_manifold(method, m, grid);
    std::printf("%-12s %14.3e %14.3e\n", to_string(method).c_str(), invariance_defect(m, g).max_abs,
                curvature_field(time_derivatives(m, g)).max_abs_K);
  }

  const VariationalResult v = minimize_fast_ic(m, davis_skodje_variational(eps, 1.0));
  std::printf("\nvariational argmin at z1(0) = %.6f: z2(0) = %.9f (Phi = %.6f, %ld evaluations)\n", v.z1_t0,
              v.z2_0, v.phi, v.evaluations);
  const HamiltonianTrace h = hamiltonian_trace(m, davis_skodje_variational(eps, 1.0), v.extremal);
  std::printf("Hamiltonian drift along the extremal: %.2e\n", h.drift);

  const VariationalResult w = minimize_fast_ic(m, davis_skodje_variational(eps, 2.0));
  std::printf("at z1(0) = 2 the argmin is %.6f, nearest candidate: %s\n", w.z2_0, w.nearest_candidate.c_str());

  const CoordinateChange rot = CoordinateChange::rotation(30.0);
  const CovarianceReport q = covariance_gap(Method::qssa, m, rot, grid);
  std::printf("\nqssa covariance gap under %s: %.3e on [%.3f, %.3f]\n", rot.label().c_str(), q.gap, q.span_lo,
              q.span_hi);
  const ModelSpec moved = transform_model(m, rot);
  const GraphManifold mapped = map_manifold(sample_graph(grid, find_reference_graph(m, "oracle-sim")->h, eps, 4,
                                                         "oracle-sim"),
                                            rot, 0);
  std::printf("mapped oracle defect in the rotated frame: %.3e\n", invariance_defect(moved, mapped).max_abs);
  return 0;
}
