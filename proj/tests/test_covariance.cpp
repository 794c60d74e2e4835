#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "simkit/asymptotics.hpp"
#include "simkit/covariance.hpp"
#include "simkit/io.hpp"

using namespace simkit;

namespace {

constexpr double kEps = 0.01;

State st(double a, double b) {
  State z(2);
  z << a, b;
  return z;
}

double oracle(double s) { return s / (1.0 + s); }

const std::pair<std::vector<int>, std::vector<int>> kSwapSplit{{0}, {1}};

}  // namespace

TEST(CoordinateChange, Validation) {
  Matrix a(2, 2);
  a << 1.0, 2.0, 2.0, 4.0;
  EXPECT_THROW(CoordinateChange(a, State::Zero(2), false, "singular"), SingularMatrixError);
  a << 1.0, 1.0, 0.0, 1.0;
  EXPECT_THROW(CoordinateChange(a, State::Zero(2), true, "shear"), InvalidInput);
  EXPECT_NO_THROW(CoordinateChange(a, State::Zero(2), false, "shear"));
  EXPECT_THROW(CoordinateChange(a, State::Zero(3), false, "bad"), InvalidInput);
  EXPECT_THROW(CoordinateChange::rotation(std::nan("")), InvalidInput);
}

TEST(CoordinateChange, RoundTripAndLabels) {
  const CoordinateChange r = CoordinateChange::rotation(30.0);
  EXPECT_EQ(r.label(), "rotate:30");
  EXPECT_TRUE(r.orthogonal());
  EXPECT_NEAR(r.condition_number(), 1.0, 1e-12);
  EXPECT_FALSE(r.permutation().has_value());
  const State z = st(0.7, -0.2);
  EXPECT_LE((r.backward(r.forward(z)) - z).norm(), 1e-15);
  EXPECT_LE((r.inverse().forward(r.forward(z)) - z).norm(), 1e-15);
  const auto p = CoordinateChange::swap().permutation();
  ASSERT_TRUE(p.has_value());
  EXPECT_EQ(*p, (std::vector<int>{1, 0}));
}

TEST(TransformModel, IdentityKeepsTheField) {
  const ModelSpec m = davis_skodje(kEps);
  const ModelSpec t = transform_model(m, CoordinateChange::identity(2));
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u1(0.1, 3.0), u2(-1.0, 2.0);
  for (int k = 0; k < 100; ++k) {
    const State z = st(u1(rng), u2(rng));
    EXPECT_EQ(eval_field(t, z), eval_field(m, z));
  }
  EXPECT_TRUE(t.has_fast_split());
  EXPECT_EQ(t.name(), "davis-skodje@identity");
}

TEST(TransformModel, SwapExchangesComponents) {
  const ModelSpec m = davis_skodje(kEps);
  const ModelSpec t = transform_model(m, CoordinateChange::swap());
  const State w = st(0.4, 1.3);
  const State f = eval_field(m, st(1.3, 0.4));
  const State g = eval_field(t, w);
  EXPECT_DOUBLE_EQ(g[0], f[1]);
  EXPECT_DOUBLE_EQ(g[1], f[0]);
  // Labels follow the coordinates: the old slow z1 now sits in slot 1.
  EXPECT_EQ(t.definition().slow_idx, (std::vector<int>{1}));
  EXPECT_EQ(t.definition().fast_idx, (std::vector<int>{0}));
  EXPECT_TRUE(t.has_fast_split());
  // Naming z2 the new rpv leaves no fast split.
  const ModelSpec lit = transform_model(m, CoordinateChange::swap(), kSwapSplit);
  EXPECT_FALSE(lit.has_fast_split());
}

TEST(TransformModel, RotationPushesTheField) {
  const ModelSpec m = davis_skodje(kEps);
  const CoordinateChange r = CoordinateChange::rotation(30.0);
  const ModelSpec t = transform_model(m, r);
  const State w = r.forward(st(1.0, 0.5));
  const State expect = r.A() * st(-1.0, -0.25);
  EXPECT_LE((eval_field(t, w) - expect).lpNorm<Eigen::Infinity>(), 1e-13);
  EXPECT_TRUE(t.definition().mixed_coordinates);
  EXPECT_FALSE(t.has_fast_split());
  EXPECT_TRUE(t.reference_graphs().empty());
  const Matrix ja = eval_jacobian(t, w);
  const Matrix jf = finite_difference_jacobian(t, w);
  EXPECT_LE((ja - jf).cwiseAbs().maxCoeff(), 1e-4 * ja.cwiseAbs().maxCoeff());
  EXPECT_THROW(eval_field(t, r.forward(st(-1.0, 0.0))), SingularityError);
}

TEST(MapManifold, IdentityIsExact) {
  const GraphManifold o = sample_graph(uniform_grid(0.1, 3.0, 128), oracle, kEps, 4, "oracle-sim");
  const GraphManifold m = map_manifold(o, CoordinateChange::identity(2), 0);
  for (std::size_t j = 0; j < o.size(); ++j) {
    EXPECT_NEAR(m.grid[j], o.grid[j], 1e-12);
    EXPECT_NEAR(m.values[j], o.values[j], 1e-12);
  }
  EXPECT_EQ(m.provenance, "oracle-sim@identity");
}

TEST(MapManifold, OracleUnderSwapIsTheInverse) {
  const GraphManifold o = sample_graph(uniform_grid(0.1, 3.0, 256), oracle, kEps, 4, "oracle-sim");
  const GraphManifold m = map_manifold(o, CoordinateChange::swap(), 0);
  EXPECT_NEAR(m.grid.front(), oracle(0.1), 1e-15);
  EXPECT_NEAR(m.grid.back(), oracle(3.0), 1e-15);
  for (std::size_t j = 0; j < m.size(); ++j) {
    const double w1 = m.grid[j];
    EXPECT_NEAR(m.values[j], w1 / (1.0 - w1), 1e-6) << w1;
  }
}

TEST(MapManifold, ConstantUnderSwapIsNotAGraph) {
  const GraphManifold c = sample_graph(uniform_grid(0.1, 3.0, 64), [](double) { return 0.3; }, kEps, 4, "const");
  EXPECT_THROW(map_manifold(c, CoordinateChange::swap(), 0), NonGraphError);
  EXPECT_THROW(map_manifold(c, CoordinateChange::identity(2), 2), InvalidInput);
}

// Invariance is coordinate-free: the pushed-forward oracle is invariant under
// the pushed-forward flow, up to interpolation and stencil error.
TEST(Covariance, MappedOracleStaysInvariant) {
  const ModelSpec m = davis_skodje(kEps);
  for (double deg : {10.0, 30.0, -30.0}) {
    const CoordinateChange r = CoordinateChange::rotation(deg);
    const GraphManifold o = sample_graph(uniform_grid(0.1, 3.0, 512), oracle, kEps, 4, "oracle-sim");
    const double tau = invariance_defect(m, o).max_abs;
    const double d = invariance_defect(transform_model(m, r), map_manifold(o, r, 0)).max_abs;
    EXPECT_LE(d, 1e-6) << deg;
    EXPECT_LE(d, r.condition_number() * tau + 1e-6);
  }
  Matrix a(2, 2);
  a << 1.0, 0.4, 0.0, 1.0;
  const CoordinateChange shear(a, st(0.1, -0.2), false, "shear");
  const GraphManifold o = sample_graph(uniform_grid(0.1, 3.0, 512), oracle, kEps, 4, "oracle-sim");
  EXPECT_LE(invariance_defect(transform_model(m, shear), map_manifold(o, shear, 0)).max_abs, 1e-6);
}

TEST(Covariance, IdentityGapVanishes) {
  const ModelSpec m = davis_skodje(kEps);
  const auto g = uniform_grid(0.1, 3.0, 128);
  for (Method method : {Method::qssa, Method::eps0, Method::eps1, Method::curvature}) {
    const CovarianceReport r = covariance_gap(method, m, CoordinateChange::identity(2), g);
    EXPECT_LE(r.gap, 1e-10) << to_string(method);
    EXPECT_EQ(r.compared_points, g.size());
  }
}

// The transformed side runs its own Brent search in a different bracket, so
// the identity gap is set by the 1e-8 abscissa tolerance.
TEST(Covariance, VariationalIdentityGapAtMinimizerTolerance) {
  const ModelSpec m = davis_skodje(kEps);
  const CovarianceReport r = covariance_gap(Method::variational, m, CoordinateChange::identity(2),
                                            uniform_grid(0.5, 2.5, 6));
  EXPECT_LE(r.gap, 2e-7);
  RecordProperty("gap", format_number(r.gap));
}

TEST(Covariance, QssaIsNotCovariantUnderRotation) {
  const ModelSpec m = davis_skodje(kEps);
  const auto g = uniform_grid(0.1, 3.0, 256);
  const CovarianceReport rot = covariance_gap(Method::qssa, m, CoordinateChange::rotation(30.0), g);
  const CovarianceReport id = covariance_gap(Method::qssa, m, CoordinateChange::identity(2), g);
  EXPECT_GE(rot.gap, 1e-3);
  EXPECT_GE(rot.gap, 1e4 * id.gap);
  EXPECT_EQ(rot.change, "rotate:30");
  EXPECT_LT(rot.span_lo, rot.span_hi);
  EXPECT_GT(rot.compared_points, 100u);
}

TEST(Covariance, CurvatureRootIsCovariantUnderRotation) {
  const ModelSpec m = davis_skodje(kEps);
  const auto g = uniform_grid(0.1, 3.0, 256);
  CovarianceOptions opts;
  opts.curvature_seed = SeedFrame::mapped;
  for (double deg : {10.0, 30.0, -30.0}) {
    const CovarianceReport r = covariance_gap(Method::curvature, m, CoordinateChange::rotation(deg), g, opts);
    EXPECT_LE(r.gap, 5e-4) << deg;
  }
}

TEST(Covariance, LiteralSwapIsReportedNotCrashed) {
  const ModelSpec m = davis_skodje(kEps);
  const auto g = uniform_grid(0.1, 3.0, 64);
  CovarianceOptions opts;
  opts.new_split = kSwapSplit;
  EXPECT_THROW(covariance_gap(Method::qssa, m, CoordinateChange::swap(), g, opts), NonGraphError);
  // Without a fast split the expansion is unavailable in the swapped frame.
  EXPECT_THROW(covariance_gap(Method::eps0, m, CoordinateChange::swap(), g, opts), InvalidInput);
}

TEST(Covariance, ExpansionNeedsAFastSplit) {
  const auto g = uniform_grid(0.1, 3.0, 64);
  EXPECT_THROW(covariance_gap(Method::eps1, davis_skodje(kEps), CoordinateChange::rotation(30.0), g), InvalidInput);
}
