#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "simkit/integrate.hpp"

using namespace simkit;

namespace {

State st(double a, double b) {
  State z(2);
  z << a, b;
  return z;
}

double deviation(const State& z) { return z[1] - z[0] / (1.0 + z[0]); }

}  // namespace

TEST(Integrate, SlowVariableClosedForm) {
  const Trajectory tr = integrate(davis_skodje(0.01), st(1.0, 0.5), 0.0, 1.0, 1e-10, 1e-12);
  EXPECT_NEAR(tr.final_state()[0], std::exp(-1.0), 1e-7);
  EXPECT_EQ(tr.tf(), 1.0);
  EXPECT_EQ(tr.t0(), 0.0);
}

TEST(Integrate, StaysOnTheSlowGraph) {
  const Trajectory tr = integrate(davis_skodje(0.01), st(1.0, 0.5), 0.0, 1.0, 1e-10, 1e-12);
  const double z1 = std::exp(-1.0);
  EXPECT_NEAR(tr.final_state()[1], z1 / (1.0 + z1), 1e-6);
  EXPECT_NEAR(tr.final_state()[1], 0.268941, 1e-6);
}

TEST(Integrate, EquilibriumIsConstant) {
  for (const ModelSpec& m : {davis_skodje(0.01), linear_two_scale(0.01)}) {
    const Trajectory tr = integrate(m, st(0.0, 0.0), 0.0, 7.5, 1e-10, 1e-12);
    ASSERT_GE(tr.size(), 2u);
    for (const State& z : tr.states) {
      EXPECT_EQ(z[0], 0.0);
      EXPECT_EQ(z[1], 0.0);
    }
  }
}

TEST(Integrate, TrajectoryInvariants) {
  const Trajectory tr = integrate(davis_skodje(0.05), st(2.0, 0.0), 0.0, 2.0, 1e-9, 1e-11);
  ASSERT_EQ(tr.times.size(), tr.states.size());
  ASSERT_EQ(tr.times.size(), tr.derivs.size());
  for (std::size_t i = 1; i < tr.size(); ++i) EXPECT_GT(tr.times[i], tr.times[i - 1]);
  for (const State& z : tr.states) EXPECT_TRUE(z.allFinite());
  EXPECT_EQ(tr.model_name, "davis-skodje");
  EXPECT_EQ(tr.rtol, 1e-9);
}

// w = z2 - z1/(1+z1) obeys w' = -w/eps exactly.
TEST(Integrate, OffManifoldDeviationDecaysAtOneOverEps) {
  for (double eps : {1e-1, 1e-2, 1e-3}) {
    const Trajectory tr = integrate(davis_skodje(eps), st(1.0, 0.0), 0.0, 6.0 * eps, 1e-11, 1e-14);
    const double w0 = deviation(tr.states.front());
    double st_ = 0, sl = 0, stt = 0, stl = 0;
    const int samples = 31;
    for (int k = 0; k < samples; ++k) {
      const double t = 6.0 * eps * k / (samples - 1);
      const double l = std::log(std::abs(deviation(tr.at(t)) / w0));
      st_ += t;
      sl += l;
      stt += t * t;
      stl += t * l;
    }
    const double rate = -(samples * stl - st_ * sl) / (samples * stt - st_ * st_);
    EXPECT_NEAR(rate * eps, 1.0, 1e-2) << "eps " << eps;
  }
}

TEST(Integrate, HalvingRtolReducesEndpointError) {
  const ModelSpec m = davis_skodje(0.01);
  const State z0 = st(1.0, 0.5);
  const State ref = integrate(m, z0, 0.0, 1.0, 1e-12, 1e-14).final_state();
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 8; ++k) {
    const double rtol = 1e-5 / std::pow(2.0, k);
    const State y = integrate(m, z0, 0.0, 1.0, rtol, 1e-2 * rtol).final_state();
    const double err = (y - ref).lpNorm<Eigen::Infinity>();
    EXPECT_LT(err, prev) << "rtol " << rtol;
    prev = err;
  }
}

TEST(Integrate, StiffProblemSwitchesToImplicit) {
  IntegratorOptions opts;
  opts.rtol = 1e-6;
  opts.atol = 1e-8;
  const Trajectory tr = integrate(davis_skodje(1e-4), st(1.0, 0.0), 0.0, 2.0, opts);
  EXPECT_TRUE(tr.stats.switched_to_implicit);
  EXPECT_GT(tr.stats.newton_iterations, 0);
  EXPECT_NEAR(tr.final_state()[0], std::exp(-2.0), 1e-5);
  const double z1 = tr.final_state()[0];
  EXPECT_NEAR(tr.final_state()[1], z1 / (1.0 + z1), 1e-5);
  // Accurate steps are far fewer than the explicit stability limit allows.
  EXPECT_LT(tr.stats.accepted, 2000);
}

TEST(Integrate, ForcedImplicitMatchesExplicit) {
  IntegratorOptions opts;
  opts.rtol = 1e-9;
  opts.atol = 1e-12;
  opts.force_implicit = true;
  const Trajectory imp = integrate(davis_skodje(0.01), st(1.0, 0.3), 0.0, 1.0, opts);
  const Trajectory exp_ = integrate(davis_skodje(0.01), st(1.0, 0.3), 0.0, 1.0, 1e-11, 1e-13);
  EXPECT_TRUE(imp.stats.switched_to_implicit);
  EXPECT_LE((imp.final_state() - exp_.final_state()).lpNorm<Eigen::Infinity>(), 1e-6);
}

TEST(Integrate, NonStiffProblemStaysExplicit) {
  const Trajectory tr = integrate(davis_skodje(0.5), st(1.0, 0.3), 0.0, 1.0, 1e-9, 1e-12);
  EXPECT_FALSE(tr.stats.switched_to_implicit);
}

TEST(Integrate, StopTimesAreHitExactly) {
  IntegratorOptions opts;
  opts.rtol = 1e-8;
  opts.atol = 1e-10;
  opts.stop_times = {0.25, 0.5, 0.1234};
  const Trajectory tr = integrate(davis_skodje(0.01), st(1.0, 0.5), 0.0, 1.0, opts);
  for (double s : opts.stop_times) EXPECT_NE(std::find(tr.times.begin(), tr.times.end(), s), tr.times.end()) << s;
}

TEST(Integrate, DenseOutputIsAccurate) {
  const Trajectory tr = integrate(davis_skodje(0.01), st(1.5, 0.6), 0.0, 1.0, 1e-11, 1e-13);
  for (int k = 0; k <= 40; ++k) {
    const double t = k / 40.0;
    EXPECT_NEAR(tr.at(t)[0], 1.5 * std::exp(-t), 1e-8) << t;
  }
  EXPECT_THROW(tr.at(1.01), InvalidInput);
  EXPECT_THROW(tr.at(-0.01), InvalidInput);
}

TEST(Integrate, InputErrors) {
  const ModelSpec m = davis_skodje(0.01);
  EXPECT_THROW(integrate(m, st(1.0, 0.5), 1.0, 1.0, 1e-8, 1e-10), InvalidInput);
  EXPECT_THROW(integrate(m, st(1.0, 0.5), 0.0, 1.0, 0.0, 1e-10), InvalidInput);
  EXPECT_THROW(integrate(m, st(std::nan(""), 0.5), 0.0, 1.0, 1e-8, 1e-10), DomainError);
  EXPECT_THROW(integrate(m, st(-1.0, 0.5), 0.0, 1.0, 1e-8, 1e-10), SingularityError);
}

TEST(Integrate, FiniteTimeBlowupIsStiffnessFailure) {
  OdeSystem sys;
  sys.rhs = [](double, const State& y) { return State(y.array().square().matrix()); };
  sys.jac = [](double, const State& y) {
    Matrix j(1, 1);
    j(0, 0) = 2.0 * y[0];
    return j;
  };
  State y0(1);
  y0 << 1.0;
  EXPECT_THROW(integrate_system(sys, y0, 0.0, 2.0, {}, "blowup"), StiffnessFailure);
}

TEST(Integrate, StepBudget) {
  IntegratorOptions opts;
  opts.max_steps = 5;
  EXPECT_THROW(integrate(davis_skodje(1e-3), st(1.0, 0.0), 0.0, 1.0, opts), StiffnessFailure);
}
