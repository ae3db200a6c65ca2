#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "asub/asub.hpp"
#include "support.hpp"

using namespace asub;

namespace {

BoundInputs reference_inputs(double n, double eps) {
  return BoundInputs{1.0, test::reference_lambda(), 2, n, eps};
}

}  // namespace

TEST(Mse, IdenticalFunctionsGiveZero) {
  Rng rng{StreamKey(1)};
  const PointFn f = [](const Vector& x) { return std::sin(x.sum()); };
  const MseEstimate e = mse(f, f, DistributionSpec::standard_normal(3), 100, rng, 4);
  EXPECT_EQ(e.value, 0.0);
  EXPECT_EQ(e.std_error, 0.0);
  EXPECT_EQ(e.n_x, 100u);
  EXPECT_EQ(e.realization, 4u);
}

TEST(Mse, ConstantOffset) {
  Rng rng{StreamKey(2)};
  const MseEstimate e = mse([](const Vector& x) { return x[0] + 1.5; }, [](const Vector& x) { return x[0]; },
                            DistributionSpec::standard_normal(2), 50, rng);
  EXPECT_DOUBLE_EQ(e.value, 2.25);
  EXPECT_NEAR(e.std_error, 0.0, 1e-15);
}

TEST(Mse, FunctionVersusConditionalExpectation) {
  const auto qc = test::quadratic_case(test::reference_lambda(), 2, 7);
  const RidgeApprox r(qc.f, qc.dist, qc.basis);
  const double oracle = 0.5 * test::inactive_sum(2);
  EXPECT_NEAR(oracle, 113.1, 0.05);
  Rng rng{StreamKey(3)};
  const MseEstimate e = mse([&](const Vector& x) { return qc.f(x); }, [&](const Vector& x) { return r.f_g(x); },
                            qc.dist, 10000, rng);
  EXPECT_NEAR(e.value, oracle, 4.0 * e.std_error);
}

TEST(Mse, Errors) {
  Rng rng{StreamKey(4)};
  const PointFn ok = [](const Vector&) { return 0.0; };
  const PointFn bad = [](const Vector& x) { return x[0] > 0.5 ? std::numeric_limits<double>::quiet_NaN() : 0.0; };
  EXPECT_THROW(mse(ok, ok, DistributionSpec::standard_normal(1), 1, rng), ArgumentError);
  try {
    mse(ok, bad, DistributionSpec::standard_normal(1), 1000, rng);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_GE(e.index(), 0);
    EXPECT_GT(e.point()[0], 0.5);
  }
}

TEST(ExpectedMseStudy, DeterministicFamilyHasZeroSpread) {
  const PointFn fa = [](const Vector& x) { return x[0]; };
  const RealizedFn fb = [](const Vector& x, std::uint64_t) { return x[0] + 2.0; };
  MseStudyOptions o;
  o.n_x = 100;
  o.realizations = 20;
  const MseReport r = expected_mse_study(fa, fb, DistributionSpec::standard_normal(2), o, StreamKey(5));
  EXPECT_DOUBLE_EQ(r.mean, 4.0);
  EXPECT_NEAR(r.std, 0.0, 1e-12);
  EXPECT_NEAR(r.cv, 0.0, 1e-12);
  o.realizations = 1;
  EXPECT_THROW(expected_mse_study(fa, fb, DistributionSpec::standard_normal(2), o, StreamKey(5)), ArgumentError);
}

TEST(ExpectedMseStudy, TenSampleIdentity) {
  const auto qc = test::quadratic_case(test::reference_lambda(), 2, 7);
  const RidgeApprox r = RidgeApprox(qc.f, qc.dist, qc.basis).with_samples(10);
  MseStudyOptions o;
  o.n_x = 1000;
  o.realizations = 200;
  const MseReport rep = expected_mse_study(
      [&](const Vector& x) { return r.f_g(x); },
      [&](const Vector& x, std::uint64_t k) { return r.f_gN(x, Realization{77, k}); }, qc.dist, o, StreamKey(6));
  const double oracle = 0.5 * test::inactive_sum(2) / 10.0;
  EXPECT_NEAR(rep.mean, oracle, 3.0 * rep.std_error);
  EXPECT_GT(rep.cv, 0.0);
}

TEST(ExpectedMseStudy, SharedBatchAndThreadIndependence) {
  const auto qc = test::quadratic_case(test::reference_lambda(), 2, 7);
  const RidgeApprox r = RidgeApprox(qc.f, qc.dist, qc.basis).with_samples(3);
  const PointFn fa = [&](const Vector& x) { return r.f_g(x); };
  const RealizedFn fb = [&](const Vector& x, std::uint64_t k) { return r.f_gN(x, Realization{1, k}); };
  MseStudyOptions o;
  o.n_x = 200;
  o.realizations = 30;
  const MseReport one = expected_mse_study(fa, fb, qc.dist, o, StreamKey(7));
  o.threads = 4;
  const MseReport four = expected_mse_study(fa, fb, qc.dist, o, StreamKey(7));
  EXPECT_EQ(one.mean, four.mean);
  EXPECT_EQ(one.std, four.std);
  o.shared_batch = true;
  const MseReport shared = expected_mse_study(fa, fb, qc.dist, o, StreamKey(7));
  EXPECT_NE(shared.mean, one.mean);
}

TEST(Bounds, ExpectedFgFExamples) {
  const double s = test::inactive_sum(2);
  EXPECT_NEAR(s, 226.2, 0.05);
  EXPECT_NEAR(bound_expct_fg_f(reference_inputs(1, 0)), s, 1e-9);
  BoundInputs b = reference_inputs(1, 0);
  b.poincare = 2.0;
  EXPECT_NEAR(bound_expct_fg_f(b), 2 * s, 1e-9);
  b.eigenvalues.tail(8).setZero();
  EXPECT_EQ(bound_expct_fg_f(b), 0.0);
}

TEST(Bounds, VarMcExamples) {
  EXPECT_NEAR(bound_var_mc(reference_inputs(10, 0)), test::inactive_sum(2) / 10, 1e-9);
  EXPECT_NEAR(bound_var_mc(reference_inputs(10, 0)), 22.62, 0.005);
  EXPECT_EQ(bound_var_mc(reference_inputs(1, 0)), bound_expct_fg_f(reference_inputs(1, 0)));
}

TEST(Bounds, PerturbedExamples) {
  const double active = std::pow(10.0, 4.0) + std::pow(10.0, 3.8);
  EXPECT_NEAR(active, 16309.6, 0.05);
  const double root = 0.01 * std::sqrt(active) + std::sqrt(test::inactive_sum(2));
  EXPECT_NEAR(bound_f_fghat(reference_inputs(1, 0.01)), root * root, 1e-9);
  EXPECT_NEAR(bound_f_fghat(reference_inputs(1, 0.01)), 266.3, 0.1);
  EXPECT_NEAR(bound_var_mc_pert(reference_inputs(100, 0.01)), 2.663, 0.001);
  EXPECT_DOUBLE_EQ(bound_f_fghat(reference_inputs(1, 0)), bound_expct_fg_f(reference_inputs(1, 0)));
  EXPECT_DOUBLE_EQ(bound_var_mc_pert(reference_inputs(1, 0.01)), bound_f_fghat(reference_inputs(1, 0.01)));
  EXPECT_NEAR(bound_var_mc_pert(reference_inputs(7, 0)), bound_var_mc(reference_inputs(7, 0)), 1e-12);
  BoundInputs zero = reference_inputs(1, 0.3);
  zero.eigenvalues.setZero();
  EXPECT_EQ(bound_f_fghat(zero), 0.0);
}

TEST(Bounds, FullMseExamples) {
  const double big = bound_mse_f_fgN(reference_inputs(1e12, 0));
  EXPECT_NEAR(big / bound_f_fghat(reference_inputs(1, 0)), 1.0, 1e-5);
  EXPECT_NEAR(bound_mse_f_fgN(reference_inputs(1, 0.05)) / bound_f_fghat(reference_inputs(1, 0.05)), 4.0, 1e-12);
  const double f = 1.0 + 1.0 / std::sqrt(10.0);
  EXPECT_NEAR(bound_mse_f_fgN(reference_inputs(10, 0)), f * f * test::inactive_sum(2), 1e-9);
  EXPECT_NEAR(bound_mse_f_fgN(reference_inputs(10, 0)), 391.8, 0.1);
  EXPECT_EQ(bound_mse_f_fgN(reference_inputs(std::numeric_limits<double>::infinity(), 0)),
            bound_f_fghat(reference_inputs(1, 0)));
}

TEST(Bounds, InvalidInputs) {
  BoundInputs b = reference_inputs(1, 0);
  b.k = 10;
  EXPECT_THROW(bound_var_mc(b), ArgumentError);
  b = reference_inputs(0.5, 0);
  EXPECT_THROW(bound_var_mc(b), ArgumentError);
  b = reference_inputs(1, -0.1);
  EXPECT_THROW(bound_f_fghat(b), ArgumentError);
  b = reference_inputs(1, 0);
  b.eigenvalues[5] = -1.0;
  EXPECT_THROW(bound_expct_fg_f(b), ArgumentError);
}

TEST(Bounds, MonotoneInEveryInput) {
  Rng rng{StreamKey(8)};
  using Fn = double (*)(const BoundInputs&);
  const Fn fns[] = {bound_expct_fg_f, bound_var_mc, bound_f_fghat, bound_var_mc_pert, bound_mse_f_fgN};
  for (int t = 0; t < 300; ++t) {
    BoundInputs b;
    b.eigenvalues = Vector(5);
    for (Eigen::Index i = 0; i < 5; ++i) b.eigenvalues[i] = std::exp(2.0 * rng.normal());
    b.k = 1 + static_cast<Eigen::Index>(rng.uniform() * 4);
    b.poincare = rng.uniform(0.1, 3.0);
    b.n = rng.uniform(1.0, 200.0);
    b.eps = rng.uniform(0.0, 1.0);
    for (Fn fn : fns) {
      const double base = fn(b);
      BoundInputs up = b;
      up.eigenvalues[static_cast<Eigen::Index>(rng.uniform() * 5)] *= 1.5;
      EXPECT_GE(fn(up), base);
      up = b;
      up.eps += 0.1;
      EXPECT_GE(fn(up), base);
      up = b;
      up.poincare *= 1.3;
      EXPECT_GE(fn(up), base);
      up = b;
      up.n *= 2.0;
      EXPECT_LE(fn(up), base);
    }
  }
}

TEST(CheckBound, Examples) {
  const Verdict a = check_bound(11.31, 0.2, 22.62);
  EXPECT_TRUE(a.satisfied);
  EXPECT_NEAR(a.slack, 11.31, 1e-12);
  EXPECT_TRUE(check_bound(0.0, 0.0, 0.0).satisfied);
  EXPECT_FALSE(check_bound(5.0, 0.01, 1.0).satisfied);
  EXPECT_TRUE(check_bound(1.02, 0.01, 1.0).satisfied);
  MseEstimate e{3.0, 1.0, 10, 0};
  EXPECT_TRUE(check_bound(e, 0.5).satisfied);
}

TEST(FitLogLog, RecoversPowerLaw) {
  const std::vector<double> xs{2, 5, 10, 20, 50, 100};
  std::vector<double> ys;
  for (double x : xs) ys.push_back(113.1 / x);
  const LogLogFit f = fit_loglog(xs, ys);
  EXPECT_NEAR(f.slope, -1.0, 1e-12);
  EXPECT_NEAR(std::exp(f.intercept), 113.1, 1e-9);
  EXPECT_LE(f.max_relative_residual, 1e-12);
  const std::vector<double> neg{1.0, -1.0};
  EXPECT_THROW(fit_loglog(std::vector<double>{1.0, 2.0}, neg), ArgumentError);
  EXPECT_THROW(fit_loglog(std::vector<double>{1.0}, std::vector<double>{1.0}), ArgumentError);
}
