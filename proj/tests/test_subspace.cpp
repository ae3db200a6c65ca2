#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "asub/asub.hpp"
#include "support.hpp"

using namespace asub;

namespace {

GradientFunction linear(const Vector& a) {
  return GradientFunction(
      a.size(), [a](const Vector& x) { return a.dot(x); }, [a](const Vector&) { return a; });
}

GradientFunction quadratic(const Matrix& a) {
  QuadraticForm q;
  q.a = a;
  return GradientFunction::quadratic(q);
}

Matrix diag(std::initializer_list<double> v) {
  Vector d(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) d[i++] = x;
  return d.asDiagonal();
}

}  // namespace

TEST(GradientCheck, AnalyticGradientPasses) {
  const Matrix a = test::random_psd(4, 1);
  EXPECT_TRUE(validate_gradient(quadratic(a), DistributionSpec::standard_normal(4), StreamKey(1)).passed);
}

TEST(GradientCheck, WrongGradientFails) {
  const GradientFunction bad(
      2, [](const Vector& x) { return x.squaredNorm(); }, [](const Vector& x) -> Vector { return x; });
  const auto r = validate_gradient(bad, DistributionSpec::standard_normal(2), StreamKey(2));
  EXPECT_FALSE(r.passed);
  EXPECT_EQ(r.worst_point.size(), 2);
}

TEST(EstimateC, LinearFunctionIsExactOuterProduct) {
  Vector a(3);
  a << 1.0, -2.0, 0.5;
  for (const auto& d : {DistributionSpec::standard_normal(3),
                        DistributionSpec::uniform_box(Vector::Zero(3), Vector::Ones(3))}) {
    const Matrix c = estimate_C(linear(a), d, 37, StreamKey(3));
    EXPECT_LE(max_abs(c - a * a.transpose()), 1e-13);
  }
}

TEST(EstimateC, ConstantFunctionIsZero) {
  const GradientFunction f(
      2, [](const Vector&) { return 3.0; }, [](const Vector&) -> Vector { return Vector::Zero(2); });
  EXPECT_EQ(max_abs(estimate_C(f, DistributionSpec::standard_normal(2), 10, StreamKey(4))), 0.0);
}

TEST(EstimateC, QuadraticConvergesToASquared) {
  const Matrix c = estimate_C(quadratic(diag({2, 1})), DistributionSpec::standard_normal(2), 100000, StreamKey(5));
  EXPECT_LE(max_abs(c - diag({4, 1})), 0.15);
  EXPECT_EQ(c, c.transpose());
}

TEST(EstimateC, NonFiniteGradientCarriesPoint) {
  const GradientFunction f(
      2, [](const Vector&) { return 0.0; },
      [](const Vector& x) -> Vector {
        Vector g = x;
        if (x[0] > 1.0) g[0] = std::numeric_limits<double>::quiet_NaN();
        return g;
      });
  try {
    estimate_C(f, DistributionSpec::standard_normal(2), 1000, StreamKey(6));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_GT(e.point()[0], 1.0);
    EXPECT_GE(e.index(), 0);
  }
}

TEST(EstimateC, InvalidArguments) {
  EXPECT_THROW(estimate_C(quadratic(diag({1, 1})), DistributionSpec::standard_normal(2), 0, StreamKey(7)),
               ArgumentError);
  EXPECT_THROW(estimate_C(quadratic(diag({1, 1})), DistributionSpec::standard_normal(3), 5, StreamKey(7)),
               ArgumentError);
}

TEST(EstimateC, IndependentOfThreadCount) {
  const auto f = quadratic(test::random_psd(5, 8));
  const auto d = DistributionSpec::standard_normal(5);
  const Matrix one = estimate_C(f, d, 5000, StreamKey(9), 1);
  for (unsigned t : {2u, 3u, 8u}) EXPECT_EQ(one, estimate_C(f, d, 5000, StreamKey(9), t));
}

TEST(ExactC, DiagonalZeroAndAsymmetric) {
  EXPECT_EQ(exact_C_quadratic(diag({2, 1})), diag({4, 1}));
  EXPECT_EQ(max_abs(exact_C_quadratic(Matrix::Zero(3, 3))), 0.0);
  Matrix a(2, 2);
  a << 1, 2, 3, 1;
  EXPECT_THROW(exact_C_quadratic(a), ArgumentError);
}

TEST(ExactC, RotatedSquareRootSpectrum) {
  const Vector lambda = test::reference_lambda();
  const Matrix w = random_orthogonal(10, StreamKey(10));
  Matrix a = w * lambda.cwiseSqrt().asDiagonal() * w.transpose();
  a = 0.5 * (a + a.transpose());
  const Eigenpairs e = eigendecompose(exact_C_quadratic(a));
  for (Eigen::Index i = 0; i < 10; ++i) EXPECT_NEAR(e.values[i] / lambda[i], 1.0, 1e-10);
}

TEST(Eigendecompose, DiagonalIsIdentityBasis) {
  const Eigenpairs e = eigendecompose(diag({4, 1}));
  EXPECT_NEAR(e.values[0], 4.0, 1e-14);
  EXPECT_NEAR(e.values[1], 1.0, 1e-14);
  EXPECT_LE(max_abs(e.vectors - Matrix::Identity(2, 2)), 1e-14);
}

TEST(Eigendecompose, RankOneFollowsSignConvention) {
  Vector a(3);
  a << 0.2, -0.9, 0.3;
  a.normalize();
  const Eigenpairs e = eigendecompose(a * a.transpose());
  EXPECT_NEAR(e.values[0], 1.0, 1e-14);
  EXPECT_NEAR(e.values[1], 0.0, 1e-14);
  EXPECT_NEAR(e.values[2], 0.0, 1e-14);
  // Largest-magnitude entry of a is negative, so the column is -a.
  EXPECT_LE((e.vectors.col(0) + a).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Eigendecompose, RandomReconstruction) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Matrix c = test::random_psd(5, 100 + s);
    const Eigenpairs e = eigendecompose(c);
    EXPECT_LE(max_abs(e.vectors * e.values.asDiagonal() * e.vectors.transpose() - c), 1e-8);
    EXPECT_LE(orthogonality_defect(e.vectors), 1e-10);
    for (Eigen::Index i = 1; i < 5; ++i) EXPECT_GE(e.values[i - 1], e.values[i]);
    for (Eigen::Index j = 0; j < 5; ++j) {
      Eigen::Index best;
      e.vectors.col(j).cwiseAbs().maxCoeff(&best);
      EXPECT_GT(e.vectors(best, j), 0.0);
    }
  }
}

TEST(Eigendecompose, Errors) {
  Matrix c = Matrix::Identity(2, 2);
  c(0, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(eigendecompose(c), NumericError);
  EXPECT_THROW(eigendecompose(diag({1, -1})), ArgumentError);
}

TEST(ChooseK, ReferenceSpectrumSplitsAtTwo) {
  const Vector l = test::reference_lambda();
  EXPECT_NEAR(l[1] / l[2], std::pow(10.0, 1.8), 1e-9);
  EXPECT_NEAR(l[1] / l[2], 63.1, 0.05);
  EXPECT_EQ(choose_k(l, LargestGap{}), 2);
}

TEST(ChooseK, SmallCases) {
  Vector two(2), geo(4);
  two << 4, 1;
  geo << 8, 4, 2, 1;
  EXPECT_EQ(choose_k(two, LargestGap{}), 1);
  EXPECT_EQ(choose_k(geo, LargestGap{}), 1);
  EXPECT_EQ(choose_k(geo, ManualK{3}), 3);
  EXPECT_EQ(choose_k(geo, ThresholdRatio{2.0}), 1);
  EXPECT_THROW(choose_k(geo, ManualK{0}), ArgumentError);
  EXPECT_THROW(choose_k(geo, ManualK{4}), ArgumentError);
  EXPECT_THROW(choose_k(geo, ThresholdRatio{2.5}), DomainError);
  EXPECT_THROW(choose_k(Vector::Ones(1), LargestGap{}), ArgumentError);
}

TEST(ChooseK, ZeroTailUsesFloor) {
  Vector l(3);
  l << 5, 1e-3, 0;
  EXPECT_EQ(choose_k(l, LargestGap{}), 2);
}

TEST(ChooseK, ScaleInvariant) {
  Rng rng{StreamKey(11)};
  for (int t = 0; t < 200; ++t) {
    Vector l(6);
    for (Eigen::Index i = 0; i < 6; ++i) l[i] = std::exp(4.0 * rng.normal());
    std::sort(l.data(), l.data() + 6, std::greater<>());
    const double c = std::exp(3.0 * rng.normal());
    EXPECT_EQ(choose_k(l, LargestGap{}), choose_k(Vector(c * l), LargestGap{}));
  }
}

TEST(Split, IdentityBlocks) {
  const auto [w1, w2] = split(Matrix::Identity(3, 3), 1);
  EXPECT_EQ(w1, Matrix::Identity(3, 3).leftCols(1));
  EXPECT_EQ(w2, Matrix::Identity(3, 3).rightCols(2));
  EXPECT_THROW(split(Matrix::Identity(3, 3), 3), ArgumentError);
  EXPECT_THROW(split(Matrix::Identity(3, 3), 0), ArgumentError);
}

TEST(Split, OrthogonalBlocksAndProjection) {
  const Split s(random_orthogonal(7, StreamKey(12)), 3);
  EXPECT_LE(max_abs(s.w1().transpose() * s.w2()), 1e-10);
  EXPECT_LE(max_abs(s.w1().transpose() * s.w1() - Matrix::Identity(3, 3)), 1e-10);
  Rng rng{StreamKey(13)};
  for (int i = 0; i < 100; ++i) {
    const Vector x = rng.normal_vector(7);
    const Vector back = s.w1() * (s.w1().transpose() * x) + s.w2() * (s.w2().transpose() * x);
    EXPECT_LE((back - x).cwiseAbs().maxCoeff(), 1e-10);
  }
  EXPECT_THROW(Split(2.0 * Matrix::Identity(3, 3), 1), ArgumentError);
}

TEST(Coords, IdentityExampleAndRoundTrip) {
  const Split id(Matrix::Identity(4, 4), 2);
  Vector x(4);
  x << 1, 2, 3, 4;
  const auto [y, z] = coords(id, x);
  EXPECT_EQ(y, x.head(2));
  EXPECT_EQ(z, x.tail(2));
  const Split s(random_orthogonal(6, StreamKey(14)), 2);
  Rng rng{StreamKey(15)};
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    const Vector v = rng.normal_vector(6);
    const auto [a, b] = coords(s, v);
    worst = std::max(worst, (reconstruct(s, a, b) - v).cwiseAbs().maxCoeff());
    EXPECT_NEAR(v.squaredNorm(), a.squaredNorm() + b.squaredNorm(), 1e-10 * v.squaredNorm());
  }
  EXPECT_LE(worst, 1e-10);
  EXPECT_THROW(coords(s, Vector::Zero(5)), ArgumentError);
  EXPECT_THROW(reconstruct(s, Vector::Zero(3), Vector::Zero(4)), ArgumentError);
}

TEST(ActiveSubspace, SensitivityIdentityOnExactC) {
  const Vector lambda = test::reference_lambda();
  const Matrix w = random_orthogonal(10, StreamKey(16));
  const Matrix c = w * lambda.asDiagonal() * w.transpose();
  const auto s = ActiveSubspace::from_matrix(0.5 * (c + c.transpose()));
  EXPECT_EQ(s.k(), 2);
  for (Eigen::Index i = 0; i < 10; ++i) {
    EXPECT_NEAR(s.w().col(i).dot(c * s.w().col(i)) / s.eigenvalues()[i], 1.0, 1e-8);
  }
  EXPECT_LE(s.reconstruction_error(), 1e-8 * (1 + max_abs(c)));
}

TEST(ActiveSubspace, MonteCarloLeadingEigenvalue) {
  const Vector lambda = test::reference_lambda();
  const Matrix w = random_orthogonal(10, StreamKey(17));
  Matrix a = w * lambda.cwiseSqrt().asDiagonal() * w.transpose();
  const Matrix c = estimate_C(quadratic(0.5 * (a + a.transpose())), DistributionSpec::standard_normal(10),
                              100000, StreamKey(18));
  const auto s = ActiveSubspace::from_matrix(c);
  EXPECT_LE(std::abs(s.eigenvalues()[0] / lambda[0] - 1.0), 0.05);
  EXPECT_EQ(s.k(), 2);
}

TEST(Perturb, TinyEpsilon) {
  const auto s = ActiveSubspace::from_matrix(test::random_psd(5, 19));
  const auto p = perturb(s, 1e-8, StreamKey(20));
  EXPECT_LE(spectral_norm(s.w() - p.w_hat()), 1e-8);
  EXPECT_LE(orthogonality_defect(p.w_hat()), 1e-10);
}

TEST(Perturb, HundredDrawsAtOneTenth) {
  const auto s = ActiveSubspace::from_matrix(test::random_psd(6, 21), ManualK{2});
  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto p = perturb(s, 0.1, StreamKey(22).with(i));
    const double d = spectral_norm(s.w() - p.w_hat());
    EXPECT_GE(d, 0.09);
    EXPECT_LE(d, 0.1);
    EXPECT_LE(orthogonality_defect(p.w_hat()), 1e-10);
    const auto lem = p.lemma();
    EXPECT_LE(lem.w1t_what2, 0.1);
    EXPECT_LE(lem.what2t_w1, 0.1);
    EXPECT_LE(lem.w2t_what2, 1.0 + 1e-12);
    EXPECT_EQ(p.basis().k(), 2);
  }
}

TEST(Perturb, LemmaHoldsAcrossScales) {
  const auto s = ActiveSubspace::from_matrix(test::random_psd(8, 23), ManualK{3});
  for (double eps : {1e-6, 1e-3, 0.05, 0.5, 1.5}) {
    const auto p = perturb(s, eps, StreamKey(24));
    EXPECT_TRUE(p.lemma().holds(eps)) << eps;
    EXPECT_LE(p.achieved(), eps);
  }
}

TEST(Perturb, Errors) {
  const auto s = ActiveSubspace::from_matrix(test::random_psd(3, 25));
  EXPECT_THROW(perturb(s, 2.0, StreamKey(1)), ArgumentError);
  EXPECT_THROW(perturb(s, 0.0, StreamKey(1)), ArgumentError);
  EXPECT_THROW(perturb(s, -1.0, StreamKey(1)), ArgumentError);
}
