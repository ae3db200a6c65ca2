// Builds the ten-dimensional quadratic, recovers its active subspace from
// sampled gradients, and compares f, f_g and f_gN at a few points.

#include <cstdio>

#include "asub/asub.hpp"

using namespace asub;

int main() {
  const Eigen::Index n = 10;
  Vector lambda(n);
  const double exps[] = {4.0, 3.8, 2.0, 1.75, 1.5, 1.25, 1.0, 0.75, 0.5, 0.25};
  for (Eigen::Index i = 0; i < n; ++i) lambda[i] = std::pow(10.0, exps[i]);
  const Matrix w = random_orthogonal(n, StreamKey(7));
  QuadraticForm q;
  q.a = w * lambda.cwiseSqrt().asDiagonal() * w.transpose();
  q.a = 0.5 * (q.a + q.a.transpose());
  q.b = Vector::Zero(n);
  const GradientFunction f = GradientFunction::quadratic(q);
  const DistributionSpec rho = DistributionSpec::standard_normal(n);

  const Matrix c_hat = estimate_C(f, rho, 5000, StreamKey(1), default_threads());
  const ActiveSubspace sub = ActiveSubspace::from_matrix(c_hat, LargestGap{});
  std::printf("k = %ld\neigenvalues:", static_cast<long>(sub.k()));
  for (Eigen::Index i = 0; i < n; ++i) std::printf(" %.4g", sub.eigenvalues()[i]);
  std::printf("\n");

  const RidgeApprox ridge = RidgeApprox(f, rho, sub.basis()).with_samples(10);
  Rng rng{StreamKey(2)};
  std::printf("%12s %12s %12s\n", "f", "f_g", "f_gN");
  for (int i = 0; i < 5; ++i) {
    const Vector x = sample_one(rho, rng);
    std::printf("%12.4f %12.4f %12.4f\n", f(x), ridge.f_g(x), ridge.f_gN(x, Realization{3, 0}));
  }
  return 0;
}
