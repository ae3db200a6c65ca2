#pragma once

#include <cmath>
#include <vector>

#include "asub/asub.hpp"

namespace asub::test {

/// Exponents of the ten-dimensional reference spectrum.
inline const std::vector<double>& reference_exponents() {
  static const std::vector<double> e{4.0, 3.8, 2.0, 1.75, 1.5, 1.25, 1.0, 0.75, 0.5, 0.25};
  return e;
}

/// sum_{i > k} 10^{e_i}, written out independently of the library.
inline double inactive_sum(int k) {
  double s = 0.0;
  const auto& e = reference_exponents();
  for (std::size_t i = static_cast<std::size_t>(k); i < e.size(); ++i) s += std::pow(10.0, e[i]);
  return s;
}

inline Vector reference_lambda() {
  const auto& e = reference_exponents();
  Vector l(static_cast<Eigen::Index>(e.size()));
  for (std::size_t i = 0; i < e.size(); ++i) l[static_cast<Eigen::Index>(i)] = std::pow(10.0, e[i]);
  return l;
}

inline Matrix random_psd(Eigen::Index n, std::uint64_t seed) {
  Rng rng{StreamKey(seed)};
  Matrix g(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) g(i, j) = rng.normal();
  Matrix c = g * g.transpose();
  return 0.5 * (c + c.transpose());
}

inline double sample_variance(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

inline double sample_mean(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  return m / static_cast<double>(v.size());
}

}  // namespace asub::test

namespace asub::test {

/// f(x) = 1/2 x^T W diag(sqrt(lambda)) W^T x under N(0, I), split at k.
struct QuadraticCase {
  GradientFunction f;
  DistributionSpec dist;
  Split basis;
  Vector lambda;
};

inline QuadraticCase quadratic_case(const Vector& lambda, Eigen::Index k, std::uint64_t w_seed,
                                    bool tag_basis = true) {
  const Eigen::Index n = lambda.size();
  const Matrix w = random_orthogonal(n, StreamKey(w_seed));
  QuadraticForm q;
  q.a = w * lambda.cwiseSqrt().asDiagonal() * w.transpose();
  q.a = 0.5 * (q.a + q.a.transpose());
  if (tag_basis) {
    q.basis = w;
    q.sqrt_spectrum = lambda.cwiseSqrt();
  }
  return {GradientFunction::quadratic(q), DistributionSpec::standard_normal(n), Split(w, k), lambda};
}

}  // namespace asub::test
