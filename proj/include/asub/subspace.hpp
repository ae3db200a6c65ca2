#pragma once

// Gradient covariance C = E[grad f grad f^T], its eigendecomposition, the
// active/inactive split W = [W1 W2], and controlled orthogonal perturbations.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "asub/errors.hpp"
#include "asub/linalg.hpp"
#include "asub/parallel.hpp"
#include "asub/prob_model.hpp"
#include "asub/rng.hpp"

namespace asub {

/// f(x) = 1/2 x^T A x + b^T x + c. When `basis`/`sqrt_spectrum` are set, A is
/// exactly basis * diag(sqrt_spectrum) * basis^T, which lets ridge evaluation
/// use the diagonal form whenever the split basis is that same matrix.
struct QuadraticForm {
  Matrix a;
  Vector b;
  double c = 0.0;
  std::optional<Matrix> basis;
  std::optional<Vector> sqrt_spectrum;

  double value(const Vector& x) const { return 0.5 * x.dot(a * x) + b.dot(x) + c; }
  Vector gradient(const Vector& x) const { return a * x + b; }
};

/// A scalar function on R^n together with its gradient.
class GradientFunction {
 public:
  using ValueFn = std::function<double(const Vector&)>;
  using GradFn = std::function<Vector(const Vector&)>;

  GradientFunction(Eigen::Index n, ValueFn f, GradFn grad)
      : n_(n), f_(std::move(f)), grad_(std::move(grad)) {
    if (n_ < 1) throw ArgumentError("GradientFunction: dimension must be positive");
  }

  static GradientFunction quadratic(QuadraticForm q) {
    require_symmetric(q.a, 1e-12, "GradientFunction::quadratic");
    const Eigen::Index n = q.a.rows();
    if (q.b.size() == 0) q.b = Vector::Zero(n);
    require_dim(q.b.size(), n, "GradientFunction::quadratic linear term");
    auto shared = std::make_shared<const QuadraticForm>(std::move(q));
    GradientFunction gf(
        n, [shared](const Vector& x) { return shared->value(x); },
        [shared](const Vector& x) { return shared->gradient(x); });
    gf.quadratic_ = shared;
    return gf;
  }

  Eigen::Index dim() const noexcept { return n_; }
  double value(const Vector& x) const { return f_(x); }
  Vector gradient(const Vector& x) const { return grad_(x); }
  double operator()(const Vector& x) const { return f_(x); }
  /// Non-null when the function carries an analytic quadratic tag.
  const QuadraticForm* quadratic_form() const noexcept { return quadratic_.get(); }

 private:
  Eigen::Index n_;
  ValueFn f_;
  GradFn grad_;
  std::shared_ptr<const QuadraticForm> quadratic_;
};

struct GradientCheck {
  bool passed = true;
  double worst_error = 0.0;
  Vector worst_point;
};

/// Compares the gradient against central differences at `probes` random points.
/// Tolerance per point is max(1e-5, 1e-4 * |grad f|).
inline GradientCheck validate_gradient(const GradientFunction& gf, const DistributionSpec& dist,
                                       StreamKey key, int probes = 20) {
  require_dim(dist.dim(), gf.dim(), "validate_gradient");
  Rng rng(key.with("gradient-check"));
  GradientCheck out;
  for (int p = 0; p < probes; ++p) {
    const Vector x = sample_one(dist, rng);
    const Vector g = gf.gradient(x);
    Vector fd(gf.dim());
    for (Eigen::Index i = 0; i < gf.dim(); ++i) {
      const double h = 1e-6 * std::max(1.0, std::abs(x[i]));
      Vector xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      fd[i] = (gf.value(xp) - gf.value(xm)) / (2.0 * h);
    }
    const double err = (fd - g).cwiseAbs().maxCoeff();
    const double tol = std::max(1e-5, 1e-4 * g.norm());
    if (err > tol) out.passed = false;
    if (err > out.worst_error) {
      out.worst_error = err;
      out.worst_point = x;
    }
  }
  return out;
}

/// Monte Carlo estimate (1/M) sum grad f(x_i) grad f(x_i)^T, x_i ~ rho_X.
/// Samples are drawn in fixed batches with per-batch substreams and reduced in
/// batch order, so the result is independent of `threads`.
inline Matrix estimate_C(const GradientFunction& gf, const DistributionSpec& dist, std::size_t m,
                         StreamKey key, unsigned threads = 1) {
  if (m < 1) throw ArgumentError("estimate_C: M must be at least 1");
  require_dim(dist.dim(), gf.dim(), "estimate_C");
  constexpr std::size_t kBatch = 256;
  const Eigen::Index n = gf.dim();
  const std::size_t batches = (m + kBatch - 1) / kBatch;
  std::vector<Matrix> partial(batches);
  parallel_for(batches, threads, [&](std::size_t b) {
    Rng rng(key.with("estimate_C").with(b));
    Matrix acc = Matrix::Zero(n, n);
    const std::size_t end = std::min(m, (b + 1) * kBatch);
    for (std::size_t i = b * kBatch; i < end; ++i) {
      const Vector x = sample_one(dist, rng);
      const Vector g = gf.gradient(x);
      if (g.size() != n || !g.allFinite()) {
        throw NumericError("estimate_C: non-finite gradient", x, static_cast<long>(i));
      }
      acc.selfadjointView<Eigen::Lower>().rankUpdate(g);
    }
    partial[b] = acc.selfadjointView<Eigen::Lower>();
  });
  Matrix c = Matrix::Zero(n, n);
  for (const auto& p : partial) c += p;
  c /= static_cast<double>(m);
  return 0.5 * (c + c.transpose());
}

/// C = A^2 for f = 1/2 x^T A x under the standard normal.
inline Matrix exact_C_quadratic(const Matrix& a) {
  require_symmetric(a, 1e-12, "exact_C_quadratic");
  Matrix c = a * a;
  return 0.5 * (c + c.transpose());
}

struct Eigenpairs {
  Vector values;   // descending, clamped at zero
  Matrix vectors;  // orthogonal, columns matching `values`
};

/// Flips column signs so that each column's largest-magnitude entry is positive
/// (first such entry on ties).
inline void fix_signs(Matrix& w) {
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < w.rows(); ++i) {
      if (std::abs(w(i, j)) > std::abs(w(best, j))) best = i;
    }
    if (w(best, j) < 0.0) w.col(j) *= -1.0;
  }
}

inline Eigenpairs eigendecompose(const Matrix& c) {
  if (!c.allFinite()) throw NumericError("eigendecompose: non-finite entries");
  require_symmetric(c, 1e-10, "eigendecompose");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(0.5 * (c + c.transpose()));
  if (solver.info() != Eigen::Success) throw NumericError("eigendecompose: solver failed");
  const Eigen::Index n = c.rows();
  Eigenpairs out{Vector(n), Matrix(n, n)};
  const double floor = -1e-10 * (1.0 + max_abs(c));
  for (Eigen::Index j = 0; j < n; ++j) {
    // Eigen returns ascending order.
    const double v = solver.eigenvalues()[n - 1 - j];
    if (v < floor) throw ArgumentError("eigendecompose: matrix is not positive semi-definite");
    out.values[j] = std::max(v, 0.0);
    out.vectors.col(j) = solver.eigenvectors().col(n - 1 - j);
  }
  fix_signs(out.vectors);
  return out;
}

struct LargestGap {};
struct ManualK {
  Eigen::Index k;
};
struct ThresholdRatio {
  double ratio;
};
using KStrategy = std::variant<LargestGap, ManualK, ThresholdRatio>;

/// Split index k (1-based count of active directions).
inline Eigen::Index choose_k(const Vector& eigenvalues, const KStrategy& strategy) {
  const Eigen::Index n = eigenvalues.size();
  if (n < 2) throw ArgumentError("choose_k: need at least two eigenvalues");
  auto ratio = [&](Eigen::Index i) {  // lambda_i / lambda_{i+1}, 1-based i
    return eigenvalues[i - 1] / std::max(eigenvalues[i], 1e-30);
  };
  if (const auto* manual = std::get_if<ManualK>(&strategy)) {
    if (manual->k < 1 || manual->k > n - 1) throw ArgumentError("choose_k: manual k out of range");
    return manual->k;
  }
  if (const auto* thr = std::get_if<ThresholdRatio>(&strategy)) {
    for (Eigen::Index i = 1; i <= n - 1; ++i) {
      if (ratio(i) >= thr->ratio) return i;
    }
    throw DomainError("choose_k: no spectral gap reaches the threshold ratio");
  }
  Eigen::Index best = 1;
  double best_ratio = ratio(1);
  for (Eigen::Index i = 2; i <= n - 1; ++i) {
    if (ratio(i) > best_ratio) {
      best_ratio = ratio(i);
      best = i;
    }
  }
  return best;
}

/// Column-block partition of W at k.
inline std::pair<Matrix, Matrix> split(const Matrix& w, Eigen::Index k) {
  if (k < 1 || k > w.cols() - 1) throw ArgumentError("split: k out of range");
  return {w.leftCols(k), w.rightCols(w.cols() - k)};
}

/// An orthogonal basis W with a split index k, viewed as W1 | W2.
class Split {
 public:
  Split(Matrix w, Eigen::Index k) : w_(std::move(w)), k_(k) {
    if (w_.rows() != w_.cols()) throw ArgumentError("Split: W must be square");
    if (k_ < 1 || k_ > w_.cols() - 1) throw ArgumentError("Split: k out of range");
    if (orthogonality_defect(w_) > 1e-10) throw ArgumentError("Split: W is not orthogonal");
    std::tie(w1_, w2_) = split(w_, k_);
  }

  Eigen::Index n() const noexcept { return w_.rows(); }
  Eigen::Index k() const noexcept { return k_; }
  const Matrix& w() const noexcept { return w_; }
  const Matrix& w1() const noexcept { return w1_; }
  const Matrix& w2() const noexcept { return w2_; }

  Vector active(const Vector& x) const {
    require_dim(x.size(), n(), "coords");
    return w1_.transpose() * x;
  }

 private:
  Matrix w_;
  Eigen::Index k_;
  Matrix w1_;
  Matrix w2_;
};

/// y = W1^T x, z = W2^T x.
inline std::pair<Vector, Vector> coords(const Split& s, const Vector& x) {
  require_dim(x.size(), s.n(), "coords");
  return {s.w1().transpose() * x, s.w2().transpose() * x};
}

inline Vector reconstruct(const Split& s, const Vector& y, const Vector& z) {
  require_dim(y.size(), s.k(), "reconstruct active");
  require_dim(z.size(), s.n() - s.k(), "reconstruct inactive");
  return s.w1() * y + s.w2() * z;
}

/// Eigenpairs of an estimated (or exact) C together with the chosen split.
class ActiveSubspace {
 public:
  ActiveSubspace(Matrix c_hat, Eigenpairs pairs, Eigen::Index k)
      : c_hat_(std::move(c_hat)), eigenvalues_(std::move(pairs.values)),
        split_(std::move(pairs.vectors), k) {
    if (eigenvalues_.size() != split_.n()) throw ArgumentError("ActiveSubspace: size mismatch");
    for (Eigen::Index i = 1; i < eigenvalues_.size(); ++i) {
      if (eigenvalues_[i] > eigenvalues_[i - 1]) {
        throw ArgumentError("ActiveSubspace: eigenvalues must be descending");
      }
    }
    if ((eigenvalues_.array() < 0.0).any()) throw ArgumentError("ActiveSubspace: negative eigenvalue");
  }

  static ActiveSubspace from_matrix(const Matrix& c, const KStrategy& strategy = LargestGap{}) {
    Eigenpairs pairs = eigendecompose(c);
    const Eigen::Index k = choose_k(pairs.values, strategy);
    return ActiveSubspace(c, std::move(pairs), k);
  }

  Eigen::Index n() const noexcept { return split_.n(); }
  Eigen::Index k() const noexcept { return split_.k(); }
  const Vector& eigenvalues() const noexcept { return eigenvalues_; }
  const Matrix& w() const noexcept { return split_.w(); }
  const Matrix& w1() const noexcept { return split_.w1(); }
  const Matrix& w2() const noexcept { return split_.w2(); }
  const Matrix& c_hat() const noexcept { return c_hat_; }
  const Split& basis() const noexcept { return split_; }

  double active_sum() const { return eigenvalues_.head(k()).sum(); }
  double inactive_sum() const { return eigenvalues_.tail(n() - k()).sum(); }

  double reconstruction_error() const {
    return max_abs(w() * eigenvalues_.asDiagonal() * w().transpose() - c_hat_);
  }

 private:
  Matrix c_hat_;
  Vector eigenvalues_;
  Split split_;
};

/// The three norm inequalities relating W and a perturbed W-hat.
struct PerturbationLemma {
  double w1t_what2 = 0.0;  // |W1^T What2|
  double what2t_w1 = 0.0;  // |What2^T W1|
  double w2t_what2 = 0.0;  // |W2^T What2|, at most 1
  bool holds(double eps, double slack = 1e-12) const {
    return w1t_what2 <= eps + slack && what2t_w1 <= eps + slack && w2t_what2 <= 1.0 + slack;
  }
};

inline PerturbationLemma check_perturbation_lemma(const Split& base, const Split& hat) {
  return {spectral_norm(base.w1().transpose() * hat.w2()),
          spectral_norm(hat.w2().transpose() * base.w1()),
          spectral_norm(base.w2().transpose() * hat.w2())};
}

/// W-hat = W exp(tS) at spectral distance in [0.9 eps, eps] from W, same k.
class PerturbedSubspace {
 public:
  PerturbedSubspace(ActiveSubspace base, Split hat, double eps, double achieved)
      : base_(std::move(base)), hat_(std::move(hat)), eps_(eps), achieved_(achieved) {}

  const ActiveSubspace& base() const noexcept { return base_; }
  const Split& basis() const noexcept { return hat_; }
  const Matrix& w_hat() const noexcept { return hat_.w(); }
  double eps() const noexcept { return eps_; }
  /// |W - W-hat|_2 actually realized.
  double achieved() const noexcept { return achieved_; }
  PerturbationLemma lemma() const { return check_perturbation_lemma(base_.basis(), hat_); }

 private:
  ActiveSubspace base_;
  Split hat_;
  double eps_;
  double achieved_;
};

inline PerturbedSubspace perturb(const ActiveSubspace& subspace, double eps, StreamKey key) {
  if (!(eps > 0.0)) throw ArgumentError("perturb: eps must be positive");
  if (eps >= 2.0) throw ArgumentError("perturb: eps must be below 2");
  const Eigen::Index n = subspace.n();
  Rng rng(key.with("perturb"));
  Matrix s = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      s(i, j) = rng.normal();
      s(j, i) = -s(i, j);
    }
  }
  s /= spectral_norm(s);
  const Matrix& w = subspace.w();
  auto distance = [&](double t, Matrix& w_hat) {
    w_hat = w * Matrix(t * s).exp();
    return spectral_norm(w - w_hat);
  };
  // |I - exp(tS)|_2 = 2 sin(t/2) is increasing on [0, pi].
  double lo = 0.0, hi = std::numbers::pi;
  Matrix w_hat;
  double d = 0.0;
  for (int it = 0; it < 200; ++it) {
    const double t = 0.5 * (lo + hi);
    d = distance(t, w_hat);
    if (d > eps) hi = t;
    else if (d < 0.9 * eps) lo = t;
    else break;
  }
  if (d > eps || d < 0.9 * eps) throw NumericError("perturb: bisection did not reach the target");
  Split hat(std::move(w_hat), subspace.k());
  PerturbedSubspace out(subspace, std::move(hat), eps, d);
  if (!out.lemma().holds(eps)) throw NumericError("perturb: perturbation lemma violated");
  return out;
}

/// Orthogonal factor of a seeded n x n Gaussian matrix (R with positive diagonal).
inline Matrix random_orthogonal(Eigen::Index n, StreamKey key) {
  Rng rng(key.with("random_orthogonal"));
  Matrix g(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) g(i, j) = rng.normal();
  }
  return orthonormalize(g);
}

}  // namespace asub
