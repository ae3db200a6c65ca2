#pragma once

// Conditional-expectation ridge approximation
//   g(y)   = E[f(W1 y + W2 Z) | Y = y]
//   g_N(y) = (1/N) sum_j f(W1 y + W2 Z_j),  Z_j ~ rho_{Z|Y}(. | y) i.i.d.
// and the lifted functions f_g(x) = g(W1^T x), f_{g_N}(x) = g_N(W1^T x).

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>

#include "asub/errors.hpp"
#include "asub/linalg.hpp"
#include "asub/prob_model.hpp"
#include "asub/rng.hpp"
#include "asub/subspace.hpp"

namespace asub {

/// One draw of all the conditional samples inside g_N. The stream of every
/// evaluation is a pure function of (seed, index, N, y).
struct Realization {
  std::uint64_t seed = 0;
  std::uint64_t index = 0;

  StreamKey key() const { return StreamKey(seed).with("realization").with(index); }
};

enum class ReferenceMode { ClosedForm, HighAccuracyMC };

/// Value with its Monte Carlo standard error (zero for closed forms).
struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

struct RidgeOptions {
  std::size_t n_samples = 10;                      // N in g_N
  std::optional<ReferenceMode> reference;          // default: ClosedForm when available
  std::size_t n_reference = 1'000'000;             // samples for HighAccuracyMC g
  std::uint64_t reference_seed = 0x5eed0f97efULL;  // dedicated stream for reference g
};

class RidgeApprox {
 public:
  RidgeApprox(GradientFunction gf, const DistributionSpec& dist, Split basis,
              RidgeOptions options = {})
      : gf_(std::move(gf)), basis_(std::move(basis)),
        sampler_(dist, basis_.w1(), basis_.w2()), options_(options) {
    require_dim(dist.dim(), gf_.dim(), "RidgeApprox distribution");
    require_dim(basis_.n(), gf_.dim(), "RidgeApprox basis");
    if (options_.n_samples < 1) throw ArgumentError("RidgeApprox: N must be at least 1");
    const bool closed_available = gf_.quadratic_form() != nullptr && dist.is_gaussian();
    mode_ = options_.reference.value_or(closed_available ? ReferenceMode::ClosedForm
                                                         : ReferenceMode::HighAccuracyMC);
    if (mode_ == ReferenceMode::ClosedForm && !closed_available) {
      throw ArgumentError("RidgeApprox: closed-form g needs a quadratic f and a Gaussian density");
    }
    if (gf_.quadratic_form()) prepare_quadratic(*gf_.quadratic_form());
  }

  /// Same function, density and basis with a different N.
  RidgeApprox with_samples(std::size_t n) const {
    RidgeApprox copy = *this;
    if (n < 1) throw ArgumentError("RidgeApprox: N must be at least 1");
    copy.options_.n_samples = n;
    return copy;
  }

  std::size_t n_samples() const noexcept { return options_.n_samples; }
  ReferenceMode reference_mode() const noexcept { return mode_; }
  const Split& basis() const noexcept { return basis_; }
  const GradientFunction& function() const noexcept { return gf_; }
  const ConditionalSampler& sampler() const noexcept { return sampler_; }

  /// f evaluated at W1 y + W2 z.
  double f_lifted(const Vector& y, const Vector& z) const {
    if (quad_) return quad_->value(y, z);
    return gf_.value(basis_.w1() * y + basis_.w2() * z);
  }

  Estimate g_estimate(const Vector& y) const {
    require_dim(y.size(), basis_.k(), "g");
    if (mode_ == ReferenceMode::ClosedForm) return {quad_->conditional_mean(y), 0.0};
    Rng rng(StreamKey(options_.reference_seed).with("g-reference").with_bits(y));
    double mean = 0.0, m2 = 0.0;
    std::size_t count = 0;
    const double base = accumulate(y, options_.n_reference, rng, [&](double v) {
      ++count;
      const double delta = v - mean;
      mean += delta / static_cast<double>(count);
      m2 += delta * (v - mean);
    });
    const double var = count > 1 ? m2 / static_cast<double>(count - 1) : 0.0;
    return {base + mean, std::sqrt(var / static_cast<double>(count))};
  }

  double g(const Vector& y) const { return g_estimate(y).value; }

  double g_N(const Vector& y, const Realization& r) const {
    require_dim(y.size(), basis_.k(), "g_N");
    Rng rng(r.key().with("g_N").with(options_.n_samples).with_bits(y));
    double sum = 0.0;
    const double base = accumulate(y, options_.n_samples, rng, [&](double v) { sum += v; });
    return base + sum / static_cast<double>(options_.n_samples);
  }

  double f_g(const Vector& x) const { return g(basis_.active(x)); }
  double f_gN(const Vector& x, const Realization& r) const { return g_N(basis_.active(x), r); }

 private:
  // f(W1 y + W2 z) = 1/2 y^T B11 y + b1^T y + c + (B21 y + b2)^T z + 1/2 z^T B22 z
  // with B = W^T A W, (b1, b2) = W^T b.
  struct QuadraticInBasis {
    Matrix b11, b21, b22;
    Vector lin1, lin2;
    Vector diag22;  // set when B22 is exactly diagonal
    bool diagonal = false;
    double c = 0.0;

    double active_part(const Vector& y) const { return 0.5 * y.dot(b11 * y) + lin1.dot(y) + c; }
    Vector cross(const Vector& y) const { return b21 * y + lin2; }
    double inactive_part(const Vector& h, const Vector& z) const {
      if (diagonal) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < z.size(); ++i) s += z[i] * (h[i] + 0.5 * diag22[i] * z[i]);
        return s;
      }
      return h.dot(z) + 0.5 * z.dot(b22 * z);
    }
    double value(const Vector& y, const Vector& z) const {
      return active_part(y) + inactive_part(cross(y), z);
    }
    // Gaussian z: E[z] = 0, E[z z^T] = I.
    double conditional_mean(const Vector& y) const { return active_part(y) + 0.5 * b22.trace(); }
  };

  void prepare_quadratic(const QuadraticForm& q) {
    const Matrix& w = basis_.w();
    const Eigen::Index k = basis_.k();
    const Eigen::Index m = basis_.n() - k;
    Matrix b;
    QuadraticInBasis out;
    if (q.basis && q.sqrt_spectrum && *q.basis == w) {
      b = q.sqrt_spectrum->asDiagonal();
      out.diagonal = true;
    } else {
      b = w.transpose() * q.a * w;
      b = 0.5 * (b + b.transpose());
    }
    out.b11 = b.topLeftCorner(k, k);
    out.b21 = b.bottomLeftCorner(m, k);
    out.b22 = b.bottomRightCorner(m, m);
    out.diag22 = out.b22.diagonal();
    const Vector lin = w.transpose() * q.b;
    out.lin1 = lin.head(k);
    out.lin2 = lin.tail(m);
    out.c = q.c;
    quad_ = std::move(out);
  }

  // Calls sink(v - base) for each draw v = f(W1 y + W2 z_j) and returns base.
  // Working relative to base keeps g_N == g exactly when f does not depend on z.
  template <class Sink>
  double accumulate(const Vector& y, std::size_t count, Rng& rng, Sink&& sink) const {
    if (quad_) {
      const double base = quad_->active_part(y);
      const Vector h = quad_->cross(y);
      sampler_.for_each_inactive(y, count, rng, [&](const Vector& z) {
        sink(quad_->inactive_part(h, z));
      });
      return base;
    }
    const Vector x0 = basis_.w1() * y;
    Vector x(x0.size());
    std::optional<double> base;
    sampler_.for_each_inactive(y, count, rng, [&](const Vector& z) {
      x = x0;
      x.noalias() += basis_.w2() * z;
      const double v = gf_.value(x);
      if (!base) base = v;
      sink(v - *base);
    });
    return base.value_or(0.0);
  }

  GradientFunction gf_;
  Split basis_;
  ConditionalSampler sampler_;
  RidgeOptions options_;
  ReferenceMode mode_;
  std::optional<QuadraticInBasis> quad_;
};

}  // namespace asub
