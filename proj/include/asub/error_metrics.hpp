#pragma once

// Monte Carlo mean-squared-error estimators between f, f_g, f_{g_N} and their
// perturbed counterparts, statistics over realizations, and the closed-form
// upper bounds these quantities must respect.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "asub/errors.hpp"
#include "asub/linalg.hpp"
#include "asub/parallel.hpp"
#include "asub/prob_model.hpp"
#include "asub/rng.hpp"

namespace asub {

using PointFn = std::function<double(const Vector&)>;
/// A random function: value at x for realization r.
using RealizedFn = std::function<double(const Vector&, std::uint64_t)>;

struct MseEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n_x = 0;
  std::uint64_t realization = 0;
};

struct Verdict {
  bool satisfied = true;
  double slack = 0.0;  // bound - estimate
};

/// Statistics of a random MSE over realizations, with its bound.
struct MseReport {
  std::size_t n = 0;            // N of g_N
  std::size_t realizations = 0;
  std::size_t n_x = 0;
  double mean = 0.0;
  double std = 0.0;
  double cv = 0.0;
  double std_error = 0.0;       // std / sqrt(R)
  double bound = std::numeric_limits<double>::infinity();
  std::optional<double> identity_prediction;
  bool satisfied = true;
};

namespace detail {

struct RunningStats {
  std::size_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void push(double v) {
    ++count;
    const double delta = v - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (v - mean);
  }
  double variance() const { return count > 1 ? m2 / static_cast<double>(count - 1) : 0.0; }
};

inline void require_finite(double v, const Vector& x, std::size_t i) {
  if (!std::isfinite(v)) {
    throw NumericError("mse: non-finite evaluation at point " + std::to_string(i), x,
                       static_cast<long>(i));
  }
}

}  // namespace detail

/// (1/N_x) sum (fa(X_i) - fb(X_i))^2 for X_i ~ rho_X, with its standard error.
inline MseEstimate mse(const PointFn& fa, const PointFn& fb, const DistributionSpec& dist,
                       std::size_t n_x, Rng& rng, std::uint64_t realization = 0) {
  if (n_x < 2) throw ArgumentError("mse: N_x must be at least 2");
  detail::RunningStats stats;
  for (std::size_t i = 0; i < n_x; ++i) {
    const Vector x = sample_one(dist, rng);
    const double a = fa(x);
    const double b = fb(x);
    detail::require_finite(a, x, i);
    detail::require_finite(b, x, i);
    stats.push((a - b) * (a - b));
  }
  return {stats.mean, std::sqrt(stats.variance() / static_cast<double>(n_x)), n_x, realization};
}

struct MseStudyOptions {
  std::size_t n_x = 10'000;
  std::size_t realizations = 1'000;
  bool shared_batch = false;  // reuse one X batch for every realization
  unsigned threads = 1;
};

/// Runs mse(fa_i, fb(., r)) for r = 0..R-1 for several reference functions fa_i
/// sharing the same fb evaluations. Each realization draws its own X batch
/// unless `shared_batch` is set. Returns one report per fa (bound fields unset).
inline std::vector<MseReport> expected_mse_study(std::span<const PointFn> fas,
                                                 const RealizedFn& fb,
                                                 const DistributionSpec& dist,
                                                 const MseStudyOptions& options, StreamKey key) {
  if (options.realizations < 2) throw ArgumentError("expected_mse_study: R must be at least 2");
  if (options.n_x < 2) throw ArgumentError("expected_mse_study: N_x must be at least 2");
  const std::size_t nf = fas.size();
  const std::size_t rcount = options.realizations;
  std::vector<double> values(rcount * nf);
  parallel_for(rcount, options.threads, [&](std::size_t r) {
    Rng rng(key.with("mse-x").with(options.shared_batch ? 0 : r));
    std::vector<double> acc(nf, 0.0);
    for (std::size_t i = 0; i < options.n_x; ++i) {
      const Vector x = sample_one(dist, rng);
      const double b = fb(x, r);
      detail::require_finite(b, x, i);
      for (std::size_t f = 0; f < nf; ++f) {
        const double a = fas[f](x);
        detail::require_finite(a, x, i);
        acc[f] += (a - b) * (a - b);
      }
    }
    for (std::size_t f = 0; f < nf; ++f) {
      values[r * nf + f] = acc[f] / static_cast<double>(options.n_x);
    }
  });
  std::vector<MseReport> reports(nf);
  for (std::size_t f = 0; f < nf; ++f) {
    detail::RunningStats stats;
    for (std::size_t r = 0; r < rcount; ++r) stats.push(values[r * nf + f]);
    MseReport& rep = reports[f];
    rep.realizations = rcount;
    rep.n_x = options.n_x;
    rep.mean = stats.mean;
    rep.std = std::sqrt(stats.variance());
    rep.cv = rep.mean > 0.0 ? rep.std / rep.mean : 0.0;
    rep.std_error = rep.std / std::sqrt(static_cast<double>(rcount));
  }
  return reports;
}

inline MseReport expected_mse_study(const PointFn& fa, const RealizedFn& fb,
                                    const DistributionSpec& dist, const MseStudyOptions& options,
                                    StreamKey key) {
  return expected_mse_study(std::span<const PointFn>(&fa, 1), fb, dist, options, key).front();
}

/// Satisfied when estimate - 3 * std_error <= bound.
inline Verdict check_bound(double estimate, double std_error, double bound) {
  return {estimate - 3.0 * std_error <= bound, bound - estimate};
}
inline Verdict check_bound(const MseEstimate& e, double bound) {
  return check_bound(e.value, e.std_error, bound);
}
inline Verdict check_bound(const MseReport& r, double bound) {
  return check_bound(r.mean, r.std_error, bound);
}

/// Inputs shared by every error bound.
struct BoundInputs {
  double poincare = 1.0;
  Vector eigenvalues;
  Eigen::Index k = 1;
  double n = 1.0;  // N; may be +inf for the large-sample limit
  double eps = 0.0;

  void validate() const {
    if (!(poincare >= 0.0) || !(eps >= 0.0) || !(n >= 1.0)) {
      throw ArgumentError("BoundInputs: C, eps must be nonnegative and N at least 1");
    }
    if (k < 1 || k > eigenvalues.size() - 1) throw ArgumentError("BoundInputs: k out of range");
    if ((eigenvalues.array() < 0.0).any()) throw ArgumentError("BoundInputs: negative eigenvalue");
  }
  double active_sum() const { return eigenvalues.head(k).sum(); }
  double inactive_sum() const { return eigenvalues.tail(eigenvalues.size() - k).sum(); }
  /// eps * sqrt(active sum) + sqrt(inactive sum)
  double perturbed_root() const {
    return eps * std::sqrt(active_sum()) + std::sqrt(inactive_sum());
  }
};

/// E[(f - f_g)^2] <= C (lambda_{k+1} + ... + lambda_n)
inline double bound_expct_fg_f(const BoundInputs& b) {
  b.validate();
  return b.poincare * b.inactive_sum();
}

/// E[MSE(f_g, f_{g_N})] <= (C/N) (lambda_{k+1} + ... + lambda_n)
inline double bound_var_mc(const BoundInputs& b) {
  b.validate();
  return b.poincare / b.n * b.inactive_sum();
}

/// E[(f - f_ghat)^2] <= C (eps sqrt(sum active) + sqrt(sum inactive))^2
inline double bound_f_fghat(const BoundInputs& b) {
  b.validate();
  const double r = b.perturbed_root();
  return b.poincare * r * r;
}

inline double bound_var_mc_pert(const BoundInputs& b) { return bound_f_fghat(b) / b.n; }

/// E[MSE(f, f_{ghat_N})] <= C (1 + N^{-1/2})^2 (eps sqrt(sum active) + sqrt(sum inactive))^2
inline double bound_mse_f_fgN(const BoundInputs& b) {
  const double factor = 1.0 + 1.0 / std::sqrt(b.n);
  return factor * factor * bound_f_fghat(b);
}

struct LogLogFit {
  double slope = 0.0;
  double intercept = 0.0;
  double max_relative_residual = 0.0;  // max |y_i / fit(x_i) - 1|
};

/// Least squares fit of log y = intercept + slope log x.
inline LogLogFit fit_loglog(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2) throw ArgumentError("fit_loglog: need >= 2 points");
  const double m = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) throw ArgumentError("fit_loglog: values must be positive");
    const double lx = std::log(xs[i]), ly = std::log(ys[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  LogLogFit fit;
  fit.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  fit.intercept = (sy - fit.slope * sx) / m;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double pred = std::exp(fit.intercept + fit.slope * std::log(xs[i]));
    fit.max_relative_residual = std::max(fit.max_relative_residual, std::abs(ys[i] / pred - 1.0));
  }
  return fit;
}

}  // namespace asub
