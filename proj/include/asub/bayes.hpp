#pragma once

// Bayesian inversion with ridge-approximated data misfits: exact and
// approximate posteriors, normalizing constants, Hellinger distances, the
// Hellinger error bounds, and Metropolis-Hastings in the active variable.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "asub/error_metrics.hpp"
#include "asub/errors.hpp"
#include "asub/linalg.hpp"
#include "asub/parallel.hpp"
#include "asub/prob_model.hpp"
#include "asub/ridge.hpp"
#include "asub/rng.hpp"
#include "asub/subspace.hpp"

namespace asub {

/// Prior, forward model G, data d and noise covariance Gamma for d = G(X) + eta.
class PosteriorSpec {
 public:
  using ForwardModel = std::function<Vector(const Vector&)>;
  using Jacobian = std::function<Matrix(const Vector&)>;

  PosteriorSpec(DistributionSpec prior, ForwardModel g, Vector d, const Matrix& gamma,
                Jacobian jacobian = {})
      : prior_(std::move(prior)), g_(std::move(g)), jacobian_(std::move(jacobian)),
        d_(std::move(d)) {
    require_dim(gamma.rows(), d_.size(), "PosteriorSpec noise covariance");
    require_symmetric(gamma, 1e-12, "PosteriorSpec noise covariance");
    chol_ = Eigen::LLT<Matrix>(gamma);
    if (chol_.info() != Eigen::Success) {
      throw ArgumentError("PosteriorSpec: noise covariance is not positive definite");
    }
  }

  /// G(x) = A x.
  static PosteriorSpec linear(DistributionSpec prior, Matrix a, Vector d, const Matrix& gamma) {
    require_dim(a.cols(), prior.dim(), "PosteriorSpec::linear");
    require_dim(a.rows(), d.size(), "PosteriorSpec::linear");
    auto shared = std::make_shared<const Matrix>(a);
    PosteriorSpec ps(std::move(prior), [shared](const Vector& x) -> Vector { return *shared * x; },
                     std::move(d), gamma, [shared](const Vector&) -> Matrix { return *shared; });
    ps.linear_ = std::move(a);
    return ps;
  }

  const DistributionSpec& prior() const noexcept { return prior_; }
  const Vector& data() const noexcept { return d_; }
  Eigen::Index dim() const noexcept { return prior_.dim(); }
  const std::optional<Matrix>& linear_operator() const noexcept { return linear_; }

  /// Gamma^{-1} v via the Cholesky factor.
  Vector precision_times(const Vector& v) const { return chol_.solve(v); }

  /// f_d(x) = 1/2 |Gamma^{-1/2} (d - G(x))|^2
  double misfit(const Vector& x) const {
    require_dim(x.size(), dim(), "data_misfit");
    const Vector r = d_ - g_(x);
    require_dim(r.size(), d_.size(), "data_misfit forward model output");
    const Vector w = chol_.matrixL().solve(r);
    return 0.5 * w.squaredNorm();
  }

  /// The misfit as a GradientFunction; quadratic-tagged for linear models.
  GradientFunction misfit_function() const {
    if (linear_) {
      const Matrix& a = *linear_;
      QuadraticForm q;
      q.a = a.transpose() * chol_.solve(a);
      q.a = 0.5 * (q.a + q.a.transpose());
      q.b = -a.transpose() * chol_.solve(d_);
      q.c = 0.5 * d_.dot(chol_.solve(d_));
      return GradientFunction::quadratic(std::move(q));
    }
    if (!jacobian_) throw ArgumentError("misfit_function: a Jacobian is required for the gradient");
    auto self = std::make_shared<const PosteriorSpec>(*this);
    return GradientFunction(
        dim(), [self](const Vector& x) { return self->misfit(x); },
        [self](const Vector& x) -> Vector {
          return -self->jacobian_(x).transpose() * self->chol_.solve(self->d_ - self->g_(x));
        });
  }

 private:
  DistributionSpec prior_;
  ForwardModel g_;
  Jacobian jacobian_;
  Vector d_;
  Eigen::LLT<Matrix> chol_;
  std::optional<Matrix> linear_;
};

inline double data_misfit(const PosteriorSpec& ps, const Vector& x) { return ps.misfit(x); }

/// One of the exact or ridge-approximated posteriors exp(-f_*(x)) rho_prior(x) / Z_*.
class PosteriorVariant {
 public:
  enum class Kind { Exact, GRidge, GNRidge, GHatRidge, GHatNRidge };

  static PosteriorVariant exact(const PosteriorSpec& ps) {
    auto spec = std::make_shared<const PosteriorSpec>(ps);
    return PosteriorVariant(Kind::Exact, ps.prior(),
                            [spec](const Vector& x, const Realization*) { return spec->misfit(x); });
  }

  /// Ridge variant built on `ridge` (whose function must be the data misfit).
  /// Use a ridge on a perturbed basis for the hat kinds.
  static PosteriorVariant ridge(Kind kind, const DistributionSpec& prior, RidgeApprox ridge) {
    if (kind == Kind::Exact) throw ArgumentError("PosteriorVariant::ridge: kind must be a ridge kind");
    auto ra = std::make_shared<const RidgeApprox>(std::move(ridge));
    const bool random = kind == Kind::GNRidge || kind == Kind::GHatNRidge;
    PosteriorVariant pv(kind, prior, [ra, random](const Vector& x, const Realization* r) {
      return random ? ra->f_gN(x, *r) : ra->f_g(x);
    });
    pv.ridge_ = ra;
    return pv;
  }

  /// Unnormalized posterior with zero misfit; equals the prior.
  static PosteriorVariant prior_only(const DistributionSpec& prior) {
    return PosteriorVariant(Kind::Exact, prior, [](const Vector&, const Realization*) { return 0.0; });
  }

  Kind kind() const noexcept { return kind_; }
  bool is_random() const noexcept { return kind_ == Kind::GNRidge || kind_ == Kind::GHatNRidge; }
  const DistributionSpec& prior() const noexcept { return prior_; }
  const RidgeApprox* ridge_approx() const noexcept { return ridge_.get(); }

  double misfit(const Vector& x, const Realization* r = nullptr) const {
    if (is_random() && r == nullptr) {
      throw ArgumentError("PosteriorVariant: a realization is required for random variants");
    }
    return misfit_(x, r);
  }
  double misfit(const Vector& x, const std::optional<Realization>& r) const {
    return misfit(x, r ? &*r : nullptr);
  }

  /// Misfit as a function of the active variable (ridge kinds only).
  double active_misfit(const Vector& y, const Realization* r = nullptr) const {
    if (!ridge_) throw ArgumentError("active_misfit: variant has no ridge approximation");
    if (is_random()) {
      if (r == nullptr) throw ArgumentError("PosteriorVariant: a realization is required");
      return ridge_->g_N(y, *r);
    }
    return ridge_->g(y);
  }

 private:
  using MisfitFn = std::function<double(const Vector&, const Realization*)>;

  PosteriorVariant(Kind kind, DistributionSpec prior, MisfitFn misfit)
      : kind_(kind), prior_(std::move(prior)), misfit_(std::move(misfit)) {}

  Kind kind_;
  DistributionSpec prior_;
  MisfitFn misfit_;
  std::shared_ptr<const RidgeApprox> ridge_;
};

/// exp(-misfit(x)) rho_prior(x).
inline double unnormalized_posterior(const PosteriorVariant& pv, const Vector& x,
                                     const Realization* r = nullptr) {
  return std::exp(-pv.misfit(x, r)) * density(pv.prior(), x);
}

/// Prior Monte Carlo estimate of Z = E_prior[exp(-misfit)].
inline Estimate normalizing_constant(const PosteriorVariant& pv, std::size_t m, StreamKey key,
                                     const Realization* r = nullptr) {
  if (m < 2) throw ArgumentError("normalizing_constant: M must be at least 2");
  Rng rng(key.with("normalizing_constant"));
  detail::RunningStats stats;
  for (std::size_t i = 0; i < m; ++i) stats.push(std::exp(-pv.misfit(sample_one(pv.prior(), rng), r)));
  return {stats.mean, std::sqrt(stats.variance() / static_cast<double>(m))};
}

/// Tensor midpoint grid on [lo, hi] with `points` cells per axis (n <= 3).
struct GridSpec {
  Vector lo;
  Vector hi;
  int points = 400;

  Eigen::Index dim() const { return lo.size(); }
  std::size_t size() const {
    std::size_t s = 1;
    for (Eigen::Index i = 0; i < dim(); ++i) s *= static_cast<std::size_t>(points);
    return s;
  }
  double cell_volume() const { return ((hi - lo) / static_cast<double>(points)).prod(); }
  Vector point(std::size_t flat) const {
    Vector x(dim());
    for (Eigen::Index i = 0; i < dim(); ++i) {
      const auto idx = static_cast<double>(flat % static_cast<std::size_t>(points));
      flat /= static_cast<std::size_t>(points);
      x[i] = lo[i] + (idx + 0.5) * (hi[i] - lo[i]) / static_cast<double>(points);
    }
    return x;
  }
  void validate() const {
    if (dim() < 1 || dim() > 3) throw ArgumentError("GridSpec: grid quadrature needs 1 <= n <= 3");
    require_dim(hi.size(), dim(), "GridSpec bounds");
    if (points < 2) throw ArgumentError("GridSpec: at least two points per axis");
    if (!((hi - lo).array() > 0.0).all()) throw ArgumentError("GridSpec: empty bounds");
  }
};

/// Values of a function at every grid node, in flat order.
inline std::vector<double> evaluate_on_grid(const std::function<double(const Vector&)>& fn,
                                            const GridSpec& grid, unsigned threads = 1) {
  grid.validate();
  std::vector<double> out(grid.size());
  constexpr std::size_t kTile = 4096;
  const std::size_t tiles = (out.size() + kTile - 1) / kTile;
  parallel_for(tiles, threads, [&](std::size_t t) {
    const std::size_t end = std::min(out.size(), (t + 1) * kTile);
    for (std::size_t i = t * kTile; i < end; ++i) out[i] = fn(grid.point(i));
  });
  return out;
}

/// Grid Hellinger distance between two unnormalized densities given by their
/// node values; each is normalized by its own quadrature mass.
inline double hellinger_from_grid(std::span<const double> p, std::span<const double> q,
                                  double cell_volume) {
  if (p.size() != q.size()) throw ArgumentError("hellinger: grid sizes differ");
  double zp = 0.0, zq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    zp += p[i];
    zq += q[i];
  }
  zp *= cell_volume;
  zq *= cell_volume;
  if (!(zp > 0.0) || !(zq > 0.0)) throw NumericError("hellinger: nonpositive normalizing constant");
  const double sp = 1.0 / std::sqrt(zp), sq = 1.0 / std::sqrt(zq);
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double diff = std::sqrt(p[i]) * sp - std::sqrt(q[i]) * sq;
    acc += diff * diff;
  }
  return std::clamp(std::sqrt(0.5 * acc * cell_volume), 0.0, 1.0);
}

inline double hellinger_grid(const std::function<double(const Vector&)>& p,
                             const std::function<double(const Vector&)>& q, const GridSpec& grid,
                             unsigned threads = 1) {
  const auto pv = evaluate_on_grid(p, grid, threads);
  const auto qv = evaluate_on_grid(q, grid, threads);
  return hellinger_from_grid(pv, qv, grid.cell_volume());
}

/// Prior-MC Hellinger distance between exp(-fp) rho and exp(-fq) rho, via
/// 1/2 int (sqrt p - sqrt q)^2 = 1 - E_prior[exp(-(fp + fq)/2)] / sqrt(Zp Zq).
inline double hellinger_prior_mc(const PointFn& misfit_p, const PointFn& misfit_q,
                                 const DistributionSpec& prior, std::size_t m, StreamKey key) {
  if (m < 2) throw ArgumentError("hellinger: M must be at least 2");
  Rng rng(key.with("hellinger_prior_mc"));
  double zp = 0.0, zq = 0.0, cross = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const Vector x = sample_one(prior, rng);
    const double fp = misfit_p(x), fq = misfit_q(x);
    zp += std::exp(-fp);
    zq += std::exp(-fq);
    cross += std::exp(-0.5 * (fp + fq));
  }
  if (!(zp > 0.0) || !(zq > 0.0)) throw NumericError("hellinger: nonpositive normalizing constant");
  const double h2 = 1.0 - cross / std::sqrt(zp * zq);
  return std::clamp(std::sqrt(std::max(h2, 0.0)), 0.0, 1.0);
}

struct PriorMC {
  std::size_t m = 100'000;
};
using HellingerIntegration = std::variant<GridSpec, PriorMC>;

/// Hellinger distance between two posterior variants (realizations for random kinds).
inline double hellinger(const PosteriorVariant& p, const Realization* rp, const PosteriorVariant& q,
                        const Realization* rq, const HellingerIntegration& integration,
                        StreamKey key = StreamKey(0), unsigned threads = 1) {
  if (const auto* grid = std::get_if<GridSpec>(&integration)) {
    return hellinger_grid([&](const Vector& x) { return unnormalized_posterior(p, x, rp); },
                          [&](const Vector& x) { return unnormalized_posterior(q, x, rq); }, *grid,
                          threads);
  }
  return hellinger_prior_mc([&](const Vector& x) { return p.misfit(x, rp); },
                            [&](const Vector& x) { return q.misfit(x, rq); }, p.prior(),
                            std::get<PriorMC>(integration).m, key);
}

/// BoundInputs plus L with L^2 = (1/8) (Z exp(-E_prior[f]))^{-1/2}.
struct HellingerBoundInputs {
  BoundInputs base;
  double l = 1.0;
};

/// sqrt(C) L (eps sqrt(sum active) + sqrt(sum inactive))
inline double hellinger_bound_gpert(const HellingerBoundInputs& hb) {
  hb.base.validate();
  if (!(hb.l > 0.0)) throw ArgumentError("hellinger bound: L must be positive");
  return std::sqrt(hb.base.poincare) * hb.l * hb.base.perturbed_root();
}

inline double hellinger_bound_gpert_gpertN(const HellingerBoundInputs& hb, double n) {
  if (!(n >= 1.0)) throw ArgumentError("hellinger bound: N must be at least 1");
  return hellinger_bound_gpert(hb) / std::sqrt(n);
}

inline double hellinger_bound_total(const HellingerBoundInputs& hb, double n) {
  if (!(n >= 1.0)) throw ArgumentError("hellinger bound: N must be at least 1");
  return hellinger_bound_gpert(hb) + hellinger_bound_gpert_gpertN(hb, n);
}

struct LEstimate {
  double l = 0.0;
  double l_std_error = 0.0;
  Estimate z;
  Estimate mean_misfit;
};

/// Estimates L from prior samples of the misfit f; the standard error of L is
/// propagated with the delta method on log L = log(1/8)/2 - (log Z - E f)/4.
inline LEstimate estimate_L(const PointFn& misfit, const DistributionSpec& prior, std::size_t m,
                            StreamKey key) {
  if (m < 2) throw ArgumentError("estimate_L: M must be at least 2");
  Rng rng(key.with("estimate_L"));
  std::vector<double> f(m), e(m);
  for (std::size_t i = 0; i < m; ++i) {
    f[i] = misfit(sample_one(prior, rng));
    e[i] = std::exp(-f[i]);
  }
  const double md = static_cast<double>(m);
  double mf = 0.0, me = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    mf += f[i];
    me += e[i];
  }
  mf /= md;
  me /= md;
  double vf = 0.0, ve = 0.0, cfe = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    vf += (f[i] - mf) * (f[i] - mf);
    ve += (e[i] - me) * (e[i] - me);
    cfe += (f[i] - mf) * (e[i] - me);
  }
  vf /= md - 1.0;
  ve /= md - 1.0;
  cfe /= md - 1.0;
  if (!(me > 0.0)) throw NumericError("estimate_L: nonpositive normalizing constant");
  LEstimate out;
  out.z = {me, std::sqrt(ve / md)};
  out.mean_misfit = {mf, std::sqrt(vf / md)};
  out.l = std::sqrt(0.125 * std::pow(me * std::exp(-mf), -0.5));
  const double var_log_l = (ve / (me * me) + vf - 2.0 * cfe / me) / (16.0 * md);
  out.l_std_error = out.l * std::sqrt(std::max(var_log_l, 0.0));
  return out;
}

struct ChainRecord {
  std::vector<Vector> states;     // all T states (y after each step)
  std::vector<double> misfits;    // active misfit at each state
  std::vector<char> accepted;     // proposal accepted at each step
  std::size_t burn_in = 0;
  double acceptance_rate = 0.0;   // over retained steps
  double autocorrelation_time = 0.0;
  std::vector<Vector> lifted;     // x = W1 y + W2 z for retained states, when requested

  std::size_t retained() const { return states.size() - burn_in; }
  std::span<const Vector> retained_states() const {
    return std::span<const Vector>(states).subspan(burn_in);
  }
};

/// Integrated autocorrelation time of a scalar series (Sokal window, c = 5).
inline double integrated_autocorrelation_time(std::span<const double> xs) {
  const std::size_t n = xs.size();
  if (n < 2) return 1.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(n);
  double c0 = 0.0;
  for (double x : xs) c0 += (x - mean) * (x - mean);
  c0 /= static_cast<double>(n);
  if (c0 <= 0.0) return 1.0;
  double tau = 1.0;
  for (std::size_t lag = 1; lag < n; ++lag) {
    double c = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) c += (xs[i] - mean) * (xs[i + lag] - mean);
    c /= static_cast<double>(n) * c0;
    tau += 2.0 * c;
    if (static_cast<double>(lag) >= 5.0 * tau) break;
  }
  return std::max(tau, 1.0);
}

struct MhOptions {
  double step = 0.0;       // proposal std; 0 selects 2.4 / sqrt(k)
  std::size_t steps = 100'000;
  std::size_t burn_in = 1'000;
  bool lift = false;       // reconstruct x for retained states
};

/// Random-walk Metropolis on pi(y) ~ exp(-g(y)) phi_k(y), phi_k the standard normal
/// marginal of the Gaussian prior. The proposal is symmetric, so the acceptance
/// ratio is pi(y')/pi(y).
inline ChainRecord metropolis_hastings_active(const std::function<double(const Vector&)>& active_misfit,
                                              const Vector& y0, const MhOptions& options,
                                              StreamKey key,
                                              const ConditionalSampler* lifter = nullptr) {
  const Eigen::Index k = y0.size();
  if (k < 1) throw ArgumentError("metropolis_hastings_active: empty start point");
  const double s = options.step == 0.0 ? 2.4 / std::sqrt(static_cast<double>(k)) : options.step;
  if (!(s > 0.0)) throw ArgumentError("metropolis_hastings_active: proposal std must be positive");
  if (options.steps < options.burn_in) {
    throw ArgumentError("metropolis_hastings_active: steps must be at least the burn-in");
  }
  if (options.lift && lifter == nullptr) {
    throw ArgumentError("metropolis_hastings_active: lifting needs a conditional sampler");
  }
  Rng rng(key.with("mcmc"));
  auto log_target = [&](const Vector& y, double misfit) { return -misfit - 0.5 * y.squaredNorm(); };
  ChainRecord rec;
  rec.burn_in = options.burn_in;
  rec.states.reserve(options.steps);
  rec.misfits.reserve(options.steps);
  rec.accepted.reserve(options.steps);
  Vector y = y0;
  double fy = active_misfit(y);
  double ly = log_target(y, fy);
  std::size_t accepted_retained = 0;
  for (std::size_t t = 0; t < options.steps; ++t) {
    Vector proposal = y;
    for (Eigen::Index i = 0; i < k; ++i) proposal[i] += s * rng.normal();
    const double fp = active_misfit(proposal);
    const double lp = log_target(proposal, fp);
    const bool accept = std::log(rng.uniform()) < lp - ly;
    if (accept) {
      y = std::move(proposal);
      fy = fp;
      ly = lp;
      if (t >= options.burn_in) ++accepted_retained;
    }
    rec.states.push_back(y);
    rec.misfits.push_back(fy);
    rec.accepted.push_back(accept ? 1 : 0);
  }
  const std::size_t kept = rec.retained();
  rec.acceptance_rate = kept > 0 ? static_cast<double>(accepted_retained) / static_cast<double>(kept) : 0.0;
  for (Eigen::Index i = 0; i < k && kept > 1; ++i) {
    std::vector<double> series(kept);
    for (std::size_t t = 0; t < kept; ++t) series[t] = rec.states[rec.burn_in + t][i];
    rec.autocorrelation_time = std::max(rec.autocorrelation_time, integrated_autocorrelation_time(series));
  }
  if (options.lift) {
    rec.lifted.reserve(kept);
    for (std::size_t t = 0; t < kept; ++t) {
      const Vector& yt = rec.states[rec.burn_in + t];
      Rng zr(key.with("mcmc-lift").with(t));
      lifter->for_each_inactive(yt, 1, zr, [&](const Vector& z) { rec.lifted.push_back(lifter->lift(yt, z)); });
    }
  }
  return rec;
}

/// Total variation distance between a sample histogram and a density on a 1D
/// partition [lo, hi] with `bins` equal cells; the density is integrated on a
/// fine midpoint grid and normalized over [lo, hi].
inline double tv_distance_histogram(std::span<const double> samples,
                                    const std::function<double(double)>& density, double lo,
                                    double hi, int bins, int sub = 64) {
  if (bins < 1 || !(hi > lo)) throw ArgumentError("tv_distance_histogram: bad partition");
  std::vector<double> emp(static_cast<std::size_t>(bins), 0.0), ref(emp.size(), 0.0);
  const double width = (hi - lo) / bins;
  std::size_t outside = 0;
  for (double v : samples) {
    const auto b = static_cast<long>(std::floor((v - lo) / width));
    if (b < 0 || b >= bins) {
      ++outside;
      continue;
    }
    emp[static_cast<std::size_t>(b)] += 1.0;
  }
  double total = 0.0;
  for (int b = 0; b < bins; ++b) {
    for (int j = 0; j < sub; ++j) ref[static_cast<std::size_t>(b)] += density(lo + width * (b + (j + 0.5) / sub));
    total += ref[static_cast<std::size_t>(b)];
  }
  const double ns = static_cast<double>(samples.size());
  double tv = static_cast<double>(outside) / ns;
  for (std::size_t b = 0; b < emp.size(); ++b) tv += std::abs(emp[b] / ns - ref[b] / total);
  return 0.5 * tv;
}

}  // namespace asub
