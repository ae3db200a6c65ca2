#pragma once

// Sampling densities on R^n, their supports, and the conditional law of the
// inactive variable z given the active variable y under an orthogonal split
// x = W1 y + W2 z.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "asub/errors.hpp"
#include "asub/linalg.hpp"
#include "asub/rng.hpp"

namespace asub {

/// Axis-aligned box [lo, hi].
struct Box {
  Vector lo;
  Vector hi;
};

/// Euclidean ball.
struct Ball {
  Vector center;
  double radius = 1.0;
};

using ConvexBody = std::variant<Box, Ball>;

namespace body {

inline Eigen::Index dim(const ConvexBody& b) {
  return std::visit([](const auto& s) -> Eigen::Index {
    if constexpr (std::is_same_v<std::decay_t<decltype(s)>, Box>) return s.lo.size();
    else return s.center.size();
  }, b);
}

inline bool contains(const ConvexBody& b, const Vector& x, double tol = 0.0) {
  if (const auto* box = std::get_if<Box>(&b)) {
    return ((x - box->lo).array() >= -tol).all() && ((box->hi - x).array() >= -tol).all();
  }
  const auto& ball = std::get<Ball>(b);
  return (x - ball.center).norm() <= ball.radius + tol;
}

inline double volume(const ConvexBody& b) {
  if (const auto* box = std::get_if<Box>(&b)) return (box->hi - box->lo).prod();
  const auto& ball = std::get<Ball>(b);
  const double n = static_cast<double>(ball.center.size());
  return std::pow(std::numbers::pi, n / 2.0) / std::tgamma(n / 2.0 + 1.0) *
         std::pow(ball.radius, n);
}

inline Vector sample_uniform(const ConvexBody& b, Rng& rng) {
  if (const auto* box = std::get_if<Box>(&b)) {
    Vector x(box->lo.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = rng.uniform(box->lo[i], box->hi[i]);
    return x;
  }
  const auto& ball = std::get<Ball>(b);
  const Eigen::Index n = ball.center.size();
  Vector d = rng.normal_vector(n);
  const double r = ball.radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(n));
  return ball.center + (r / d.norm()) * d;
}

/// Parameter interval {t : x + t d in body}; empty when first > second.
inline std::pair<double, double> chord(const ConvexBody& b, const Vector& x, const Vector& d) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (const auto* box = std::get_if<Box>(&b)) {
    double tmin = -inf, tmax = inf;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (d[i] == 0.0) {
        if (x[i] < box->lo[i] || x[i] > box->hi[i]) return {1.0, -1.0};
        continue;
      }
      double a = (box->lo[i] - x[i]) / d[i];
      double c = (box->hi[i] - x[i]) / d[i];
      if (a > c) std::swap(a, c);
      tmin = std::max(tmin, a);
      tmax = std::min(tmax, c);
    }
    return {tmin, tmax};
  }
  const auto& ball = std::get<Ball>(b);
  const Vector u = x - ball.center;
  const double a = d.squaredNorm();
  const double hb = u.dot(d);
  const double c = u.squaredNorm() - ball.radius * ball.radius;
  const double disc = hb * hb - a * c;
  if (a == 0.0 || disc < 0.0) return {1.0, -1.0};
  const double s = std::sqrt(disc);
  return {(-hb - s) / a, (-hb + s) / a};
}

/// Diameter of the projected body W2^T X.
inline double projected_diameter(const ConvexBody& b, const Matrix& w2) {
  if (w2.cols() == 0) return 0.0;
  if (const auto* ball = std::get_if<Ball>(&b)) return 2.0 * ball->radius;
  const auto& box = std::get<Box>(b);
  const Eigen::Index n = box.lo.size();
  if (n > 20) throw ArgumentError("projected_diameter: box dimension above 20 is not supported");
  const std::size_t count = std::size_t{1} << n;
  Matrix projected(w2.cols(), static_cast<Eigen::Index>(count));
  Vector v(n);
  for (std::size_t mask = 0; mask < count; ++mask) {
    for (Eigen::Index i = 0; i < n; ++i) v[i] = (mask >> i) & 1U ? box.hi[i] : box.lo[i];
    projected.col(static_cast<Eigen::Index>(mask)) = w2.transpose() * v;
  }
  double best = 0.0;
  for (Eigen::Index i = 0; i < projected.cols(); ++i) {
    for (Eigen::Index j = i + 1; j < projected.cols(); ++j) {
      best = std::max(best, (projected.col(i) - projected.col(j)).squaredNorm());
    }
  }
  return std::sqrt(best);
}

/// A point x with lo <= x <= hi and a x = y, or nullopt when none exists.
/// Phase-one bounded-variable simplex with one artificial per row and Bland's rule.
inline std::optional<Vector> box_affine_point(const Matrix& a, const Vector& y, const Vector& lo,
                                              const Vector& hi) {
  const Eigen::Index k = a.rows(), n = a.cols(), total = n + k;
  const double scale = 1.0 + a.cwiseAbs().maxCoeff() * std::max(lo.cwiseAbs().maxCoeff(), hi.cwiseAbs().maxCoeff()) +
                       y.cwiseAbs().maxCoeff();
  const double tol = 1e-11 * scale;
  // Columns: the n box variables, then artificials with sign chosen so they start nonnegative.
  Matrix cols(k, total);
  cols.leftCols(n) = a;
  Vector x(total);
  x.head(n) = lo;
  const Vector r = y - a * lo;
  cols.rightCols(k).setZero();
  for (Eigen::Index i = 0; i < k; ++i) {
    cols(i, n + i) = r[i] >= 0.0 ? 1.0 : -1.0;
    x[n + i] = std::abs(r[i]);
  }
  auto lower = [&](Eigen::Index j) { return j < n ? lo[j] : 0.0; };
  auto upper = [&](Eigen::Index j) { return j < n ? hi[j] : std::numeric_limits<double>::infinity(); };
  std::vector<Eigen::Index> basis(static_cast<std::size_t>(k));
  std::vector<char> in_basis(static_cast<std::size_t>(total), 0);
  for (Eigen::Index i = 0; i < k; ++i) {
    basis[static_cast<std::size_t>(i)] = n + i;
    in_basis[static_cast<std::size_t>(n + i)] = 1;
  }
  const std::size_t max_iter = 50 * static_cast<std::size_t>(total) + 100;
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    Matrix b(k, k);
    Vector cb(k);
    for (Eigen::Index i = 0; i < k; ++i) {
      const Eigen::Index j = basis[static_cast<std::size_t>(i)];
      b.col(i) = cols.col(j);
      cb[i] = j >= n ? 1.0 : 0.0;
    }
    const Eigen::PartialPivLU<Matrix> lu(b);
    const Vector pi = lu.transpose().solve(cb);
    Eigen::Index enter = -1;
    double dir = 0.0;
    for (Eigen::Index j = 0; j < total && enter < 0; ++j) {
      if (in_basis[static_cast<std::size_t>(j)]) continue;
      const double reduced = (j >= n ? 1.0 : 0.0) - pi.dot(cols.col(j));
      if (reduced < -1e-12 && x[j] < upper(j) - tol) enter = j, dir = 1.0;
      else if (reduced > 1e-12 && x[j] > lower(j) + tol) enter = j, dir = -1.0;
    }
    if (enter < 0) break;
    const Vector alpha = lu.solve(cols.col(enter));
    double theta = upper(enter) - lower(enter);  // bound flip of the entering variable
    Eigen::Index leave = -1;
    for (Eigen::Index i = 0; i < k; ++i) {
      const double rate = -dir * alpha[i];  // d x_basic / d theta
      const Eigen::Index j = basis[static_cast<std::size_t>(i)];
      double limit = std::numeric_limits<double>::infinity();
      if (rate < -1e-13) limit = (x[j] - lower(j)) / -rate;
      else if (rate > 1e-13) limit = (upper(j) - x[j]) / rate;
      if (limit < theta || (limit == theta && leave >= 0 && j < basis[static_cast<std::size_t>(leave)])) {
        theta = std::max(limit, 0.0);
        leave = i;
      }
    }
    if (!std::isfinite(theta)) return std::nullopt;  // cannot happen with a bounded box
    x[enter] += dir * theta;
    for (Eigen::Index i = 0; i < k; ++i) x[basis[static_cast<std::size_t>(i)]] -= dir * theta * alpha[i];
    if (leave >= 0) {
      const Eigen::Index out = basis[static_cast<std::size_t>(leave)];
      x[out] = std::clamp(x[out], lower(out), upper(out));
      in_basis[static_cast<std::size_t>(out)] = 0;
      in_basis[static_cast<std::size_t>(enter)] = 1;
      basis[static_cast<std::size_t>(leave)] = enter;
    }
  }
  if (x.tail(k).sum() > tol * static_cast<double>(k)) return std::nullopt;
  Vector out = x.head(n).cwiseMax(lo).cwiseMin(hi);
  return out;
}

}  // namespace body

/// The sampling density rho_X: standard normal on R^n or uniform on a box/ball.
class DistributionSpec {
 public:
  enum class Kind { StandardNormal, UniformConvex };

  static DistributionSpec standard_normal(Eigen::Index n) {
    if (n < 1) throw ArgumentError("standard_normal: dimension must be positive");
    DistributionSpec d;
    d.kind_ = Kind::StandardNormal;
    d.dim_ = n;
    return d;
  }

  static DistributionSpec uniform(ConvexBody b) {
    const Eigen::Index n = body::dim(b);
    if (n < 1) throw ArgumentError("uniform: dimension must be positive");
    if (const auto* box = std::get_if<Box>(&b)) {
      if (box->hi.size() != n) throw ArgumentError("uniform: box bounds differ in dimension");
      if (!((box->hi - box->lo).array() > 0.0).all()) {
        throw ArgumentError("uniform: box must have positive volume");
      }
    } else if (!(std::get<Ball>(b).radius > 0.0)) {
      throw ArgumentError("uniform: ball radius must be positive");
    }
    DistributionSpec d;
    d.kind_ = Kind::UniformConvex;
    d.dim_ = n;
    d.body_ = std::move(b);
    d.volume_ = body::volume(*d.body_);
    return d;
  }
  static DistributionSpec uniform_box(Vector lo, Vector hi) {
    return uniform(Box{std::move(lo), std::move(hi)});
  }
  static DistributionSpec uniform_ball(Vector center, double radius) {
    return uniform(Ball{std::move(center), radius});
  }

  Kind kind() const noexcept { return kind_; }
  Eigen::Index dim() const noexcept { return dim_; }
  bool is_gaussian() const noexcept { return kind_ == Kind::StandardNormal; }
  /// Null for the Gaussian case.
  const ConvexBody* body() const noexcept { return body_ ? &*body_ : nullptr; }
  double volume() const noexcept { return volume_; }

  bool in_support(const Vector& x, double tol = 0.0) const {
    return is_gaussian() || body::contains(*body_, x, tol);
  }

 private:
  DistributionSpec() = default;

  Kind kind_ = Kind::StandardNormal;
  Eigen::Index dim_ = 0;
  std::optional<ConvexBody> body_;
  double volume_ = std::numeric_limits<double>::infinity();
};

inline double density(const DistributionSpec& dist, const Vector& x) {
  require_dim(x.size(), dist.dim(), "density");
  if (dist.is_gaussian()) {
    const double n = static_cast<double>(dist.dim());
    return std::exp(-0.5 * x.squaredNorm() - 0.5 * n * std::log(2.0 * std::numbers::pi));
  }
  return dist.in_support(x) ? 1.0 / dist.volume() : 0.0;
}

inline Vector sample_one(const DistributionSpec& dist, Rng& rng) {
  if (dist.is_gaussian()) return rng.normal_vector(dist.dim());
  return body::sample_uniform(*dist.body(), rng);
}

inline std::vector<Vector> sample(const DistributionSpec& dist, std::size_t count, Rng& rng) {
  if (count < 1) throw ArgumentError("sample: count must be at least 1");
  std::vector<Vector> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(sample_one(dist, rng));
  return out;
}

struct PoincareConstant {
  enum class Provenance { GaussianUnit, UniformDiam };
  double value = 1.0;
  Provenance provenance = Provenance::GaussianUnit;
};

/// Poincare constant for the inactive variable: 1 for the standard normal,
/// diam(W2^T X)/pi for uniform densities on convex bodies (global sup over slices).
inline PoincareConstant poincare_constant(const DistributionSpec& dist, const Matrix& w2) {
  switch (dist.kind()) {
    case DistributionSpec::Kind::StandardNormal:
      return {1.0, PoincareConstant::Provenance::GaussianUnit};
    case DistributionSpec::Kind::UniformConvex:
      require_dim(w2.rows(), dist.dim(), "poincare_constant");
      return {body::projected_diameter(*dist.body(), w2) / std::numbers::pi,
              PoincareConstant::Provenance::UniformDiam};
  }
  throw NotImplementedError("poincare_constant: unsupported distribution kind");
}

enum class ConditionalMethod { AnalyticGaussian, RejectionSlice, HitAndRunSlice };

/// Draws z ~ rho_{Z|Y}(. | y) for a fixed split (W1, W2).
///
/// Gaussian: z ~ N(0, I) independent of y. Uniform: rejection from the
/// bounding box of the slice {z : W1 y + W2 z in X}; if fewer than 1% of the
/// first 1000 proposals are accepted the remaining draws come from a
/// hit-and-run chain on the slice (correlated, asymptotically exact).
class ConditionalSampler {
 public:
  static constexpr std::size_t kProbeDraws = 1000;
  static constexpr double kMinAcceptance = 0.01;

  ConditionalSampler(DistributionSpec dist, Matrix w1, Matrix w2,
                     std::optional<ConditionalMethod> method = std::nullopt)
      : dist_(std::move(dist)), w1_(std::move(w1)), w2_(std::move(w2)) {
    require_dim(w1_.rows(), dist_.dim(), "ConditionalSampler W1");
    require_dim(w2_.rows(), dist_.dim(), "ConditionalSampler W2");
    require_dim(w1_.cols() + w2_.cols(), dist_.dim(), "ConditionalSampler split");
    if (method) {
      if (dist_.is_gaussian() != (*method == ConditionalMethod::AnalyticGaussian)) {
        throw ArgumentError("ConditionalSampler: method does not match the distribution");
      }
      method_ = *method;
    } else {
      method_ = dist_.is_gaussian() ? ConditionalMethod::AnalyticGaussian
                                    : ConditionalMethod::RejectionSlice;
    }
  }

  const DistributionSpec& distribution() const noexcept { return dist_; }
  ConditionalMethod method() const noexcept { return method_; }
  const Matrix& w1() const noexcept { return w1_; }
  const Matrix& w2() const noexcept { return w2_; }
  Eigen::Index active_dim() const noexcept { return w1_.cols(); }
  Eigen::Index inactive_dim() const noexcept { return w2_.cols(); }

  /// Calls visit(z) for `count` conditional draws, reusing one buffer.
  template <class Visit>
  void for_each_inactive(const Vector& y, std::size_t count, Rng& rng, Visit&& visit) const {
    require_dim(y.size(), active_dim(), "conditional_sample_inactive");
    const Eigen::Index m = inactive_dim();
    Vector z(m);
    if (m == 0) {
      for (std::size_t j = 0; j < count; ++j) visit(std::as_const(z));
      return;
    }
    if (method_ == ConditionalMethod::AnalyticGaussian) {
      for (std::size_t j = 0; j < count; ++j) {
        for (Eigen::Index i = 0; i < m; ++i) z[i] = rng.normal();
        visit(std::as_const(z));
      }
      return;
    }
    sample_slice(y, count, rng, visit);
  }

  std::vector<Vector> sample_inactive(const Vector& y, std::size_t count, Rng& rng) const {
    if (count < 1) throw ArgumentError("conditional_sample_inactive: count must be at least 1");
    std::vector<Vector> out;
    out.reserve(count);
    for_each_inactive(y, count, rng, [&](const Vector& z) { out.push_back(z); });
    return out;
  }

  /// Bounding box of the slice in z coordinates, or nullopt when the slice is provably empty.
  std::optional<std::pair<Vector, Vector>> slice_bounds(const Vector& y) const {
    const Eigen::Index m = inactive_dim();
    const Vector x0 = w1_ * y;
    if (const auto* ball = std::get_if<Ball>(dist_.body())) {
      const Vector u = x0 - ball->center;
      const Vector proj = w2_.transpose() * u;
      const double r2 = ball->radius * ball->radius - (u - w2_ * proj).squaredNorm();
      if (r2 < 0.0) return std::nullopt;
      const double r = std::sqrt(r2);
      return std::make_pair(Vector((-proj).array() - r), Vector((-proj).array() + r));
    }
    const auto& box = std::get<Box>(*dist_.body());
    Vector lo(m), hi(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto w = w2_.col(i);
      const double off = w.dot(x0);
      double a = 0.0, b = 0.0;
      for (Eigen::Index r = 0; r < w.size(); ++r) {
        const double p = w[r] * box.lo[r], q = w[r] * box.hi[r];
        a += std::min(p, q);
        b += std::max(p, q);
      }
      lo[i] = a - off;
      hi[i] = b - off;
    }
    return std::make_pair(std::move(lo), std::move(hi));
  }

  Vector lift(const Vector& y, const Vector& z) const { return w1_ * y + w2_ * z; }

 private:
  template <class Visit>
  void sample_slice(const Vector& y, std::size_t count, Rng& rng, Visit& visit) const {
    const auto bounds = slice_bounds(y);
    if (!bounds) throw DomainError("conditional_sample_inactive: empty slice for this y");
    const auto& [lo, hi] = *bounds;
    const Eigen::Index m = inactive_dim();
    const Vector x0 = w1_ * y;
    Vector z(m);
    std::optional<Vector> last_inside;
    std::size_t emitted = 0;
    if (method_ == ConditionalMethod::RejectionSlice) {
      std::size_t attempts = 0;
      while (emitted < count) {
        for (Eigen::Index i = 0; i < m; ++i) z[i] = rng.uniform(lo[i], hi[i]);
        ++attempts;
        if (dist_.in_support(x0 + w2_ * z)) {
          visit(std::as_const(z));
          last_inside = z;
          ++emitted;
        }
        if (attempts >= kProbeDraws &&
            static_cast<double>(emitted) < kMinAcceptance * static_cast<double>(attempts)) {
          break;
        }
      }
      if (emitted == count) return;
    }
    Vector start = last_inside ? *last_inside : interior_point(y, lo, hi);
    hit_and_run(x0, std::move(start), count - emitted, rng, visit);
  }

  // Finds a point of the slice, preferring one well inside it.
  Vector interior_point(const Vector& y, const Vector& lo, const Vector& hi) const {
    if (std::holds_alternative<Ball>(*dist_.body())) return 0.5 * (lo + hi);
    const auto& box = std::get<Box>(*dist_.body());
    const double width = (box.hi - box.lo).minCoeff();
    for (double shrink = 0.25 * width; shrink > 1e-10 * width; shrink *= 0.5) {
      const Vector slo = box.lo.array() + shrink;
      const Vector shi = box.hi.array() - shrink;
      if (const auto x = body::box_affine_point(w1_.transpose(), y, slo, shi)) {
        // Snap back onto the slice; the margin absorbs the rounding.
        const Vector on_slice = *x - w1_ * (w1_.transpose() * *x - y);
        if (body::contains(*dist_.body(), on_slice)) return w2_.transpose() * on_slice;
      }
    }
    throw DomainError("conditional_sample_inactive: could not locate a point of the slice");
  }

  template <class Visit>
  void hit_and_run(const Vector& x0, Vector z, std::size_t count, Rng& rng, Visit& visit) const {
    const Eigen::Index m = inactive_dim();
    const std::size_t thin = static_cast<std::size_t>(std::max<Eigen::Index>(m, 1));
    const std::size_t burn = 50 * thin;
    std::size_t step = 0;
    std::size_t emitted = 0;
    while (emitted < count) {
      const Vector d = rng.normal_vector(m);
      const Vector x = x0 + w2_ * z;
      const auto [tmin, tmax] = body::chord(*dist_.body(), x, w2_ * d);
      if (tmin < tmax) z += rng.uniform(tmin, tmax) * d;
      ++step;
      if (step > burn && (step - burn) % thin == 0) {
        visit(std::as_const(z));
        ++emitted;
      }
    }
  }

  DistributionSpec dist_;
  Matrix w1_;
  Matrix w2_;
  ConditionalMethod method_;
};

}  // namespace asub
