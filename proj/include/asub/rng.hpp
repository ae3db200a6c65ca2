#pragma once

// Keyed random streams. Every random quantity in the toolkit is drawn from a
// stream whose state is a pure function of (global seed, tag, indices...), so
// results do not depend on evaluation order or thread scheduling.

#include <bit>
#include <cstdint>
#include <limits>
#include <span>
#include <string_view>

#include <Eigen/Dense>
#include <boost/random/normal_distribution.hpp>

namespace asub {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Immutable 64-bit key identifying one random substream.
class StreamKey {
 public:
  constexpr StreamKey() = default;
  constexpr explicit StreamKey(std::uint64_t seed) : value_(detail::splitmix64(seed)) {}

  [[nodiscard]] constexpr StreamKey with(std::uint64_t index) const noexcept {
    StreamKey k;
    k.value_ = detail::splitmix64(value_ ^ detail::splitmix64(index + 0x632be59bd9b4e019ULL));
    return k;
  }
  [[nodiscard]] constexpr StreamKey with(std::string_view tag) const noexcept {
    return with(detail::fnv1a(tag));
  }
  /// Mixes the exact bit pattern of every coordinate.
  [[nodiscard]] StreamKey with_bits(std::span<const double> xs) const noexcept {
    StreamKey k = with(static_cast<std::uint64_t>(xs.size()));
    for (double x : xs) k = k.with(std::bit_cast<std::uint64_t>(x));
    return k;
  }
  [[nodiscard]] StreamKey with_bits(const Eigen::VectorXd& v) const noexcept {
    return with_bits(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
  }

  constexpr std::uint64_t value() const noexcept { return value_; }
  friend constexpr bool operator==(StreamKey, StreamKey) = default;

 private:
  std::uint64_t value_ = 0;
};

/// xoshiro256** seeded from a StreamKey. Satisfies UniformRandomBitGenerator.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(StreamKey key) noexcept {
    std::uint64_t x = key.value();
    for (auto& s : state_) {
      x += 0x9e3779b97f4a7c15ULL;
      s = detail::splitmix64(x);
    }
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = std::rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = std::rotl(state_[3], 45);
    return result;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  double normal() { return normal_(*this); }

  Eigen::VectorXd normal_vector(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

 private:
  std::uint64_t state_[4]{};
  boost::random::normal_distribution<double> normal_;
};

}  // namespace asub
