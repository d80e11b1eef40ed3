#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace medboot {

namespace detail {

// SplitMix64 finalizer; bijective avalanche on 64 bits.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// SplitMix64 sequence step, used to expand a key into engine state.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  return mix64(state);
}

}  // namespace detail

/// Hierarchical seed key. `child(i)` derives a decorrelated key, so one
/// master seed fans out into per-task streams whose draws do not depend on
/// scheduling or worker count. Keys are values; copying is cheap.
struct RngKey {
  std::uint64_t v = 0;

  RngKey child(std::uint64_t i) const {
    return RngKey{detail::mix64(v + 0x9e3779b97f4a7c15ull +
                                detail::mix64(i + 0x2545f4914f6cdd1dull))};
  }
};

/// Self-contained counter-free PRNG (xoshiro256++) with the distribution
/// samplers this library needs. All draws are value-deterministic functions
/// of the seeding key, independent of platform library internals.
class Rng {
 public:
  explicit Rng(RngKey key) {
    std::uint64_t s = key.v;
    for (auto& w : state_) w = detail::splitmix64(s);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1).
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in (0, 1); safe under log().
  double next_open01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n); unbiased via rejection. n must be >= 1.
  std::uint64_t next_below(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  /// Standard normal draw (Marsaglia polar, spare cached).
  double next_normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * next_double() - 1.0;
      v = 2.0 * next_double() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  /// Gamma(shape, 1) via Marsaglia-Tsang squeeze.
  double next_gamma(double shape) {
    if (shape < 1.0) {
      const double u = next_open01();
      return next_gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = next_normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = next_open01();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double next_chisq(double df) { return 2.0 * next_gamma(0.5 * df); }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> state_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace medboot
