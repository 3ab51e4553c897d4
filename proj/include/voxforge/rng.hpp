#pragma once

#include <cmath>
#include <cstdint>

namespace voxforge {

// Counter-based deterministic RNG. Every draw is a pure function of
// (seed, stream indices), so parallel evaluation order cannot change results.
namespace rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix(std::uint64_t seed, std::uint64_t a) {
  return splitmix64(seed ^ splitmix64(a));
}
inline std::uint64_t mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return splitmix64(mix(seed, a) ^ splitmix64(b + 0x9e3779b97f4a7c15ULL));
}
inline std::uint64_t mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                         std::uint64_t c) {
  return splitmix64(mix(seed, a, b) ^ splitmix64(c + 0x2545f4914f6cdd1dULL));
}

// Uniform in [0, 1), 53-bit resolution.
inline double to_unit(std::uint64_t h) {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double uniform(std::uint64_t seed, std::uint64_t a) {
  return to_unit(mix(seed, a));
}
inline double uniform(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return to_unit(mix(seed, a, b));
}
inline double uniform(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                      std::uint64_t c) {
  return to_unit(mix(seed, a, b, c));
}

// Standard normal via Box-Muller on two counter substreams.
inline double gaussian(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                       std::uint64_t c) {
  double u1 = to_unit(mix(seed, a, b, 2 * c));
  double u2 = to_unit(mix(seed, a, b, 2 * c + 1));
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace rng

// Small sequential generator for places that want a stream (scene layout,
// dataset shuffles). Deterministic, seedable, value-semantic.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(rng::splitmix64(seed ^ 0xabcdef1234567890ULL)) {}

  std::uint64_t next_u64() {
    state_ = rng::splitmix64(state_);
    return state_;
  }
  double uniform() { return rng::to_unit(next_u64()); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // [lo, hi] inclusive
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(uniform() * static_cast<double>(hi - lo + 1));
  }
  double gaussian() {
    double u1 = uniform(), u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }
  // Poisson via inverse-CDF walk; fine for small lambda.
  int poisson(double lambda) {
    double L = std::exp(-lambda), p = 1.0;
    int k = 0;
    do {
      ++k;
      p *= uniform();
    } while (p > L);
    return k - 1;
  }

 private:
  std::uint64_t state_;
};

}  // namespace voxforge
