#pragma once

#include <cmath>
#include <cstdint>

namespace regflow {

// Deterministic splitmix64 stream. Self-contained so that seeded runs are
// reproducible independent of the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller. Consumes exactly two uniforms per draw
  // (no cached second value) so stream positions stay easy to reason about.
  double normal() {
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  // Derives an independent substream seed; used to give workers and splits
  // disjoint streams regardless of evaluation order.
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
    Rng r(seed + 0x9E3779B97F4A7C15ULL * (stream + 1));
    return r.next_u64();
  }

 private:
  std::uint64_t state_;
};

}  // namespace regflow
