#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "dcjac/types.hpp"

namespace dcjac {

// Seeded generator whose output depends only on the seed: uniforms come
// straight from the engine bits, so runs are reproducible across standard
// library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Independent substream `index` derived from `seed` (splitmix64 finalizer).
  static Rng substream(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return Rng(z ^ (z >> 31));
  }

  // Uniform in [0, 1).
  double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer uniform in [lo, hi].
  long integer(long lo, long hi) { return lo + long(engine_() % std::uint64_t(hi - lo + 1)); }

  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform in the ball of radius r centered at the origin.
  Vector in_ball(Eigen::Index n, double r) {
    Vector v(n);
    double norm = 0.0;
    while (norm == 0.0) {
      for (Eigen::Index l = 0; l < n; ++l) v[l] = normal();
      norm = v.norm();
    }
    return v * (r * std::pow(uniform(), 1.0 / double(n)) / norm);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace dcjac
