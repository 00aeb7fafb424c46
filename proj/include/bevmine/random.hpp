#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace bevmine {

/// Deterministic random source. std::mt19937_64's raw output sequence is
/// pinned by the standard, but the library distributions are not, so the
/// transforms live here. Same seed, same stream, on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }

  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Lemire-style rejection keeps the mapping unbiased.
    std::uint64_t x = engine_();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      std::uint64_t t = (0 - n) % n;
      while (lo < t) {
        x = engine_();
        m = static_cast<__uint128_t>(x) * n;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Standard normal via Box-Muller (polar form avoided to keep the
  /// consumption of engine outputs fixed per call).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Laplace(0, scale) via inverse CDF. Always consumes at least one
  /// engine output, so scale 0 (exactly zero result) keeps the stream
  /// aligned with nonzero-scale runs.
  double laplace(double scale) {
    double u = uniform() - 0.5;
    while (u <= -0.5) u = uniform() - 0.5;  // u = -0.5 would hit log1p(-1)
    double s = u < 0.0 ? -1.0 : 1.0;
    return -scale * s * std::log1p(-2.0 * std::fabs(u));
  }

  /// Derive an independent stream, e.g. one per object or scene.
  Rng fork(std::uint64_t salt) {
    return Rng(engine_() ^ (salt * 0x9e3779b97f4a7c15ULL));
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace bevmine
