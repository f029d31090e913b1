#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace cpmpc {

/// Seed for all randomized generation. Equal seeds give bit-identical
/// datasets and simulations on every run.
struct RngSeed {
  std::uint64_t value = 0;
};

/// Derives an independent stream seed from a base seed (splitmix64 mixing),
/// so per-trajectory / per-episode streams never share state.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Deterministic random source. The engine (mt19937_64) has standardized
/// output; the distributions below are implemented explicitly because the
/// standard library's distribution objects are implementation-defined.
class Rng {
 public:
  explicit Rng(RngSeed seed) : engine_(seed.value) {}
  Rng(RngSeed seed, std::uint64_t stream) : engine_(derive_seed(seed.value, stream)) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random mantissa bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  /// Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace cpmpc
