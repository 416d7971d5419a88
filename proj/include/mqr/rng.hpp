#pragma once
// Deterministic 64-bit PRNG (splitmix64, Vigna 2015). Every randomized stage
// derives its own stream from (seed, tag) so reseeding one stage never shifts
// another. No platform generators anywhere on seeded paths.

#include <cmath>
#include <cstdint>

namespace mqr {

struct SplitMix64 {
  std::uint64_t state = 0;

  SplitMix64() = default;
  explicit SplitMix64(std::uint64_t seed) : state(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Independent child stream for a named stage.
  static SplitMix64 stream(std::uint64_t seed, std::uint64_t tag) {
    SplitMix64 g(seed ^ (0xD1B54A32D192ED03ull * (tag + 1)));
    g.next();
    return g;
  }

  // Unbiased-enough bounded draw (Lemire multiply-shift).
  std::uint64_t bounded(std::uint64_t range) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * range) >> 64);
  }

  // Uniform in [0,1).
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform in (0,1), safe for log().
  double uniform_open() {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
  }

  double gumbel() { return -std::log(-std::log(uniform_open())); }

  // Standard normal via Box-Muller.
  double normal() {
    const double u1 = uniform_open();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }
};

}  // namespace mqr
