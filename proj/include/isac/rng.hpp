// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>

namespace isac {

// SplitMix64 finalizer; used only to derive independent seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// @brief Seed split rule: child = splitmix(splitmix(parent) ^ (key + 1)).
/// Chains compose, so derive_seed(derive_seed(master, trial), stream) names
/// the RNG stream `stream` of trial `trial`.
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t key) {
  return splitmix64(splitmix64(parent) ^ (key + 1));
}

// Stream keys inside one trial.
namespace stream {
inline constexpr std::uint64_t tx_symbols = 0x100;
inline constexpr std::uint64_t nlos_noise = 0x200;
inline constexpr std::uint64_t los_noise = 0x300;
}  // namespace stream

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::mt19937_64& engine() { return engine_; }
  std::uint64_t bits() { return engine_(); }

  // Circular complex Gaussian with E|z|^2 = variance.
  std::complex<double> complex_normal(double variance) {
    const double s = std::sqrt(variance / 2.0);
    const double re = normal_(engine_);
    const double im = normal_(engine_);
    return {s * re, s * im};
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace isac
