#pragma once

// Portable seeded randomness.
//
// Every random quantity is drawn from its own sub-stream: a std::mt19937_64 engine
// (whose output sequence is fixed by the C++ standard) seeded with
//
//     splitmix64(seed ^ splitmix64(stream ^ splitmix64(index)))
//
// where `stream` names the quantity (see Substream) and `index` is e.g. the slice
// number. SplitMix64 is the usual 64-bit seed mixer.
// Uniform doubles use the top 53 bits; Gaussians use the Box-Muller transform, so the
// values do not depend on the standard library's distribution implementations.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace toucan {

enum class Substream : std::uint64_t {
  LeftFactor = 1,
  RightFactor = 2,
  CpFactorA = 3,
  CpFactorB = 4,
  CpFactorC = 5,
  Mask = 10,
  Fsm = 20,
  StreamWeights = 21,
  InitFsm = 30,
  Shuffle = 40,
  Auxiliary = 50,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
  return splitmix64(seed ^ splitmix64(stream ^ splitmix64(index)));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, Substream stream, std::uint64_t index = 0)
      : engine_(derive_seed(seed, static_cast<std::uint64_t>(stream), index)) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace toucan
