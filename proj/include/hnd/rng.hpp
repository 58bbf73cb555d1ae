#pragma once

#include <cmath>
#include <cstdint>
#include <iterator>
#include <numbers>
#include <utility>

namespace hnd {

/// SplitMix64: a counter-based generator. The state is a 64-bit counter that
/// advances by the golden-ratio increment 0x9E3779B97F4A7C15 per draw; each
/// output is the finalizer mix of the counter. Every stream of draws is thus
/// a pure function of the seed and is trivial to port.
///
/// Derived quantities:
///   uniform()      (x >> 11) * 2^-53, in [0, 1)
///   below(k)       rejection sampling on the top of the 64-bit range
///   normal()       Box-Muller, one fresh pair of uniforms per call (cosine
///                  branch only, so call count equals draw count / 2)
class SplitMix64 {
 public:
  static constexpr std::uint64_t kIncrement = 0x9E3779B97F4A7C15ULL;

  explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t next() noexcept {
    state_ += kIncrement;
    return mix(state_);
  }

  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound) noexcept {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x = next();
    while (x >= limit) x = next();
    return x % bound;
  }

  double normal() noexcept {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  /// Fisher-Yates, descending index, j = below(i + 1).
  template <typename RandomIt>
  void shuffle(RandomIt first, RandomIt last) noexcept {
    const auto n = static_cast<std::uint64_t>(std::distance(first, last));
    for (std::uint64_t i = n; i > 1; --i) {
      const std::uint64_t j = below(i);
      using std::swap;
      swap(first[i - 1], first[j]);
    }
  }

  std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
};

/// Independent sub-seed for a named purpose. Keeps per-operation streams
/// (splits, dropout, initialization, noise) decorrelated under one base seed.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return SplitMix64::mix(seed ^ SplitMix64::mix(stream + SplitMix64::kIncrement));
}

}  // namespace hnd
