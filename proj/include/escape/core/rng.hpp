#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>

namespace escape {

/// Counter-based generator: draw k of stream (seed) is a pure function of
/// (seed, k), so the state is just the pair and can be saved or forked freely.
class CounterRng {
 public:
  constexpr explicit CounterRng(std::uint64_t seed = 0, std::uint64_t position = 0)
      : seed_(seed), key_(mix(seed ^ 0x6a09e667f3bcc909ULL)), position_(position) {}

  constexpr std::uint64_t seed() const { return seed_; }
  constexpr std::uint64_t position() const { return position_; }

  constexpr std::uint64_t next_u64() {
    const std::uint64_t counter = position_++;
    return mix(key_ + (counter + 1) * 0x9e3779b97f4a7c15ULL);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const unsigned __int128 wide = static_cast<unsigned __int128>(next_u64()) * n;
    return static_cast<std::uint64_t>(wide >> 64);
  }

  /// Standard normal via Box-Muller; always consumes two draws.
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Normal(0, stddev) resampled until it lies within two standard deviations.
  double truncated_normal(double stddev) {
    for (;;) {
      const double z = normal();
      if (std::abs(z) <= 2.0) return z * stddev;
    }
  }

  /// Independent stream derived from this generator's seed and a label.
  constexpr CounterRng fork(std::uint64_t stream) const {
    return CounterRng(mix(seed_ * 0xbf58476d1ce4e5b9ULL + stream + 0x94d049bb133111ebULL));
  }

  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t position_;
};

}  // namespace escape
