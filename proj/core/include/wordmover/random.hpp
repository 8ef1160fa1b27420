#pragma once

#include <cstdint>

namespace wordmover {

/// SplitMix64 output finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based stream: the k-th output is mix64(key + k * golden), so any
/// (seed, index) substream is reproducible without generating the others.
/// The key of substream `index` under `seed` is
///   mix64(seed ^ mix64(index + golden)).
class SubstreamRng {
 public:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

  SubstreamRng(std::uint64_t seed, std::uint64_t index)
      : state_(mix64(seed ^ mix64(index + kGolden))) {}

  std::uint64_t next() {
    state_ += kGolden;
    return mix64(state_);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform on [lo, hi]; exactly lo when lo == hi.
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer on {lo, ..., hi}, unbiased by rejection.
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi) {
    const std::uint64_t span = hi - lo + 1;
    if (span == 0) return next();
    const std::uint64_t threshold = (0 - span) % span;
    for (;;) {
      const std::uint64_t x = next();
      if (x >= threshold) return lo + x % span;
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace wordmover
