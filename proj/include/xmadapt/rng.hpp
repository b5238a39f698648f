#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace xmadapt {

// Counter-style SplitMix64 generator. A stream is a pure function of
// (seed, stream), so any consumer can be reproduced in isolation: sample i of
// a dataset, the weight init of one module, the shuffle of one epoch. Both
// inputs pass through the avalanche mixer, so nearby ids give unrelated
// streams. No libc or <random> engines anywhere: sequences are identical
// across platforms and standard libraries.
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed, uint64_t stream = 0) {
    state_ = mix(seed + 0x9E3779B97F4A7C15ULL);
    state_ = mix(state_ ^ (stream * 0xBF58476D1CE4E5B9ULL + 0x94D049BB133111EBULL));
  }

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }

  // Uniform double in [0, 1), 53 bits of precision.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller. One deviate per call (the sine partner is
  // discarded) so the draw count is trivial to reason about.
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]; keeps log() finite
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Unbiased integer in [0, n) by rejection against the next power of two.
  uint64_t below(uint64_t n) {
    if (n <= 1) return 0;
    uint64_t mask = ~uint64_t{0} >> __builtin_clzll((n - 1) | 1);
    for (;;) {
      uint64_t v = next_u64() & mask;
      if (v < n) return v;
    }
  }

 private:
  static uint64_t mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  uint64_t state_;
};

// In-place Fisher-Yates shuffle driven by the generator above.
template <typename T>
void shuffle(std::vector<T>& items, SplitMix64& rng) {
  for (size_t i = items.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace xmadapt
