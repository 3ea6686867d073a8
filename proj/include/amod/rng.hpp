#pragma once

#include <cstdint>
#include <string_view>

namespace amod {

// SplitMix64. Used everywhere instead of <random> engines/distributions so
// that seeded runs produce identical streams on any platform or stdlib.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Unbiased-enough multiply-shift reduction; n must be > 0.
  uint64_t next_below(uint64_t n) {
    return static_cast<uint64_t>(
        (static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

  // Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double next_range(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  uint64_t state() const { return state_; }

 private:
  uint64_t state_;
};

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Derives an independent child seed from a master seed and a stream tag, so
// every subsystem gets its own stream and policy comparisons can share the
// exact same request sequence.
inline uint64_t derive_seed(uint64_t master, std::string_view tag) {
  Rng mix(master ^ fnv1a64(tag));
  mix.next_u64();
  return mix.next_u64();
}

}  // namespace amod
