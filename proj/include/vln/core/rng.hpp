#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

#include "vln/core/common.hpp"

namespace vln {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline uint64_t hash_mix(uint64_t a, uint64_t b) {
  return splitmix64(a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2)));
}

// Small deterministic generator. Streams are derived by hashing ids, so
// parallel workers draw identical values no matter how work is scheduled.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(splitmix64(seed ^ 0xD1B54A32D192ED03ULL)) {}

  static Rng derive(uint64_t seed, std::initializer_list<uint64_t> ids) {
    uint64_t s = seed;
    for (uint64_t id : ids) s = hash_mix(s, id);
    return Rng(s);
  }

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return splitmix64(state_);
  }

  // uniform in [0, 1)
  real uniform() { return (next_u64() >> 11) * (1.0 / 9007199254740992.0); }
  real uniform(real lo, real hi) { return lo + (hi - lo) * uniform(); }
  // uniform integer in [0, n)
  int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<uint64_t>(n)); }

  real normal() {
    // Box-Muller; discards the second variate to keep the stream simple.
    real u1 = uniform();
    real u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

 private:
  uint64_t state_;
};

inline uint64_t fnv1a(const char* s) {
  uint64_t h = 1469598103934665603ULL;
  while (*s) {
    h ^= static_cast<unsigned char>(*s++);
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace vln
