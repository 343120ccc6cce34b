#ifndef TREELM_RNG_HPP
#define TREELM_RNG_HPP

#include <cstdint>
#include <cstring>
#include <string>

#include "treelm/common.hpp"

namespace treelm {

// Deterministic generator with named sub-streams so each component
// (init, shuffle, sampling, per-sentence inference) can be reproduced in
// isolation from one top-level seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

  std::uint64_t next_u64() {
    // splitmix64; stable across platforms, unlike std distributions.
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  real uniform() { return static_cast<real>(next_u64() >> 11) * 0x1.0p-53; }

  real uniform(real lo, real hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  std::uint64_t uniform_int(std::uint64_t n) {
    // rejection sampling to avoid modulo bias
    std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  bool bernoulli(real p) { return uniform() < p; }

  // Derived stream: independent of this stream's future output.
  Rng child(std::uint64_t tag) const {
    Rng r(state_ ^ (0xd1b54a32d192ed03ULL * (tag + 1)));
    r.next_u64();
    return r;
  }

  Rng child(const std::string& name) const { return child(hash_name(name)); }

  static std::uint64_t hash_name(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

 private:
  std::uint64_t state_;
};

}  // namespace treelm

#endif  // TREELM_RNG_HPP
