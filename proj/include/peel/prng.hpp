#pragma once

#include <cstdint>

#include "peel/bytes.hpp"

namespace peel {

// splitmix64: the corpus PRNG. Every deterministic byte stream in the
// synthetic corpus derives from this generator so that corpora are
// reproducible across platforms and standard-library versions.
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed) : state_(seed) {}

  uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Unbiased enough for corpus composition choices; not for statistics.
  uint64_t below(uint64_t bound) { return bound == 0 ? 0 : next() % bound; }

  Bytes bytes(size_t n) {
    Bytes out;
    out.reserve(n + 8);
    while (out.size() < n) {
      uint64_t v = next();
      for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    out.resize(n);
    return out;
  }

 private:
  uint64_t state_;
};

inline Bytes prng_bytes(uint64_t seed, size_t n) { return SplitMix64(seed).bytes(n); }

// Stable seed derivation for per-sample sub-streams.
inline uint64_t derive_seed(uint64_t root, uint64_t lane, uint64_t index) {
  SplitMix64 g(root + 0x9E3779B97F4A7C15ULL * (lane + 1));
  uint64_t s = g.next() ^ (index * 0xD1B54A32D192ED03ULL);
  return SplitMix64(s).next();
}

}  // namespace peel
