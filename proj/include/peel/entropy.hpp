#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "peel/bytes.hpp"
#include "peel/result.hpp"

namespace peel {

// Shannon entropy in bits per byte over the 256-bin histogram.
// Summation runs in fixed bin order, so permutations of the input produce
// bit-identical results.
inline double entropy_of(ByteView data) {
  if (data.empty()) return 0.0;
  std::array<uint64_t, 256> hist{};
  for (uint8_t b : data) ++hist[b];
  const double n = static_cast<double>(data.size());
  double h = 0.0;
  for (uint64_t c : hist) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log2(p);
  }
  return h < 0.0 ? 0.0 : h;
}

inline Result<double> shannon_entropy(ByteView data) {
  if (data.empty()) return Errc::EmptyInput;
  return entropy_of(data);
}

}  // namespace peel
