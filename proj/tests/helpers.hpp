#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "peel/pe.hpp"
#include "peel/synth.hpp"

namespace testutil {

using peel::Bytes;
using peel::ByteView;

// Independent histogram oracle, reimplemented on purpose.
inline double oracle_entropy(ByteView data) {
  double hist[256] = {};
  for (uint8_t b : data) hist[b] += 1.0;
  double h = 0.0;
  for (double c : hist) {
    if (c > 0.0) {
      double p = c / static_cast<double>(data.size());
      h -= p * std::log2(p);
    }
  }
  return h;
}

// Window plans: 'c' code, 'p' packed-looking, 'd' data, 's' string,
// 'n' null. Seeds advance per window so code/prng windows differ.
inline Bytes windows(const std::string& plan, uint64_t seed = 7000) {
  Bytes out;
  uint64_t s = seed;
  for (char k : plan) {
    switch (k) {
      case 'c': peel::put_bytes(out, peel::code_window(s++)); break;
      case 'p': peel::put_bytes(out, peel::prng_window(s++)); break;
      case 'd': peel::put_bytes(out, peel::data_window()); break;
      case 's': peel::put_bytes(out, peel::text_window()); break;
      case 'n': peel::put_bytes(out, peel::null_window()); break;
      default: break;
    }
  }
  return out;
}

// One-section PE32 around arbitrary body bytes; entry at the section start.
inline Bytes pe_with_body(Bytes body, uint32_t entry_rva = peel::kSectionAlignment) {
  peel::SectionSpec s;
  s.name = ".text";
  s.virtual_rva = peel::kSectionAlignment;
  s.virtual_size = static_cast<uint32_t>(body.size());
  s.characteristics = 0x60000020;
  s.data = std::move(body);
  return peel::write_pe32(entry_rva, peel::kDefaultImageBase, {std::move(s)});
}

}  // namespace testutil
