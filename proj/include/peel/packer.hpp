#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "peel/bytes.hpp"
#include "peel/result.hpp"

namespace peel {

// Synthetic packer families. Each family is a per-byte reversible
// transform driven by a rolling key; the key recurrence k' = 5k + 1
// (mod 256) has full period, so every layer touches every byte value.
enum class PackTransform : uint16_t {
  XorRolling = 1,
  AddRolling = 2,
  XorNibbleSwap = 3,
};

struct PackerFamily {
  uint16_t id = 0;
  PackTransform transform = PackTransform::XorRolling;
  std::array<uint8_t, 4> signature{};  // unique magic placed in the stub
};

inline const std::vector<PackerFamily>& packer_families() {
  static const std::vector<PackerFamily> families = {
      {1, PackTransform::XorRolling, {'X', 'O', 'R', '1'}},
      {2, PackTransform::AddRolling, {'A', 'D', 'D', '2'}},
      {3, PackTransform::XorNibbleSwap, {'N', 'S', 'W', '3'}},
  };
  return families;
}

inline const PackerFamily* find_family(uint16_t id) {
  for (const auto& f : packer_families())
    if (f.id == id) return &f;
  return nullptr;
}

class RollingKey {
 public:
  explicit RollingKey(uint32_t seed) : k_(static_cast<uint8_t>(seed % 256)) {}
  uint8_t next() {
    uint8_t cur = k_;
    k_ = static_cast<uint8_t>(5 * k_ + 1);
    return cur;
  }

 private:
  uint8_t k_;
};

inline uint8_t nibble_swap(uint8_t v) {
  return static_cast<uint8_t>((v << 4) | (v >> 4));
}

// One encoding pass. The key stream restarts at the seed for every layer.
inline Bytes apply_layer(ByteView in, PackTransform tf, uint32_t seed) {
  Bytes out;
  out.reserve(in.size());
  RollingKey key(seed);
  for (uint8_t b : in) {
    const uint8_t k = key.next();
    switch (tf) {
      case PackTransform::XorRolling: out.push_back(b ^ k); break;
      case PackTransform::AddRolling: out.push_back(static_cast<uint8_t>(b + k)); break;
      case PackTransform::XorNibbleSwap: out.push_back(nibble_swap(b ^ k)); break;
    }
  }
  return out;
}

inline Bytes invert_layer(ByteView in, PackTransform tf, uint32_t seed) {
  Bytes out;
  out.reserve(in.size());
  RollingKey key(seed);
  for (uint8_t b : in) {
    const uint8_t k = key.next();
    switch (tf) {
      case PackTransform::XorRolling: out.push_back(b ^ k); break;
      case PackTransform::AddRolling: out.push_back(static_cast<uint8_t>(b - k)); break;
      case PackTransform::XorNibbleSwap: out.push_back(nibble_swap(b) ^ k); break;
    }
  }
  return out;
}

inline Bytes apply_layers(ByteView in, PackTransform tf, unsigned layers, uint32_t seed) {
  Bytes cur(in.begin(), in.end());
  for (unsigned i = 0; i < layers; ++i) cur = apply_layer(cur, tf, seed);
  return cur;
}

inline Bytes invert_layers(ByteView in, PackTransform tf, unsigned layers, uint32_t seed) {
  Bytes cur(in.begin(), in.end());
  for (unsigned i = 0; i < layers; ++i) cur = invert_layer(cur, tf, seed);
  return cur;
}

// Stub section layout (little-endian):
//   0  "SPK1"
//   4  family id (u16)
//   6  layer count (u8)
//   7  key seed (u32)
//  11  original payload length (u32)
//  15  OEP rva within the payload (u32)
//  19  family signature (4 bytes)
// The stub is plain data, not executable code; the sandbox emulator
// interprets its semantics.
inline constexpr std::array<uint8_t, 4> kStubMagic = {'S', 'P', 'K', '1'};
inline constexpr size_t kStubHeaderSize = 23;
inline constexpr size_t kStubSectionSize = 512;
inline constexpr unsigned kMaxLayers = 8;

struct StubHeader {
  uint16_t family = 0;
  uint8_t layers = 0;
  uint32_t key_seed = 0;
  uint32_t payload_len = 0;
  uint32_t oep_rva = 0;
};

inline Bytes encode_stub(const StubHeader& h, const std::array<uint8_t, 4>& signature) {
  Bytes out;
  out.reserve(kStubSectionSize);
  put_bytes(out, ByteView(kStubMagic.data(), kStubMagic.size()));
  put_u16(out, h.family);
  out.push_back(h.layers);
  put_u32(out, h.key_seed);
  put_u32(out, h.payload_len);
  put_u32(out, h.oep_rva);
  put_bytes(out, ByteView(signature.data(), signature.size()));
  out.resize(kStubSectionSize, 0);
  return out;
}

inline Result<StubHeader> decode_stub(ByteView stub) {
  if (stub.size() < kStubHeaderSize) return {Errc::StubInconsistent, "stub too short"};
  for (size_t i = 0; i < 4; ++i)
    if (stub[i] != kStubMagic[i]) return {Errc::StubInconsistent, "missing stub magic"};
  StubHeader h;
  h.family = rd_u16(stub, 4);
  h.layers = stub[6];
  h.key_seed = rd_u32(stub, 7);
  h.payload_len = rd_u32(stub, 11);
  h.oep_rva = rd_u32(stub, 15);
  return h;
}

// Scans a byte range for any registered family signature.
inline std::optional<uint16_t> find_family_signature(ByteView range) {
  for (const auto& f : packer_families()) {
    if (range.size() < f.signature.size()) continue;
    for (size_t i = 0; i + f.signature.size() <= range.size(); ++i) {
      bool hit = true;
      for (size_t j = 0; j < f.signature.size(); ++j)
        if (range[i + j] != f.signature[j]) { hit = false; break; }
      if (hit) return f.id;
    }
  }
  return std::nullopt;
}

}  // namespace peel
