#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "peel/bytes.hpp"
#include "peel/entropy.hpp"
#include "peel/result.hpp"

namespace peel {

// PE32 layout constants. Only the 32-bit layout is accepted; PE32+ images
// are rejected as NotPe.
inline constexpr size_t kDosHeaderSize = 64;
inline constexpr size_t kLfanewOffset = 0x3C;
inline constexpr uint16_t kMachineI386 = 0x014C;
inline constexpr uint16_t kOptionalMagicPe32 = 0x010B;
inline constexpr size_t kCoffHeaderSize = 20;
inline constexpr size_t kSectionEntrySize = 40;
inline constexpr size_t kOptionalHeaderSize = 224;  // 96 + 16 data directories
inline constexpr uint32_t kFileAlignment = 512;
inline constexpr uint32_t kSectionAlignment = 4096;
inline constexpr uint32_t kDefaultImageBase = 0x00400000;
inline constexpr uint16_t kMaxSections = 96;

inline uint64_t align_up(uint64_t v, uint64_t a) { return (v + a - 1) / a * a; }

struct SectionInfo {
  std::string name;       // trimmed 8-byte label
  uint32_t raw_offset = 0;
  uint32_t raw_size = 0;
  uint32_t virtual_rva = 0;
  uint32_t virtual_size = 0;
  uint32_t characteristics = 0;
  double entropy = 0.0;    // bits/byte over the raw bytes; 0 for empty sections
};

struct PeImage {
  uint64_t image_base = 0;
  uint32_t entry_point_rva = 0;
  std::vector<SectionInfo> sections;
  uint64_t total_file_size = 0;
  Bytes raw;

  ByteView section_bytes(size_t i) const {
    const SectionInfo& s = sections[i];
    return ByteView(raw.data() + s.raw_offset, s.raw_size);
  }

  const SectionInfo* find_section(std::string_view name) const {
    for (const auto& s : sections)
      if (s.name == name) return &s;
    return nullptr;
  }
};

// Parses a PE32 image. Every read is bounds-checked against the input;
// the raw bytes are retained on the returned image, so parsing is lossless.
//   NotPe      missing MZ/PE magic, wrong machine, or non-PE32 optional header
//   Truncated  header, section table, or section data beyond end of file
//   Malformed  inconsistent headers or overlapping sections
inline Result<PeImage> parse_pe(ByteView data) {
  const size_t n = data.size();
  if (n < 2 || data[0] != 'M' || data[1] != 'Z') return Errc::NotPe;
  if (n < kDosHeaderSize) return {Errc::Truncated, "DOS header beyond end of file"};

  const uint32_t lfanew = rd_u32(data, kLfanewOffset);
  if (static_cast<uint64_t>(lfanew) + 4 > n) return {Errc::Truncated, "e_lfanew beyond end of file"};
  if (!(data[lfanew] == 'P' && data[lfanew + 1] == 'E' && data[lfanew + 2] == 0 &&
        data[lfanew + 3] == 0))
    return {Errc::NotPe, "missing PE signature"};

  const uint64_t coff_off = static_cast<uint64_t>(lfanew) + 4;
  if (coff_off + kCoffHeaderSize > n) return {Errc::Truncated, "COFF header beyond end of file"};
  const uint16_t machine = rd_u16(data, coff_off);
  if (machine != kMachineI386) return {Errc::NotPe, "machine is not i386"};
  const uint16_t nsections = rd_u16(data, coff_off + 2);
  const uint16_t opt_size = rd_u16(data, coff_off + 16);
  if (nsections > kMaxSections) return {Errc::Malformed, "section count exceeds limit"};
  if (opt_size < 96) return {Errc::Malformed, "optional header too small for PE32"};

  const uint64_t opt_off = coff_off + kCoffHeaderSize;
  if (opt_off + opt_size > n) return {Errc::Truncated, "optional header beyond end of file"};
  const uint16_t opt_magic = rd_u16(data, opt_off);
  if (opt_magic != kOptionalMagicPe32) return {Errc::NotPe, "optional header magic is not PE32"};

  PeImage img;
  img.entry_point_rva = rd_u32(data, opt_off + 16);
  img.image_base = rd_u32(data, opt_off + 28);
  img.total_file_size = n;

  const uint64_t table_off = opt_off + opt_size;
  if (table_off + static_cast<uint64_t>(nsections) * kSectionEntrySize > n)
    return {Errc::Truncated, "section table beyond end of file"};

  img.sections.reserve(nsections);
  for (uint16_t i = 0; i < nsections; ++i) {
    const uint64_t e = table_off + static_cast<uint64_t>(i) * kSectionEntrySize;
    SectionInfo s;
    for (size_t c = 0; c < 8 && data[e + c] != 0; ++c)
      s.name.push_back(static_cast<char>(data[e + c]));
    s.virtual_size = rd_u32(data, e + 8);
    s.virtual_rva = rd_u32(data, e + 12);
    s.raw_size = rd_u32(data, e + 16);
    s.raw_offset = rd_u32(data, e + 20);
    s.characteristics = rd_u32(data, e + 36);
    if (s.raw_size > 0) {
      const uint64_t end = static_cast<uint64_t>(s.raw_offset) + s.raw_size;
      if (end > n) return {Errc::Truncated, "section raw data beyond end of file"};
    }
    img.sections.push_back(std::move(s));
  }

  // Non-empty raw ranges must not overlap.
  std::vector<std::pair<uint64_t, uint64_t>> ranges;
  for (const auto& s : img.sections)
    if (s.raw_size > 0)
      ranges.emplace_back(s.raw_offset, static_cast<uint64_t>(s.raw_offset) + s.raw_size);
  std::sort(ranges.begin(), ranges.end());
  for (size_t i = 1; i < ranges.size(); ++i)
    if (ranges[i].first < ranges[i - 1].second)
      return {Errc::Malformed, "overlapping section raw ranges"};

  img.raw.assign(data.begin(), data.end());
  for (size_t i = 0; i < img.sections.size(); ++i)
    img.sections[i].entropy = entropy_of(img.section_bytes(i));
  return img;
}

struct SectionSpec {
  std::string name;
  uint32_t virtual_rva = 0;
  uint32_t virtual_size = 0;
  uint32_t characteristics = 0;
  Bytes data;
};

// Serializes a PE32 image: DOS header, PE signature, COFF header, 224-byte
// optional header, section table, then section raw data back to back
// starting at the first file-alignment boundary.
inline Bytes write_pe32(uint32_t entry_point_rva, uint32_t image_base,
                        const std::vector<SectionSpec>& sections) {
  const uint32_t lfanew = kDosHeaderSize;
  const size_t table_off = lfanew + 4 + kCoffHeaderSize + kOptionalHeaderSize;
  const size_t headers_end = table_off + sections.size() * kSectionEntrySize;
  const uint32_t headers_size =
      static_cast<uint32_t>(align_up(headers_end, kFileAlignment));

  Bytes out(kDosHeaderSize, 0);
  out[0] = 'M';
  out[1] = 'Z';
  wr_u32(out, kLfanewOffset, lfanew);

  out.push_back('P');
  out.push_back('E');
  out.push_back(0);
  out.push_back(0);
  put_u16(out, kMachineI386);
  put_u16(out, static_cast<uint16_t>(sections.size()));
  put_u32(out, 0);  // TimeDateStamp: fixed for reproducibility
  put_u32(out, 0);  // PointerToSymbolTable
  put_u32(out, 0);  // NumberOfSymbols
  put_u16(out, kOptionalHeaderSize);
  put_u16(out, 0x0102);  // EXECUTABLE_IMAGE | 32BIT_MACHINE

  uint32_t size_of_image = kSectionAlignment;
  for (const auto& s : sections) {
    const uint32_t end = s.virtual_rva + static_cast<uint32_t>(align_up(
                             std::max<uint32_t>(s.virtual_size, 1), kSectionAlignment));
    size_of_image = std::max(size_of_image, end);
  }

  Bytes opt(kOptionalHeaderSize, 0);
  wr_u16(opt, 0, kOptionalMagicPe32);
  wr_u32(opt, 16, entry_point_rva);
  wr_u32(opt, 28, image_base);
  wr_u32(opt, 32, kSectionAlignment);
  wr_u32(opt, 36, kFileAlignment);
  wr_u32(opt, 56, size_of_image);
  wr_u32(opt, 60, headers_size);
  wr_u16(opt, 68, 2);   // subsystem: GUI
  wr_u32(opt, 92, 16);  // NumberOfRvaAndSizes (directories all zero)
  put_bytes(out, opt);

  uint32_t raw_cursor = headers_size;
  for (const auto& s : sections) {
    Bytes entry(kSectionEntrySize, 0);
    for (size_t i = 0; i < 8 && i < s.name.size(); ++i)
      entry[i] = static_cast<uint8_t>(s.name[i]);
    wr_u32(entry, 8, s.virtual_size);
    wr_u32(entry, 12, s.virtual_rva);
    wr_u32(entry, 16, static_cast<uint32_t>(s.data.size()));
    wr_u32(entry, 20, s.data.empty() ? 0 : raw_cursor);
    wr_u32(entry, 36, s.characteristics);
    put_bytes(out, entry);
    raw_cursor += static_cast<uint32_t>(s.data.size());
  }

  out.resize(headers_size, 0);
  for (const auto& s : sections) put_bytes(out, s.data);
  return out;
}

// Wraps a raw memory dump in valid PE32 headers: one ".dump" section whose
// raw bytes are the dump verbatim, entry point set to the recovered OEP.
// No import reconstruction is attempted; the contract is a parseable
// artifact that round-trips the dump bytes and the OEP exactly.
inline Result<Bytes> build_minimal_pe(ByteView dump, uint32_t oep_rva) {
  if (dump.empty()) return Errc::EmptyDump;
  if (oep_rva >= dump.size()) return Errc::OepOutOfRange;
  SectionSpec s;
  s.name = ".dump";
  s.virtual_rva = kSectionAlignment;
  s.virtual_size = static_cast<uint32_t>(dump.size());
  s.characteristics = 0xE0000020;  // CODE | EXECUTE | READ | WRITE
  s.data.assign(dump.begin(), dump.end());
  return write_pe32(oep_rva, kDefaultImageBase, {std::move(s)});
}

}  // namespace peel
