#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "peel/bytes.hpp"
#include "peel/result.hpp"

namespace peel {

// Minimal POSIX ustar subset: regular files with names up to 100 bytes,
// fixed ownership, deterministic output (no timestamps unless given).

inline constexpr size_t kTarBlock = 512;

struct TarEntry {
  std::string name;
  Bytes data;
  uint32_t mode = 0644;
  uint64_t mtime = 0;
};

namespace tar_detail {

inline void put_octal(Bytes& header, size_t off, size_t width, uint64_t value) {
  // width includes the trailing NUL
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*llo", static_cast<int>(width - 1),
                static_cast<unsigned long long>(value));
  for (size_t i = 0; i < width - 1; ++i) header[off + i] = static_cast<uint8_t>(buf[i]);
  header[off + width - 1] = 0;
}

inline uint64_t read_octal(ByteView header, size_t off, size_t width) {
  uint64_t v = 0;
  for (size_t i = 0; i < width; ++i) {
    const uint8_t c = header[off + i];
    if (c == 0 || c == ' ') break;
    if (c < '0' || c > '7') break;
    v = v * 8 + (c - '0');
  }
  return v;
}

}  // namespace tar_detail

class TarWriter {
 public:
  void add(const TarEntry& entry) {
    Bytes header(kTarBlock, 0);
    const std::string& name = entry.name;
    for (size_t i = 0; i < name.size() && i < 100; ++i)
      header[i] = static_cast<uint8_t>(name[i]);
    tar_detail::put_octal(header, 100, 8, entry.mode);
    tar_detail::put_octal(header, 108, 8, 0);  // uid
    tar_detail::put_octal(header, 116, 8, 0);  // gid
    tar_detail::put_octal(header, 124, 12, entry.data.size());
    tar_detail::put_octal(header, 136, 12, entry.mtime);
    header[156] = '0';  // regular file
    std::memcpy(header.data() + 257, "ustar", 6);
    header[263] = '0';
    header[264] = '0';

    // checksum with the field treated as spaces
    for (size_t i = 148; i < 156; ++i) header[i] = ' ';
    uint64_t sum = 0;
    for (uint8_t b : header) sum += b;
    char buf[16];
    std::snprintf(buf, sizeof buf, "%06llo", static_cast<unsigned long long>(sum));
    std::memcpy(header.data() + 148, buf, 6);
    header[154] = 0;
    header[155] = ' ';

    put_bytes(out_, header);
    put_bytes(out_, entry.data);
    const size_t pad = (kTarBlock - entry.data.size() % kTarBlock) % kTarBlock;
    out_.insert(out_.end(), pad, 0);
  }

  void add(const std::string& name, ByteView data, uint32_t mode = 0644, uint64_t mtime = 0) {
    add(TarEntry{name, Bytes(data.begin(), data.end()), mode, mtime});
  }

  Bytes finish() {
    Bytes out = std::move(out_);
    out.insert(out.end(), 2 * kTarBlock, 0);  // end-of-archive marker
    out_.clear();
    return out;
  }

 private:
  Bytes out_;
};

inline Result<std::vector<TarEntry>> tar_read(ByteView archive) {
  std::vector<TarEntry> entries;
  size_t off = 0;
  while (off + kTarBlock <= archive.size()) {
    ByteView header(archive.data() + off, kTarBlock);
    bool all_zero = true;
    for (uint8_t b : header)
      if (b != 0) { all_zero = false; break; }
    if (all_zero) break;

    if (std::memcmp(header.data() + 257, "ustar", 5) != 0)
      return Result<std::vector<TarEntry>>(Errc::Malformed, "missing ustar magic");

    uint64_t expect = tar_detail::read_octal(header, 148, 8);
    uint64_t sum = 0;
    for (size_t i = 0; i < kTarBlock; ++i)
      sum += (i >= 148 && i < 156) ? ' ' : header[i];
    if (sum != expect)
      return Result<std::vector<TarEntry>>(Errc::Malformed, "bad tar header checksum");

    TarEntry e;
    for (size_t i = 0; i < 100 && header[i] != 0; ++i) e.name.push_back(header[i]);
    e.mode = static_cast<uint32_t>(tar_detail::read_octal(header, 100, 8));
    const uint64_t size = tar_detail::read_octal(header, 124, 12);
    e.mtime = tar_detail::read_octal(header, 136, 12);
    const uint8_t type = header[156];

    off += kTarBlock;
    if (off + size > archive.size())
      return Result<std::vector<TarEntry>>(Errc::Truncated, "tar data beyond archive");
    if (type == '0' || type == 0) {
      e.data.assign(archive.begin() + off, archive.begin() + off + size);
      entries.push_back(std::move(e));
    }
    off += (size + kTarBlock - 1) / kTarBlock * kTarBlock;
  }
  return entries;
}

}  // namespace peel
