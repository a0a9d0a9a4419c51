#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "peel/hash.hpp"
#include "peel/pe.hpp"

using namespace peel;

namespace {

// Two-section PE32 fixture assembled field by field. The layout arithmetic
// is cross-checked by scripts/pe_layout_check.py, which constructs the same
// image independently and prints its digest.
Bytes two_section_fixture() {
  const uint32_t lfanew = 64;
  const uint16_t opt_size = 224;
  Bytes text(4096, 0x41), data(4096, 0x42);

  Bytes img(lfanew, 0);
  img[0] = 'M';
  img[1] = 'Z';
  wr_u32(img, 0x3C, lfanew);

  put_bytes(img, as_view(std::string("PE", 2)));
  img.push_back(0);
  img.push_back(0);
  put_u16(img, 0x014C);
  put_u16(img, 2);       // sections
  put_u32(img, 0);
  put_u32(img, 0);
  put_u32(img, 0);
  put_u16(img, opt_size);
  put_u16(img, 0x0102);

  Bytes opt(opt_size, 0);
  wr_u16(opt, 0, 0x010B);
  wr_u32(opt, 16, 0x1020);       // AddressOfEntryPoint
  wr_u32(opt, 28, 0x00400000);   // ImageBase
  wr_u32(opt, 32, 4096);
  wr_u32(opt, 36, 512);
  wr_u32(opt, 56, 3 * 4096);
  wr_u32(opt, 60, 512);
  wr_u16(opt, 68, 2);
  wr_u32(opt, 92, 16);
  put_bytes(img, opt);

  auto section = [&](const char* name, uint32_t vsize, uint32_t va, uint32_t rsize,
                     uint32_t roff, uint32_t chars) {
    Bytes e(40, 0);
    for (size_t i = 0; name[i] != 0 && i < 8; ++i) e[i] = static_cast<uint8_t>(name[i]);
    wr_u32(e, 8, vsize);
    wr_u32(e, 12, va);
    wr_u32(e, 16, rsize);
    wr_u32(e, 20, roff);
    wr_u32(e, 36, chars);
    put_bytes(img, e);
  };
  section(".text", 4096, 0x1000, 4096, 512, 0x60000020);
  section(".data", 4096, 0x2000, 4096, 512 + 4096, 0xC0000040);

  img.resize(512, 0);
  put_bytes(img, text);
  put_bytes(img, data);
  return img;
}

}  // namespace

TEST_CASE("parse_pe reads the two-section fixture exactly as written") {
  Bytes img = two_section_fixture();
  // digest frozen from the independent layout script
  REQUIRE(sha256_hex(img) ==
          "0950682bb93ceb2cec796d507b819f40a67bdb3e5726bc6c57d74a97405558fd");

  auto parsed = parse_pe(img);
  REQUIRE(parsed.ok());
  const PeImage& pe = parsed.value();
  CHECK(pe.entry_point_rva == 0x1020);
  CHECK(pe.image_base == 0x00400000);
  CHECK(pe.total_file_size == img.size());
  REQUIRE(pe.sections.size() == 2);
  CHECK(pe.sections[0].name == ".text");
  CHECK(pe.sections[0].raw_offset == 512);
  CHECK(pe.sections[0].raw_size == 4096);
  CHECK(pe.sections[1].name == ".data");
  CHECK(pe.sections[1].raw_offset == 512 + 4096);
  CHECK(pe.raw == img);  // lossless

  // stored entropy matches a recomputation over the raw bytes exactly
  for (size_t i = 0; i < pe.sections.size(); ++i)
    CHECK(pe.sections[i].entropy == entropy_of(pe.section_bytes(i)));
  CHECK(pe.sections[0].entropy == 0.0);  // constant fill
}

TEST_CASE("parse_pe error taxonomy") {
  SECTION("missing MZ magic") {
    Bytes junk = {'X', 'X', 1, 2, 3};
    auto r = parse_pe(junk);
    REQUIRE_FALSE(r.ok());
    CHECK(r.error() == Errc::NotPe);
  }
  SECTION("section data beyond end of file") {
    Bytes img = two_section_fixture();
    img.resize(img.size() - 4096);  // chop the .data raw bytes
    auto r = parse_pe(img);
    REQUIRE_FALSE(r.ok());
    CHECK(r.error() == Errc::Truncated);
  }
  SECTION("overlapping sections") {
    Bytes img = two_section_fixture();
    // section table entry 1 PointerToRawData at 312 + 40 + 20
    wr_u32(img, 312 + 40 + 20, 512 + 2048);  // overlap .text by half a page
    auto r = parse_pe(img);
    REQUIRE_FALSE(r.ok());
    CHECK(r.error() == Errc::Malformed);
  }
  SECTION("PE32+ optional magic is rejected") {
    Bytes img = two_section_fixture();
    wr_u16(img, 64 + 4 + 20, 0x020B);
    auto r = parse_pe(img);
    REQUIRE_FALSE(r.ok());
    CHECK(r.error() == Errc::NotPe);
  }
}

TEST_CASE("build_minimal_pe round-trips dump bytes and the OEP") {
  Bytes dump(3 * 4096);
  for (size_t i = 0; i < dump.size(); ++i) dump[i] = static_cast<uint8_t>(i * 7 + 1);

  SECTION("oep 0") {
    auto pe = build_minimal_pe(dump, 0);
    REQUIRE(pe.ok());
    auto parsed = parse_pe(pe.value());
    REQUIRE(parsed.ok());
    CHECK(parsed->entry_point_rva == 0);
    REQUIRE(parsed->sections.size() == 1);
    CHECK(parsed->sections[0].name == ".dump");
    ByteView body = parsed->section_bytes(0);
    CHECK(Bytes(body.begin(), body.end()) == dump);
  }
  SECTION("oep 4096") {
    auto pe = build_minimal_pe(dump, 4096);
    REQUIRE(pe.ok());
    auto parsed = parse_pe(pe.value());
    REQUIRE(parsed.ok());
    CHECK(parsed->entry_point_rva == 4096);
    ByteView body = parsed->section_bytes(0);
    CHECK(Bytes(body.begin(), body.end()) == dump);
  }
  SECTION("empty dump") {
    auto r = build_minimal_pe(ByteView{}, 0);
    REQUIRE_FALSE(r.ok());
    CHECK(r.error() == Errc::EmptyDump);
  }
  SECTION("oep out of range") {
    auto r = build_minimal_pe(dump, static_cast<uint32_t>(dump.size()));
    REQUIRE_FALSE(r.ok());
    CHECK(r.error() == Errc::OepOutOfRange);
  }
}

TEST_CASE("build/parse round trip holds for random dumps") {
  std::mt19937 rng(99);
  for (int trial = 0; trial < 40; ++trial) {
    const size_t n = 1 + rng() % 20000;
    Bytes dump(n);
    for (auto& b : dump) b = static_cast<uint8_t>(rng());
    const uint32_t oep = static_cast<uint32_t>(rng() % n);
    auto pe = build_minimal_pe(dump, oep);
    REQUIRE(pe.ok());
    auto parsed = parse_pe(pe.value());
    REQUIRE(parsed.ok());
    CHECK(parsed->entry_point_rva == oep);
    ByteView body = parsed->section_bytes(0);
    CHECK(std::equal(body.begin(), body.end(), dump.begin(), dump.end()));
  }
}

TEST_CASE("parse_pe survives random mutations of a valid image") {
  Bytes base = two_section_fixture();
  std::mt19937 rng(2024);
  for (int trial = 0; trial < 500; ++trial) {
    Bytes img = base;
    const int flips = 1 + rng() % 8;
    for (int i = 0; i < flips; ++i) img[rng() % img.size()] = static_cast<uint8_t>(rng());
    auto r = parse_pe(img);  // must return an error or a valid image, never crash
    if (r.ok()) {
      for (const auto& s : r->sections)
        CHECK(static_cast<uint64_t>(s.raw_offset) + s.raw_size <= img.size());
    }
  }
  for (int trial = 0; trial < 200; ++trial) {
    Bytes img = base;
    img.resize(rng() % img.size());  // arbitrary truncation
    (void)parse_pe(img);
  }
}
