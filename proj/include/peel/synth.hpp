#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "peel/bytes.hpp"
#include "peel/hash.hpp"
#include "peel/packer.hpp"
#include "peel/pe.hpp"
#include "peel/prng.hpp"
#include "peel/result.hpp"

namespace peel {

// ---------------------------------------------------------------------------
// Window generators. The corpus is assembled from 256-byte windows with
// known region classifications, so every generated sample carries its own
// detector ground truth.

inline constexpr size_t kWindowSize = 256;

// 48 x86-flavoured byte values; uniform draws land window entropy around
// 5.4 bits/byte, inside the code bucket with margin on both sides.
inline constexpr std::array<uint8_t, 48> kCodeAlphabet = {
    0x55, 0x8B, 0xEC, 0x83, 0xC4, 0x90, 0xE8, 0xFF, 0x75, 0x74, 0xC3, 0x6A,
    0x68, 0x8D, 0x45, 0xF4, 0x50, 0x51, 0x52, 0x53, 0x56, 0x57, 0x5D, 0x5E,
    0x5F, 0x5B, 0x59, 0x58, 0x85, 0xC0, 0x33, 0x3B, 0x39, 0x0F, 0x84, 0xEB,
    0x7E, 0x7C, 0x01, 0x03, 0x2B, 0x8A, 0x88, 0x89, 0xA1, 0x04, 0x24, 0x81,
};

// Period 5 on purpose: coprime with the rolling key's low-bit cycle, so a
// transformed data window cannot collapse into a few residue classes.
inline constexpr std::array<uint8_t, 5> kDataPattern = {0x80, 0x07, 0xFE, 0x81, 0x3C};

inline constexpr std::string_view kTextPattern =
    "The quick brown fox jumps over the lazy dog. 0123456789 ";

inline Bytes code_window(uint64_t seed, size_t n = kWindowSize) {
  SplitMix64 g(seed);
  Bytes out(n);
  for (auto& b : out) b = kCodeAlphabet[g.next() % kCodeAlphabet.size()];
  return out;
}

inline Bytes data_window(size_t n = kWindowSize) {
  Bytes out(n);
  for (size_t i = 0; i < n; ++i) out[i] = kDataPattern[i % kDataPattern.size()];
  return out;
}

inline Bytes text_window(size_t n = kWindowSize) {
  Bytes out(n);
  for (size_t i = 0; i < n; ++i)
    out[i] = static_cast<uint8_t>(kTextPattern[i % kTextPattern.size()]);
  return out;
}

inline Bytes null_window(size_t n = kWindowSize) { return Bytes(n, 0); }

inline Bytes prng_window(uint64_t seed, size_t n = kWindowSize) { return prng_bytes(seed, n); }

// ---------------------------------------------------------------------------
// Plain PE synthesis.

enum class PayloadProfile { CodeRich, CodePoor };

inline const char* payload_profile_name(PayloadProfile p) {
  return p == PayloadProfile::CodeRich ? "code_rich" : "code_poor";
}

// Builds a parseable PE32 whose section contents are window-planned:
// CodeRich payloads hold a clear majority of code windows (they pass the
// CodeDB admission ratio once unpacked), CodePoor payloads bury a few code
// windows under high-entropy and data windows (they get rejected).
inline Bytes synth_plain_pe(uint64_t seed, PayloadProfile profile, int min_pages = 2,
                            int max_pages = 6) {
  SplitMix64 g(seed);
  const int pages = min_pages + static_cast<int>(g.below(max_pages - min_pages + 1));
  const size_t windows_per_page = kSectionAlignment / kWindowSize;

  int code_pages;
  if (profile == PayloadProfile::CodeRich) {
    code_pages = std::max(1, (pages * 3 + 2) / 4);  // ~75% of pages are pure code
  } else {
    code_pages = 0;
  }

  Bytes text_data;
  for (size_t w = 0; w < static_cast<size_t>(code_pages) * windows_per_page; ++w)
    put_bytes(text_data, code_window(g.next()));

  Bytes data_data;
  const int data_pages = pages - code_pages;
  for (size_t w = 0; w < static_cast<size_t>(data_pages) * windows_per_page; ++w) {
    if (profile == PayloadProfile::CodeRich) {
      switch (g.below(4)) {
        case 0: put_bytes(data_data, data_window()); break;
        case 1: put_bytes(data_data, text_window()); break;
        case 2: put_bytes(data_data, null_window()); break;
        default: put_bytes(data_data, data_window()); break;
      }
    } else {
      // Mostly opaque high-entropy windows plus a little of everything;
      // a couple of code windows keep the ratio nonzero but hopeless.
      switch (g.below(8)) {
        case 0: put_bytes(data_data, code_window(g.next())); break;
        case 1: put_bytes(data_data, data_window()); break;
        case 2: put_bytes(data_data, text_window()); break;
        default: put_bytes(data_data, prng_window(g.next())); break;
      }
    }
  }

  std::vector<SectionSpec> sections;
  uint32_t rva = kSectionAlignment;
  if (!text_data.empty()) {
    SectionSpec text{".text", rva, static_cast<uint32_t>(text_data.size()), 0x60000020,
                     std::move(text_data)};
    rva += static_cast<uint32_t>(align_up(text.virtual_size, kSectionAlignment));
    sections.push_back(std::move(text));
  }
  if (!data_data.empty()) {
    SectionSpec data{".data", rva, static_cast<uint32_t>(data_data.size()), 0xC0000040,
                     std::move(data_data)};
    sections.push_back(std::move(data));
  }

  const uint32_t entry = sections.empty() ? 0 : sections.front().virtual_rva;
  return write_pe32(entry, kDefaultImageBase, sections);
}

// Concatenated raw section bytes: the unit the packer transforms.
inline Bytes payload_of(const PeImage& image) {
  Bytes out;
  for (size_t i = 0; i < image.sections.size(); ++i) {
    ByteView b = image.section_bytes(i);
    out.insert(out.end(), b.begin(), b.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Packing.

struct PackRecipe {
  uint16_t family = 1;
  uint8_t layers = 1;
  uint32_t key_seed = 0;
  uint32_t oep_rva = 0;

  Status validate() const {
    if (layers > kMaxLayers) return {Errc::BadRecipe, "layer count above 8"};
    if (find_family(family) == nullptr) return {Errc::BadRecipe, "unregistered family"};
    return ok_status();
  }
};

inline constexpr uint32_t kStubRva = kSectionAlignment;       // 0x1000
inline constexpr uint32_t kPayloadRva = 2 * kSectionAlignment;  // 0x2000, page aligned

// Wraps a PE in a two-section synthetic packer image: ".stub" carries the
// recipe header and family signature, ".pay" carries the layered transform
// of the concatenated section bytes. The entry point lands in the stub.
inline Result<Bytes> pack(ByteView pe, const PackRecipe& recipe) {
  if (auto v = recipe.validate(); !v.ok()) return v.err();
  auto parsed = parse_pe(pe);
  if (!parsed.ok()) return {Errc::NotPe, parsed.message()};
  const Bytes payload = payload_of(parsed.value());
  if (payload.empty()) return {Errc::BadRecipe, "input has no section bytes to pack"};
  if (recipe.oep_rva >= payload.size())
    return {Errc::BadRecipe, "oep_rva beyond payload"};

  const PackerFamily* fam = find_family(recipe.family);
  StubHeader h{recipe.family, recipe.layers, recipe.key_seed,
               static_cast<uint32_t>(payload.size()), recipe.oep_rva};

  SectionSpec stub{".stub", kStubRva, kStubSectionSize, 0x60000020,
                   encode_stub(h, fam->signature)};
  SectionSpec pay{".pay", kPayloadRva, static_cast<uint32_t>(payload.size()), 0xE0000020,
                  apply_layers(payload, fam->transform, recipe.layers, recipe.key_seed)};

  return write_pe32(kStubRva, kDefaultImageBase, {std::move(stub), std::move(pay)});
}

// Test oracle: inverts pack's payload transform without executing anything.
inline Result<Bytes> reference_unpack(ByteView packed, const PackRecipe& recipe) {
  auto parsed = parse_pe(packed);
  if (!parsed.ok()) return {Errc::SignatureMismatch, "input does not parse"};
  const PeImage& img = parsed.value();
  const SectionInfo* stub = img.find_section(".stub");
  const SectionInfo* pay = img.find_section(".pay");
  if (stub == nullptr || pay == nullptr)
    return {Errc::SignatureMismatch, "missing stub or payload section"};
  auto header = decode_stub(img.section_bytes(stub - img.sections.data()));
  if (!header.ok()) return {Errc::SignatureMismatch, header.message()};
  if (header->family != recipe.family || header->layers != recipe.layers ||
      header->key_seed != recipe.key_seed)
    return {Errc::SignatureMismatch, "recipe does not match stub"};
  const PackerFamily* fam = find_family(recipe.family);
  if (fam == nullptr) return {Errc::SignatureMismatch, "unregistered family"};
  ByteView body = img.section_bytes(pay - img.sections.data());
  return invert_layers(body, fam->transform, recipe.layers, recipe.key_seed);
}

// ---------------------------------------------------------------------------
// Corruption.

enum class CorruptMode { Truncate, HeaderSmash };

// Truncate drops the final quarter of the file; HeaderSmash overwrites the
// four bytes at e_lfanew (the PE signature) with PRNG output. Both results
// are guaranteed to fail parse_pe.
inline Bytes corrupt(ByteView data, CorruptMode mode, uint32_t seed) {
  Bytes out(data.begin(), data.end());
  if (out.empty()) return out;
  if (mode == CorruptMode::Truncate) {
    out.resize(out.size() - out.size() / 4);
    return out;
  }
  size_t sig_off = 0;
  if (out.size() >= kDosHeaderSize) {
    const uint32_t lfanew = rd_u32(out, kLfanewOffset);
    if (static_cast<uint64_t>(lfanew) + 4 <= out.size()) sig_off = lfanew;
  }
  Bytes noise = prng_bytes(seed, 4);
  if (noise[0] == 'P' && noise[1] == 'E' && noise[2] == 0 && noise[3] == 0) noise[0] ^= 0xFF;
  for (size_t i = 0; i < 4 && sig_off + i < out.size(); ++i) out[sig_off + i] = noise[i];
  return out;
}

// ---------------------------------------------------------------------------
// Corpus generation.

struct GenSpec {
  size_t plain = 0;
  size_t packed = 0;
  size_t corrupt = 0;
  std::vector<uint16_t> families = {1, 2, 3};
  int layers_min = 1;
  int layers_max = 3;
  int pages_min = 2;
  int pages_max = 6;
  double code_rich_fraction = 0.8;  // of packed payloads

  size_t total() const { return plain + packed + corrupt; }

  static Result<GenSpec> from_json(const nlohmann::json& j) {
    GenSpec s;
    s.plain = j.value("plain", 0);
    s.packed = j.value("packed", 0);
    s.corrupt = j.value("corrupt", 0);
    if (j.contains("families")) s.families = j["families"].get<std::vector<uint16_t>>();
    s.layers_min = j.value("layers_min", 1);
    s.layers_max = j.value("layers_max", 3);
    s.pages_min = j.value("pages_min", 2);
    s.pages_max = j.value("pages_max", 6);
    s.code_rich_fraction = j.value("code_rich_fraction", 0.8);
    if (s.families.empty()) return Result<GenSpec>(Errc::BadRecipe, "no families");
    for (uint16_t f : s.families)
      if (find_family(f) == nullptr)
        return Result<GenSpec>(Errc::BadRecipe, "unregistered family in spec");
    if (s.layers_min < 0 || s.layers_max > static_cast<int>(kMaxLayers) ||
        s.layers_min > s.layers_max)
      return Result<GenSpec>(Errc::BadRecipe, "bad layer range");
    if (s.pages_min < 1 || s.pages_min > s.pages_max)
      return Result<GenSpec>(Errc::BadRecipe, "bad page range");
    return s;
  }
};

struct ManifestEntry {
  std::string sha256;
  std::string category;  // plain | packed | corrupt
  uint16_t family = 0;
  uint8_t layers = 0;
  uint32_t key_seed = 0;
  uint32_t oep_rva = 0;
  uint32_t payload_len = 0;
  std::string profile;
  uint64_t seed = 0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["sha256"] = sha256;
    j["category"] = category;
    j["seed"] = seed;
    if (category == "packed") {
      j["family"] = family;
      j["layers"] = layers;
      j["key_seed"] = key_seed;
      j["oep_rva"] = oep_rva;
      j["payload_len"] = payload_len;
      j["profile"] = profile;
    }
    if (category == "plain") j["profile"] = profile;
    if (category == "corrupt") j["family"] = family;
    return j;
  }

  static ManifestEntry from_json(const nlohmann::json& j) {
    ManifestEntry e;
    e.sha256 = j.value("sha256", "");
    e.category = j.value("category", "");
    e.family = j.value("family", 0);
    e.layers = static_cast<uint8_t>(j.value("layers", 0));
    e.key_seed = j.value("key_seed", 0u);
    e.oep_rva = j.value("oep_rva", 0u);
    e.payload_len = j.value("payload_len", 0u);
    e.profile = j.value("profile", "");
    e.seed = j.value("seed", 0ull);
    return e;
  }
};

struct CorpusManifest {
  std::vector<ManifestEntry> entries;

  size_t count(std::string_view category) const {
    size_t n = 0;
    for (const auto& e : entries) n += e.category == category;
    return n;
  }

  std::string to_jsonl() const {
    std::string out;
    for (const auto& e : entries) out += e.to_json().dump() + "\n";
    return out;
  }

  static Result<CorpusManifest> load(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) return Result<CorpusManifest>(Errc::IoError, "cannot open manifest");
    CorpusManifest m;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded()) return Result<CorpusManifest>(Errc::IoError, "bad manifest line");
      m.entries.push_back(ManifestEntry::from_json(j));
    }
    return m;
  }
};

// The XOR-based families degenerate under even layer counts (two XOR
// passes with a restarted key stream cancel; two nibble-swapped passes
// collapse constant windows), so the generator only emits odd layer
// counts for them.
inline uint8_t pick_layers(SplitMix64& g, uint16_t family, int lo, int hi) {
  int layers = lo + static_cast<int>(g.below(static_cast<uint64_t>(hi - lo + 1)));
  const PackTransform tf = find_family(family)->transform;
  if (tf != PackTransform::AddRolling && layers > 0 && layers % 2 == 0) {
    layers = layers > lo ? layers - 1 : layers + 1;
    if (layers > hi) layers = 1;
  }
  return static_cast<uint8_t>(layers);
}

struct GeneratedSample {
  Bytes bytes;
  ManifestEntry entry;
};

inline GeneratedSample gen_sample(const GenSpec& spec, uint64_t root_seed,
                                  const std::string& category, size_t index) {
  const uint64_t lane = category == "plain" ? 1 : category == "packed" ? 2 : 3;
  const uint64_t seed = derive_seed(root_seed, lane, index);
  SplitMix64 g(seed);
  GeneratedSample out;
  out.entry.category = category;
  out.entry.seed = seed;

  if (category == "plain") {
    out.entry.profile = payload_profile_name(PayloadProfile::CodeRich);
    out.bytes = synth_plain_pe(g.next(), PayloadProfile::CodeRich, spec.pages_min,
                               spec.pages_max);
  } else {
    const uint16_t family =
        spec.families[g.below(spec.families.size())];
    const bool rich = static_cast<double>(g.below(1000)) <
                      spec.code_rich_fraction * 1000.0;
    const PayloadProfile profile = rich ? PayloadProfile::CodeRich : PayloadProfile::CodePoor;
    const Bytes inner = synth_plain_pe(g.next(), profile, spec.pages_min, spec.pages_max);
    PackRecipe recipe;
    recipe.family = family;
    recipe.layers = pick_layers(g, family, spec.layers_min, spec.layers_max);
    recipe.key_seed = static_cast<uint32_t>(g.next());
    recipe.oep_rva = static_cast<uint32_t>(g.below(4)) * kWindowSize;
    auto packed = pack(inner, recipe);
    // inner PEs always parse and carry payload bytes, so pack cannot fail
    Bytes sample = std::move(packed.value());
    if (category == "corrupt") {
      const CorruptMode mode = g.below(2) == 0 ? CorruptMode::Truncate : CorruptMode::HeaderSmash;
      sample = corrupt(sample, mode, static_cast<uint32_t>(g.next()));
      out.entry.family = recipe.family;
    } else {
      auto inner_img = parse_pe(inner);
      out.entry.family = recipe.family;
      out.entry.layers = recipe.layers;
      out.entry.key_seed = recipe.key_seed;
      out.entry.oep_rva = recipe.oep_rva;
      out.entry.payload_len = static_cast<uint32_t>(payload_of(inner_img.value()).size());
      out.entry.profile = payload_profile_name(profile);
    }
    out.bytes = std::move(sample);
  }
  out.entry.sha256 = sha256_hex(out.bytes);
  return out;
}

// Writes `<out>/<sha256>.bin` per sample plus `<out>/manifest.jsonl`.
// Identical (spec, seed) inputs reproduce byte-identical corpora.
inline Result<CorpusManifest> gen_corpus(const GenSpec& spec, uint32_t seed,
                                         const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) return Result<CorpusManifest>(Errc::IoError, ec.message());

  CorpusManifest manifest;
  auto emit = [&](const std::string& category, size_t count) -> Status {
    for (size_t i = 0; i < count; ++i) {
      GeneratedSample s = gen_sample(spec, seed, category, i);
      const auto path = out_dir / (s.entry.sha256 + ".bin");
      std::ofstream f(path, std::ios::binary | std::ios::trunc);
      if (!f) return Status(Errc::IoError, "cannot write " + path.string());
      f.write(reinterpret_cast<const char*>(s.bytes.data()),
              static_cast<std::streamsize>(s.bytes.size()));
      if (!f) return Status(Errc::IoError, "short write " + path.string());
      manifest.entries.push_back(std::move(s.entry));
    }
    return ok_status();
  };

  if (auto s = emit("plain", spec.plain); !s.ok()) return s.err();
  if (auto s = emit("packed", spec.packed); !s.ok()) return s.err();
  if (auto s = emit("corrupt", spec.corrupt); !s.ok()) return s.err();

  std::ofstream mf(out_dir / "manifest.jsonl", std::ios::binary | std::ios::trunc);
  if (!mf) return Result<CorpusManifest>(Errc::IoError, "cannot write manifest");
  mf << manifest.to_jsonl();
  return manifest;
}

}  // namespace peel
