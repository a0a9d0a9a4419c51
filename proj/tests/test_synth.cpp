#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <random>
#include <set>

#include "helpers.hpp"
#include "peel/hash.hpp"
#include "peel/synth.hpp"

using namespace peel;
namespace fs = std::filesystem;

namespace {

Bytes read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  return Bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("peel_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Bytes payload_of_bytes(ByteView pe) {
  auto img = parse_pe(pe);
  REQUIRE(img.ok());
  return payload_of(img.value());
}

}  // namespace

TEST_CASE("pack with zero layers stores the payload verbatim") {
  const Bytes inner = synth_plain_pe(1, PayloadProfile::CodeRich);
  PackRecipe recipe{1, 0, 99, 0};
  auto packed = pack(inner, recipe);
  REQUIRE(packed.ok());
  auto img = parse_pe(packed.value());
  REQUIRE(img.ok());
  const SectionInfo* pay = img->find_section(".pay");
  REQUIRE(pay != nullptr);
  ByteView body = img->section_bytes(static_cast<size_t>(pay - img->sections.data()));
  CHECK(Bytes(body.begin(), body.end()) == payload_of_bytes(inner));
}

TEST_CASE("family 1 transform: first byte follows the rolling key seed") {
  // payload starting with 0x00, seed 7: 0x00 XOR 7 = 0x07
  Bytes body(4096, 0);
  const Bytes inner = testutil::pe_with_body(body);
  PackRecipe recipe{1, 1, 7, 0};
  auto packed = pack(inner, recipe);
  REQUIRE(packed.ok());
  auto img = parse_pe(packed.value());
  REQUIRE(img.ok());
  const SectionInfo* pay = img->find_section(".pay");
  REQUIRE(pay != nullptr);
  ByteView pb = img->section_bytes(static_cast<size_t>(pay - img->sections.data()));
  CHECK(pb[0] == 0x07);

  // and the next key: k1 = 5*7+1 = 36
  CHECK(pb[1] == (0x00 ^ 36));
}

TEST_CASE("two additive layers round-trip through reference_unpack") {
  const Bytes inner = testutil::pe_with_body(testutil::windows("cccccccccccc", 50), 0x1000);
  PackRecipe recipe{2, 2, 42, 0};
  auto packed = pack(inner, recipe);
  REQUIRE(packed.ok());
  auto restored = reference_unpack(packed.value(), recipe);
  REQUIRE(restored.ok());
  CHECK(restored.value() == payload_of_bytes(inner));
}

TEST_CASE("reference_unpack rejects a mismatched recipe") {
  const Bytes inner = synth_plain_pe(5, PayloadProfile::CodeRich);
  PackRecipe recipe{1, 1, 10, 0};
  auto packed = pack(inner, recipe);
  REQUIRE(packed.ok());
  PackRecipe wrong = recipe;
  wrong.family = 2;
  auto r = reference_unpack(packed.value(), wrong);
  REQUIRE_FALSE(r.ok());
  CHECK(r.error() == Errc::SignatureMismatch);
}

TEST_CASE("pack validates its inputs") {
  const Bytes inner = synth_plain_pe(6, PayloadProfile::CodeRich);
  PackRecipe bad_layers{1, 9, 0, 0};
  CHECK(pack(inner, bad_layers).error() == Errc::BadRecipe);
  PackRecipe bad_family{42, 1, 0, 0};
  CHECK(pack(inner, bad_family).error() == Errc::BadRecipe);
  PackRecipe recipe{1, 1, 0, 0};
  Bytes junk = {'n', 'o', 'p', 'e'};
  CHECK(pack(junk, recipe).error() == Errc::NotPe);
}

TEST_CASE("round trip holds over randomized recipes") {
  std::mt19937 rng(404);
  for (int trial = 0; trial < 100; ++trial) {
    const Bytes inner = synth_plain_pe(rng(), trial % 2 == 0 ? PayloadProfile::CodeRich
                                                             : PayloadProfile::CodePoor);
    PackRecipe recipe;
    recipe.family = static_cast<uint16_t>(1 + rng() % 3);
    recipe.layers = static_cast<uint8_t>(rng() % 9);
    recipe.key_seed = rng();
    recipe.oep_rva = 0;
    auto packed = pack(inner, recipe);
    REQUIRE(packed.ok());
    auto restored = reference_unpack(packed.value(), recipe);
    REQUIRE(restored.ok());
    CHECK(restored.value() == payload_of_bytes(inner));
  }
}

TEST_CASE("corrupt output never parses and is deterministic") {
  const Bytes inner = synth_plain_pe(7, PayloadProfile::CodeRich);
  PackRecipe recipe{2, 1, 3, 0};
  const Bytes packed = pack(inner, recipe).value();

  const Bytes truncated = corrupt(packed, CorruptMode::Truncate, 0);
  CHECK(truncated.size() == packed.size() - packed.size() / 4);
  auto rt = parse_pe(truncated);
  REQUIRE_FALSE(rt.ok());
  CHECK(rt.error() == Errc::Truncated);

  const Bytes smashed = corrupt(packed, CorruptMode::HeaderSmash, 1);
  auto rs = parse_pe(smashed);
  REQUIRE_FALSE(rs.ok());
  CHECK((rs.error() == Errc::NotPe || rs.error() == Errc::Malformed));

  CHECK(corrupt(packed, CorruptMode::Truncate, 5) == corrupt(packed, CorruptMode::Truncate, 5));
  CHECK(corrupt(packed, CorruptMode::HeaderSmash, 5) ==
        corrupt(packed, CorruptMode::HeaderSmash, 5));
}

TEST_CASE("generated corpus is reproducible and matches its manifest") {
  GenSpec spec;
  spec.plain = 10;
  spec.packed = 16;
  spec.corrupt = 4;

  const fs::path dir_a = fresh_dir("corpus_a");
  const fs::path dir_b = fresh_dir("corpus_b");
  auto ma = gen_corpus(spec, 1, dir_a);
  auto mb = gen_corpus(spec, 1, dir_b);
  REQUIRE(ma.ok());
  REQUIRE(mb.ok());

  CHECK(ma->entries.size() == 30);
  CHECK(ma->count("plain") == 10);
  CHECK(ma->count("packed") == 16);
  CHECK(ma->count("corrupt") == 4);

  std::set<std::string> shas_a, shas_b;
  for (const auto& e : ma->entries) shas_a.insert(e.sha256);
  for (const auto& e : mb->entries) shas_b.insert(e.sha256);
  CHECK(shas_a == shas_b);
  CHECK(shas_a.size() == 30);  // all distinct

  // stored files hash to their manifest names
  for (const auto& e : ma->entries) {
    const Bytes data = read_file(dir_a / (e.sha256 + ".bin"));
    CHECK(sha256_hex(data) == e.sha256);
  }

  // manifest reload round-trips
  auto reloaded = CorpusManifest::load(dir_a / "manifest.jsonl");
  REQUIRE(reloaded.ok());
  REQUIRE(reloaded->entries.size() == ma->entries.size());
  for (size_t i = 0; i < ma->entries.size(); ++i) {
    CHECK(reloaded->entries[i].sha256 == ma->entries[i].sha256);
    CHECK(reloaded->entries[i].category == ma->entries[i].category);
    CHECK(reloaded->entries[i].layers == ma->entries[i].layers);
  }
}

TEST_CASE("empty corpus spec yields an empty manifest") {
  GenSpec spec;
  const fs::path dir = fresh_dir("corpus_empty");
  auto m = gen_corpus(spec, 9, dir);
  REQUIRE(m.ok());
  CHECK(m->entries.empty());
}

TEST_CASE("packed payload section entropy exceeds the input mean on the corpus") {
  GenSpec spec;
  spec.packed = 12;
  const fs::path dir = fresh_dir("corpus_entropy");
  auto manifest = gen_corpus(spec, 21, dir);
  REQUIRE(manifest.ok());

  for (const auto& e : manifest->entries) {
    if (e.category != "packed" || e.layers == 0) continue;
    const Bytes sample = read_file(dir / (e.sha256 + ".bin"));
    auto img = parse_pe(sample);
    REQUIRE(img.ok());
    const SectionInfo* pay = img->find_section(".pay");
    REQUIRE(pay != nullptr);

    // input mean: reconstruct the original payload and wrap it back into
    // sections via the manifest recipe
    PackRecipe recipe{e.family, e.layers, e.key_seed, e.oep_rva};
    auto original = reference_unpack(sample, recipe);
    REQUIRE(original.ok());
    const double original_entropy = entropy_of(original.value());
    CHECK(pay->entropy > original_entropy);
  }
}

TEST_CASE("pay section entropy exceeds the mean input section entropy") {
  for (uint64_t seed : {11ull, 12ull, 13ull}) {
    const Bytes inner = synth_plain_pe(seed, PayloadProfile::CodeRich);
    auto inner_img = parse_pe(inner);
    REQUIRE(inner_img.ok());
    double mean = 0.0;
    for (const auto& s : inner_img->sections) mean += s.entropy;
    mean /= static_cast<double>(inner_img->sections.size());

    for (const auto& [family, layers] : std::vector<std::pair<uint16_t, uint8_t>>{
             {1, 1}, {1, 3}, {2, 1}, {2, 2}, {3, 1}, {3, 3}}) {
      PackRecipe recipe{family, layers, static_cast<uint32_t>(seed * 31 + family), 0};
      auto packed = pack(inner, recipe);
      REQUIRE(packed.ok());
      auto img = parse_pe(packed.value());
      REQUIRE(img.ok());
      const SectionInfo* pay = img->find_section(".pay");
      REQUIRE(pay != nullptr);
      CHECK(pay->entropy > mean);
    }
  }
}

TEST_CASE("corpus packed samples parse and carry the declared payload length") {
  GenSpec spec;
  spec.packed = 8;
  const fs::path dir = fresh_dir("corpus_stub");
  auto manifest = gen_corpus(spec, 33, dir);
  REQUIRE(manifest.ok());
  for (const auto& e : manifest->entries) {
    const Bytes sample = read_file(dir / (e.sha256 + ".bin"));
    auto img = parse_pe(sample);
    REQUIRE(img.ok());
    const SectionInfo* stub = img->find_section(".stub");
    REQUIRE(stub != nullptr);
    auto header = decode_stub(img->section_bytes(static_cast<size_t>(stub - img->sections.data())));
    REQUIRE(header.ok());
    CHECK(header->payload_len == e.payload_len);
    CHECK(header->layers == e.layers);
    CHECK(header->oep_rva == e.oep_rva);
    CHECK(header->oep_rva < header->payload_len);
  }
}
