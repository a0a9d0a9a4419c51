#pragma once

#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "peel/packer.hpp"
#include "peel/pe.hpp"
#include "peel/result.hpp"

namespace peel {

// Signature-based unpacking in the style of an AV engine: families whose
// signature is both recognised and marked supported can be reversed
// statically; everything else needs the sandbox.
struct SignatureDb {
  std::set<uint16_t> supported;
  std::string version = "builtin-1";

  // Families 1 and 2 only; family 3 stays "novel" so the static rate is
  // deliberately below the dynamic one.
  static SignatureDb defaults() {
    SignatureDb db;
    db.supported = {1, 2};
    return db;
  }

  // One line per family: `id signature_hex supported`
  std::string to_text() const {
    std::ostringstream out;
    for (const auto& f : packer_families()) {
      out << f.id << ' ' << to_hex(ByteView(f.signature.data(), f.signature.size())) << ' '
          << (supported.count(f.id) ? 1 : 0) << '\n';
    }
    return out.str();
  }

  static Result<SignatureDb> from_text(const std::string& text) {
    SignatureDb db;
    db.version = "file";
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      unsigned id = 0;
      std::string sig, flag;
      if (!(ls >> id >> sig >> flag))
        return Result<SignatureDb>(Errc::IoError, "bad signature line: " + line);
      if (find_family(static_cast<uint16_t>(id)) == nullptr)
        return Result<SignatureDb>(Errc::IoError, "unregistered family id " + std::to_string(id));
      if (flag == "1" || flag == "true" || flag == "yes")
        db.supported.insert(static_cast<uint16_t>(id));
    }
    return db;
  }
};

// Scans only the .stub section's raw range for a registered signature and
// reports the family iff the database supports it. Unknown and unsupported
// packers are values (nullopt), not errors.
inline std::optional<PackerFamily> identify_packer(ByteView sample, const SignatureDb& db) {
  auto parsed = parse_pe(sample);
  if (!parsed.ok()) return std::nullopt;
  const PeImage& img = parsed.value();
  const SectionInfo* stub = img.find_section(".stub");
  if (stub == nullptr) return std::nullopt;
  const size_t idx = static_cast<size_t>(stub - img.sections.data());
  auto family = find_family_signature(img.section_bytes(idx));
  if (!family.has_value() || db.supported.count(*family) == 0) return std::nullopt;
  return *find_family(*family);
}

// Reverses a known packer without execution: reads the recipe from the
// stub, inverts the transform for every layer, and rebuilds a PE around
// the recovered payload with the stub's OEP.
inline Result<Bytes> static_unpack(ByteView sample, const SignatureDb& db) {
  auto parsed = parse_pe(sample);
  if (!parsed.ok()) return {Errc::ParseError, parsed.message()};
  const PeImage& img = parsed.value();

  auto family = identify_packer(sample, db);
  if (!family.has_value()) return {Errc::NotSupported, "no supported packer signature"};

  const SectionInfo* stub = img.find_section(".stub");
  const SectionInfo* pay = img.find_section(".pay");
  if (stub == nullptr || pay == nullptr)
    return {Errc::StubInconsistent, "missing stub or payload section"};
  auto header = decode_stub(img.section_bytes(static_cast<size_t>(stub - img.sections.data())));
  if (!header.ok()) return header.err();
  if (header->family != family->id)
    return {Errc::StubInconsistent, "stub family does not match signature"};
  if (header->layers > kMaxLayers) return {Errc::StubInconsistent, "layer count out of range"};
  ByteView body = img.section_bytes(static_cast<size_t>(pay - img.sections.data()));
  if (header->payload_len != body.size())
    return {Errc::StubInconsistent, "payload length does not match section"};
  if (header->payload_len == 0) return {Errc::StubInconsistent, "empty payload"};
  if (header->oep_rva >= header->payload_len)
    return {Errc::StubInconsistent, "oep beyond payload"};

  Bytes payload = invert_layers(body, family->transform, header->layers, header->key_seed);
  return build_minimal_pe(payload, header->oep_rva);
}

}  // namespace peel
