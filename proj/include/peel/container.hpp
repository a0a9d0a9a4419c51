#pragma once

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "peel/pe.hpp"
#include "peel/sandbox.hpp"
#include "peel/tar.hpp"

namespace peel {

// On-disk container: `<sha256>.unpacked.tar` holding the original sample,
// every dump raw and fixed up, the state log, and a metadata record.
// Failures become a `<sha256>.failed.txt` sentinel whose first line names
// the reason.

inline std::string dump_entry_name(uint32_t index, const char* suffix) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "dumps/dump_%04u.%s", index, suffix);
  return buf;
}

inline Result<Bytes> container_to_tar(const UnpackContainer& c, const std::string& sha256) {
  if (!c.unpacked()) return {Errc::NoDumps, "failed containers are written as sentinels"};
  TarWriter tw;
  tw.add("original.bin", as_view(c.original));
  for (const auto& d : c.dumps) {
    tw.add(dump_entry_name(d.index, "bin"), as_view(d.bytes));
    auto fixed = build_minimal_pe(d.bytes, d.oep_rva);
    if (!fixed.ok()) return fixed.err();
    tw.add(dump_entry_name(d.index, "pe"), as_view(fixed.value()));
  }
  std::string log;
  for (const auto& line : c.log) log += line + "\n";
  tw.add("unpack.log", as_view(log));

  nlohmann::json meta;
  meta["sha256"] = sha256;
  meta["outcome"] = "Unpacked";
  meta["mode"] = c.mode;
  meta["dump_count"] = c.dumps.size();
  meta["total_ticks"] = c.total_ticks;
  nlohmann::json oeps = nlohmann::json::array();
  nlohmann::json ticks = nlohmann::json::array();
  for (const auto& d : c.dumps) {
    oeps.push_back(d.oep_rva);
    ticks.push_back(d.tick_captured);
  }
  meta["oep_rvas"] = oeps;
  meta["dump_ticks"] = ticks;
  const std::string meta_text = meta.dump(2) + "\n";
  tw.add("meta.json", as_view(meta_text));
  return tw.finish();
}

inline Result<UnpackContainer> container_from_tar(ByteView archive) {
  auto entries = tar_read(archive);
  if (!entries.ok()) return entries.err();
  UnpackContainer c;
  nlohmann::json meta;
  std::map<uint32_t, Bytes> raw_dumps;
  for (auto& e : entries.value()) {
    if (e.name == "original.bin") {
      c.original = std::move(e.data);
    } else if (e.name == "unpack.log") {
      std::string text(e.data.begin(), e.data.end());
      size_t pos = 0;
      while (pos < text.size()) {
        size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        if (nl > pos) c.log.push_back(text.substr(pos, nl - pos));
        pos = nl + 1;
      }
    } else if (e.name == "meta.json") {
      meta = nlohmann::json::parse(std::string(e.data.begin(), e.data.end()), nullptr, false);
    } else if (e.name.rfind("dumps/dump_", 0) == 0 &&
               e.name.size() > 4 && e.name.substr(e.name.size() - 4) == ".bin") {
      const uint32_t index =
          static_cast<uint32_t>(std::stoul(e.name.substr(std::string("dumps/dump_").size(), 4)));
      raw_dumps[index] = std::move(e.data);
    }
  }
  if (meta.is_discarded() || !meta.is_object())
    return Result<UnpackContainer>(Errc::Malformed, "missing or invalid meta.json");
  c.mode = meta.value("mode", "dynamic");
  c.total_ticks = meta.value("total_ticks", 0ull);
  auto oeps = meta.value("oep_rvas", nlohmann::json::array());
  auto ticks = meta.value("dump_ticks", nlohmann::json::array());
  for (auto& [index, bytes] : raw_dumps) {
    ProcessDump d;
    d.index = index;
    d.bytes = std::move(bytes);
    if (index < oeps.size()) d.oep_rva = oeps[index].get<uint32_t>();
    if (index < ticks.size()) d.tick_captured = ticks[index].get<uint64_t>();
    c.dumps.push_back(std::move(d));
  }
  if (c.dumps.empty()) return Result<UnpackContainer>(Errc::NoDumps, "container has no dumps");
  return c;
}

inline std::string sentinel_text(const UnpackContainer& c, const std::string& sha256) {
  std::string out = std::string(fail_reason_name(c.fail_reason)) + "\n";
  out += "sha256=" + sha256 + "\n";
  for (const auto& line : c.log) out += line + "\n";
  return out;
}

// Writes the container tar (success) or the failure sentinel and returns
// the artifact path.
inline Result<std::filesystem::path> write_container_artifact(
    const std::filesystem::path& out_dir, const std::string& sha256,
    const UnpackContainer& c) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) return Result<std::filesystem::path>(Errc::IoError, ec.message());
  std::filesystem::path path;
  Bytes payload;
  if (c.unpacked()) {
    auto tar = container_to_tar(c, sha256);
    if (!tar.ok()) return tar.err();
    payload = std::move(tar.value());
    path = out_dir / (sha256 + ".unpacked.tar");
  } else {
    const std::string text = sentinel_text(c, sha256);
    payload.assign(text.begin(), text.end());
    path = out_dir / (sha256 + ".failed.txt");
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) return Result<std::filesystem::path>(Errc::IoError, "cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(payload.data()),
          static_cast<std::streamsize>(payload.size()));
  if (!f) return Result<std::filesystem::path>(Errc::IoError, "short write " + path.string());
  return path;
}

}  // namespace peel
