#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "peel/bytes.hpp"
#include "peel/hash.hpp"
#include "peel/result.hpp"

namespace peel {

struct SampleMetadata {
  std::string sha256;
  std::string md5;
  uint64_t size = 0;
  std::string mime;
  uint64_t first_seen_tick = 0;
  std::map<std::string, std::string> statuses;  // stage -> result, filled on aggregation
};

inline std::string mime_of(ByteView data) {
  if (data.size() >= 2 && data[0] == 'M' && data[1] == 'Z') return "application/x-dosexec";
  return "application/octet-stream";
}

// Flat content-addressed sample store:
//   <dir>/store/<sha256>.bin   sample bytes
//   <dir>/index.jsonl          one metadata record per sample, ingest order
//   <dir>/results.jsonl        appended per-stage event records
// Index updates go through write-then-rename; results are append-only.
class SampleRepository {
 public:
  static Result<SampleRepository> open(const std::filesystem::path& dir) {
    SampleRepository repo;
    repo.dir_ = dir;
    std::error_code ec;
    std::filesystem::create_directories(repo.store_dir(), ec);
    if (ec) return Result<SampleRepository>(Errc::IoError, ec.message());

    std::ifstream idx(repo.index_file());
    std::string line;
    while (idx && std::getline(idx, line)) {
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded())
        return Result<SampleRepository>(Errc::IoError, "corrupt index line");
      SampleMetadata m;
      m.sha256 = j.value("sha256", "");
      m.md5 = j.value("md5", "");
      m.size = j.value("size", 0ull);
      m.mime = j.value("mime", "");
      m.first_seen_tick = j.value("first_seen_tick", 0ull);
      repo.order_.push_back(m.sha256);
      repo.samples_.emplace(m.sha256, std::move(m));
    }
    return repo;
  }

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path store_dir() const { return dir_ / "store"; }
  std::filesystem::path index_file() const { return dir_ / "index.jsonl"; }
  std::filesystem::path results_file() const { return dir_ / "results.jsonl"; }
  std::filesystem::path containers_dir() const { return dir_ / "containers"; }
  std::filesystem::path inprogress_dir() const { return dir_ / "inprogress"; }

  // Content-addressed and idempotent: re-ingesting identical bytes returns
  // the existing record.
  Result<SampleMetadata> ingest(ByteView data, uint64_t tick) {
    std::scoped_lock lock(*mu_);
    const std::string sha = sha256_hex(data);
    if (auto it = samples_.find(sha); it != samples_.end()) return it->second;

    SampleMetadata m;
    m.sha256 = sha;
    m.md5 = md5_hex(data);
    m.size = data.size();
    m.mime = mime_of(data);
    m.first_seen_tick = tick;

    const auto path = store_dir() / (sha + ".bin");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) return Result<SampleMetadata>(Errc::IoError, "cannot write " + path.string());
    f.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size()));
    f.close();
    if (!f) return Result<SampleMetadata>(Errc::IoError, "short write " + path.string());

    samples_.emplace(sha, m);
    order_.push_back(sha);
    if (auto s = rewrite_index(); !s.ok()) return s.err();
    return m;
  }

  Result<Bytes> get(const std::string& sha256) const {
    std::ifstream f(store_dir() / (sha256 + ".bin"), std::ios::binary);
    if (!f) return Result<Bytes>(Errc::IoError, "no stored sample " + sha256);
    Bytes data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return data;
  }

  std::vector<SampleMetadata> samples() const {
    std::scoped_lock lock(*mu_);
    std::vector<SampleMetadata> out;
    out.reserve(order_.size());
    for (const auto& sha : order_) out.push_back(samples_.at(sha));
    return out;
  }

  Status append_result(const nlohmann::json& record) {
    std::scoped_lock lock(*mu_);
    std::ofstream f(results_file(), std::ios::binary | std::ios::app);
    if (!f) return {Errc::IoError, "cannot append to results"};
    f << record.dump() << "\n";
    f.flush();
    if (!f) return {Errc::IoError, "short append to results"};
    return ok_status();
  }

  Result<std::vector<nlohmann::json>> results() const {
    std::vector<nlohmann::json> out;
    std::ifstream f(results_file());
    std::string line;
    while (f && std::getline(f, line)) {
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded())
        return Result<std::vector<nlohmann::json>>(Errc::IoError, "corrupt results line");
      out.push_back(std::move(j));
    }
    return out;
  }

 private:
  Status rewrite_index() {
    const auto tmp = index_file().string() + ".tmp";
    {
      std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
      if (!f) return {Errc::IoError, "cannot write index"};
      for (const auto& sha : order_) {
        const SampleMetadata& m = samples_.at(sha);
        nlohmann::json j;
        j["sha256"] = m.sha256;
        j["md5"] = m.md5;
        j["size"] = m.size;
        j["mime"] = m.mime;
        j["first_seen_tick"] = m.first_seen_tick;
        f << j.dump() << "\n";
      }
      f.flush();
      if (!f) return {Errc::IoError, "short write to index"};
    }
    std::error_code ec;
    std::filesystem::rename(tmp, index_file(), ec);
    if (ec) return {Errc::IoError, ec.message()};
    return ok_status();
  }

  std::filesystem::path dir_;
  std::map<std::string, SampleMetadata> samples_;
  std::vector<std::string> order_;
  std::unique_ptr<std::mutex> mu_ = std::make_unique<std::mutex>();
};

}  // namespace peel
