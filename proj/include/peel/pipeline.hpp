#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "peel/container.hpp"
#include "peel/detect.hpp"
#include "peel/gate.hpp"
#include "peel/repo.hpp"
#include "peel/report.hpp"
#include "peel/sandbox.hpp"
#include "peel/static_unpack.hpp"

namespace peel {

struct PipelineConfig {
  DetectionThresholds thresholds;
  SignatureDb sigdb = SignatureDb::defaults();
  SandboxConfig sandbox;
  // Batch runs hand only detector-flagged samples to the sandbox; the
  // drop-folder listener analyses everything it is given, so samples that
  // never self-modify end as Timeout sentinels there.
  bool dynamic_only_for_packed = true;
};

inline const char* static_result_name(StageRecord::Static s) {
  switch (s) {
    case StageRecord::Static::NotAttempted: return "NotAttempted";
    case StageRecord::Static::Unpacked: return "Unpacked";
    case StageRecord::Static::NotSupported: return "NotSupported";
    case StageRecord::Static::ParseError: return "ParseError";
    case StageRecord::Static::StubInconsistent: return "StubInconsistent";
  }
  return "?";
}

inline const char* dynamic_result_name(StageRecord::Dynamic d) {
  switch (d) {
    case StageRecord::Dynamic::NotAttempted: return "NotAttempted";
    case StageRecord::Dynamic::Unpacked: return "Unpacked";
    case StageRecord::Dynamic::Timeout: return "Timeout";
    case StageRecord::Dynamic::ParseError: return "ParseError";
  }
  return "?";
}

inline Bytes pad_to_pages(ByteView data, uint64_t page_size) {
  Bytes out(data.begin(), data.end());
  out.resize(align_up(std::max<uint64_t>(out.size(), 1), page_size), 0);
  return out;
}

// Shapes a static unpacking success like a sandbox result so that the
// gate, the container format, and the outbox artifacts stay uniform.
inline Result<UnpackContainer> static_success_container(ByteView original,
                                                        ByteView unpacked_pe,
                                                        uint64_t page_size) {
  auto img = parse_pe(unpacked_pe);
  if (!img.ok()) return img.err();
  UnpackContainer c;
  c.mode = "static";
  c.original.assign(original.begin(), original.end());
  ProcessDump d;
  d.index = 0;
  d.bytes = pad_to_pages(img->section_bytes(0), page_size);
  d.oep_rva = img->entry_point_rva;
  d.tick_captured = 0;
  c.dumps.push_back(std::move(d));
  c.log.push_back("tick=0 state=Done event=static_unpack");
  c.total_ticks = 0;
  return c;
}

// ---------------------------------------------------------------------------
// Result record emission. One JSON line per event in results.jsonl.

inline nlohmann::json detect_record(const std::string& sha256, const DetectionVerdict& v) {
  nlohmann::json j;
  j["event"] = "detect";
  j["sha256"] = sha256;
  j["method"] = detect_method_name(v.method);
  j["packed"] = v.packed;
  j[detect_metric_name(v.method)] = v.metric;
  return j;
}

inline nlohmann::json gate_record(const std::string& sha256, const GateDecision& d) {
  nlohmann::json j;
  j["event"] = "gate";
  j["sha256"] = sha256;
  j["gate"] = d.status;
  j["code_fraction"] = d.code_fraction;
  j["dump_index"] = d.dump_index_used;
  return j;
}

struct SampleOutcome {
  StageRecord record;
  bool need_dynamic = false;
  std::optional<std::filesystem::path> artifact;
};

// Ingest, detection, and the static unpacking attempt for one sample.
inline Result<SampleOutcome> run_static_stages(SampleRepository& repo, ByteView bytes,
                                               const PipelineConfig& cfg,
                                               const std::filesystem::path& out_dir,
                                               uint64_t tick) {
  SampleOutcome out;
  auto meta = repo.ingest(bytes, tick);
  if (!meta.ok()) return meta.err();
  StageRecord& r = out.record;
  r.sha256 = meta->sha256;

  nlohmann::json ing;
  ing["event"] = "ingest";
  ing["sha256"] = meta->sha256;
  ing["md5"] = meta->md5;
  ing["size"] = meta->size;
  ing["mime"] = meta->mime;
  ing["tick"] = meta->first_seen_tick;
  if (auto s = repo.append_result(ing); !s.ok()) return s.err();

  auto img = parse_pe(bytes);
  r.pe32 = img.ok();
  nlohmann::json parse_rec;
  parse_rec["event"] = "parse";
  parse_rec["sha256"] = r.sha256;
  parse_rec["pe32"] = r.pe32;
  if (!img.ok()) parse_rec["error"] = errc_name(img.error());
  if (auto s = repo.append_result(parse_rec); !s.ok()) return s.err();

  if (!bytes.empty()) {
    auto ratio = detect_code_ratio(bytes, cfg.thresholds);
    if (!ratio.ok()) return ratio.err();
    r.packed = ratio->packed;
    if (auto s = repo.append_result(detect_record(r.sha256, ratio.value())); !s.ok())
      return s.err();
  }
  if (img.ok()) {
    const DetectionVerdict v = detect_entropy_heuristic(img.value(), cfg.thresholds);
    if (auto s = repo.append_result(detect_record(r.sha256, v)); !s.ok()) return s.err();
  }

  auto unpacked = static_unpack(bytes, cfg.sigdb);
  uint16_t family = 0;
  if (auto id = identify_packer(bytes, cfg.sigdb)) family = id->id;
  if (unpacked.ok()) {
    r.static_result = StageRecord::Static::Unpacked;
  } else if (unpacked.error() == Errc::ParseError) {
    r.static_result = StageRecord::Static::ParseError;
  } else if (unpacked.error() == Errc::StubInconsistent) {
    r.static_result = StageRecord::Static::StubInconsistent;
  } else {
    r.static_result = StageRecord::Static::NotSupported;
  }
  nlohmann::json st;
  st["event"] = "static";
  st["sha256"] = r.sha256;
  st["result"] = static_result_name(r.static_result);
  if (family != 0) st["family"] = family;
  if (auto s = repo.append_result(st); !s.ok()) return s.err();

  if (unpacked.ok()) {
    auto container =
        static_success_container(bytes, unpacked.value(), cfg.sandbox.page_size);
    if (!container.ok()) return container.err();
    auto path = write_container_artifact(out_dir, r.sha256, container.value());
    if (!path.ok()) return path.err();
    out.artifact = path.value();
    auto decision = gate(container.value(), cfg.thresholds);
    if (!decision.ok()) return decision.err();
    r.gate_accepted = decision->accepted;
    r.gate_fraction = decision->code_fraction;
    if (auto s = repo.append_result(gate_record(r.sha256, decision.value())); !s.ok())
      return s.err();
  }

  out.need_dynamic = cfg.dynamic_only_for_packed
                         ? (r.packed && r.static_result != StageRecord::Static::Unpacked)
                         : (r.static_result != StageRecord::Static::Unpacked);
  return out;
}

// Sandbox pass over the queued samples; one artifact per sample.
inline Status run_dynamic_stage(SampleRepository& repo, std::vector<SampleOutcome*> queue,
                                const PipelineConfig& cfg,
                                const std::filesystem::path& out_dir) {
  std::vector<Bytes> samples;
  samples.reserve(queue.size());
  for (SampleOutcome* o : queue) {
    auto bytes = repo.get(o->record.sha256);
    if (!bytes.ok()) return bytes.err();
    samples.push_back(std::move(bytes.value()));
  }
  OrchestrationResult orch = orchestrate(samples, cfg.sandbox);

  for (size_t i = 0; i < queue.size(); ++i) {
    StageRecord& r = queue[i]->record;
    const UnpackContainer& c = orch.containers[i];
    if (c.unpacked()) {
      r.dynamic_result = StageRecord::Dynamic::Unpacked;
    } else if (c.fail_reason == FailReason::ParseError) {
      r.dynamic_result = StageRecord::Dynamic::ParseError;
    } else {
      r.dynamic_result = StageRecord::Dynamic::Timeout;
    }
    r.analysis_ticks = c.total_ticks;

    auto path = write_container_artifact(out_dir, r.sha256, c);
    if (!path.ok()) return path.err();
    queue[i]->artifact = path.value();

    nlohmann::json dyn;
    dyn["event"] = "dynamic";
    dyn["sha256"] = r.sha256;
    dyn["result"] = dynamic_result_name(r.dynamic_result);
    dyn["dumps"] = c.dumps.size();
    dyn["ticks"] = c.total_ticks;
    if (auto s = repo.append_result(dyn); !s.ok()) return s.err();

    if (c.unpacked()) {
      auto decision = gate(c, cfg.thresholds);
      if (!decision.ok()) return decision.err();
      r.gate_accepted = decision->accepted;
      r.gate_fraction = decision->code_fraction;
      if (auto s = repo.append_result(gate_record(r.sha256, decision.value())); !s.ok())
        return s.err();
    }
  }
  return ok_status();
}

struct PipelineRunResult {
  std::vector<StageRecord> records;
  BatchReport report;
  std::vector<std::filesystem::path> artifacts;
};

inline Result<Bytes> read_file_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) return Result<Bytes>(Errc::IoError, "cannot read " + p.string());
  Bytes data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return data;
}

// Full chain over a corpus directory (every .bin file, sorted by name).
inline Result<PipelineRunResult> run_corpus(SampleRepository& repo,
                                            const std::filesystem::path& corpus_dir,
                                            const PipelineConfig& cfg,
                                            const std::filesystem::path& out_dir) {
  std::vector<std::filesystem::path> files;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(corpus_dir, ec)) {
    if (entry.is_regular_file() && entry.path().extension() == ".bin")
      files.push_back(entry.path());
  }
  if (ec) return Result<PipelineRunResult>(Errc::IoError, ec.message());
  std::sort(files.begin(), files.end());

  PipelineRunResult result;
  std::vector<SampleOutcome> outcomes;
  outcomes.reserve(files.size());
  for (size_t i = 0; i < files.size(); ++i) {
    auto bytes = read_file_bytes(files[i]);
    if (!bytes.ok()) return bytes.err();
    auto outcome = run_static_stages(repo, bytes.value(), cfg, out_dir, i);
    if (!outcome.ok()) return outcome.err();
    outcomes.push_back(std::move(outcome.value()));
  }

  std::vector<SampleOutcome*> queue;
  for (auto& o : outcomes)
    if (o.need_dynamic) queue.push_back(&o);
  if (auto s = run_dynamic_stage(repo, queue, cfg, out_dir); !s.ok()) return s.err();

  for (auto& o : outcomes) {
    if (o.artifact.has_value()) result.artifacts.push_back(*o.artifact);
    result.records.push_back(std::move(o.record));
  }
  auto report = compute_batch_report(result.records);
  if (!report.ok()) return report.err();
  result.report = std::move(report.value());
  return result;
}

// ---------------------------------------------------------------------------
// Drop-folder listener.

struct ListenOptions {
  uint64_t poll_interval_ticks = 1;
  uint64_t max_polls = 0;       // 0 = run until stopped
  uint64_t idle_stop_polls = 0; // 0 = never stop on idle
};

struct ListenStats {
  uint64_t polls = 0;
  uint64_t processed = 0;
  uint64_t errors = 0;
};

// Watches the inbox, runs every new file through the chain, and places
// exactly one artifact per sample in the outbox. Leftovers in the
// in-progress staging area from a crashed run are deleted on startup.
inline Result<ListenStats> listen(const std::filesystem::path& inbox,
                                  const std::filesystem::path& outbox,
                                  SampleRepository& repo, PipelineConfig cfg,
                                  const ListenOptions& opt) {
  cfg.dynamic_only_for_packed = false;  // the listener analyses everything handed over

  std::error_code ec;
  std::filesystem::remove_all(repo.inprogress_dir(), ec);
  std::filesystem::create_directories(repo.inprogress_dir(), ec);
  if (ec) return Result<ListenStats>(Errc::IoError, ec.message());
  std::filesystem::create_directories(outbox, ec);
  if (ec) return Result<ListenStats>(Errc::IoError, ec.message());

  TickClock clock(cfg.sandbox.tick_duration);
  ListenStats stats;
  uint64_t idle = 0;
  while (opt.max_polls == 0 || stats.polls < opt.max_polls) {
    ++stats.polls;
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(inbox, ec)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    if (files.empty()) {
      ++idle;
      if (opt.idle_stop_polls != 0 && idle >= opt.idle_stop_polls) break;
      clock.advance(opt.poll_interval_ticks);
      continue;
    }
    idle = 0;

    std::vector<SampleOutcome> outcomes;
    for (const auto& file : files) {
      const auto staged = repo.inprogress_dir() / file.filename();
      std::filesystem::rename(file, staged, ec);
      if (ec) { ++stats.errors; ec.clear(); continue; }
      auto bytes = read_file_bytes(staged);
      if (!bytes.ok()) { ++stats.errors; continue; }
      auto outcome = run_static_stages(repo, bytes.value(), cfg, outbox, clock.now());
      if (!outcome.ok()) { ++stats.errors; continue; }
      outcomes.push_back(std::move(outcome.value()));
      std::filesystem::remove(staged, ec);
      ec.clear();
      ++stats.processed;
    }
    std::vector<SampleOutcome*> queue;
    for (auto& o : outcomes)
      if (o.need_dynamic) queue.push_back(&o);
    if (auto s = run_dynamic_stage(repo, queue, cfg, outbox); !s.ok()) return s.err();

    clock.advance(opt.poll_interval_ticks);
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Aggregation of results.jsonl back into per-sample stage records.

inline Result<std::vector<StageRecord>> stage_records_from_results(
    const SampleRepository& repo) {
  auto events = repo.results();
  if (!events.ok()) return events.err();
  std::vector<StageRecord> records;
  std::map<std::string, size_t> by_sha;
  auto record_for = [&](const std::string& sha) -> StageRecord& {
    auto it = by_sha.find(sha);
    if (it == by_sha.end()) {
      by_sha.emplace(sha, records.size());
      records.push_back(StageRecord{});
      records.back().sha256 = sha;
      return records.back();
    }
    return records[it->second];
  };

  for (const auto& j : events.value()) {
    const std::string event = j.value("event", "");
    const std::string sha = j.value("sha256", "");
    if (sha.empty()) continue;
    StageRecord& r = record_for(sha);
    if (event == "parse") {
      r.pe32 = j.value("pe32", false);
    } else if (event == "detect") {
      if (j.value("method", "") == "CodeRatio") r.packed = j.value("packed", false);
    } else if (event == "static") {
      const std::string res = j.value("result", "");
      if (res == "Unpacked") r.static_result = StageRecord::Static::Unpacked;
      else if (res == "ParseError") r.static_result = StageRecord::Static::ParseError;
      else if (res == "StubInconsistent") r.static_result = StageRecord::Static::StubInconsistent;
      else r.static_result = StageRecord::Static::NotSupported;
    } else if (event == "dynamic") {
      const std::string res = j.value("result", "");
      if (res == "Unpacked") r.dynamic_result = StageRecord::Dynamic::Unpacked;
      else if (res == "ParseError") r.dynamic_result = StageRecord::Dynamic::ParseError;
      else if (res == "Timeout") r.dynamic_result = StageRecord::Dynamic::Timeout;
      r.analysis_ticks = j.value("ticks", 0ull);
    } else if (event == "gate") {
      r.gate_accepted = j.value("gate", "") == "accepted";
      r.gate_fraction = j.value("code_fraction", 0.0);
    }
  }
  return records;
}

}  // namespace peel
