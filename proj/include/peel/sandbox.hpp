#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "peel/packer.hpp"
#include "peel/pe.hpp"
#include "peel/result.hpp"

namespace peel {

struct SandboxConfig {
  int workers = 3;
  uint64_t boot_ticks = 45;      // guest boot budget
  uint64_t quiesce_ticks = 30;   // post-first-dump collection window
  uint64_t timeout_ticks = 720;  // give up if nothing was dumped
  uint64_t page_size = 4096;
  std::chrono::microseconds tick_duration{0};  // 0 = fully simulated clock

  Status validate() const {
    if (workers < 1) return {Errc::BadRecipe, "workers must be >= 1"};
    if (quiesce_ticks >= timeout_ticks)
      return {Errc::BadRecipe, "quiesce window must be shorter than the timeout"};
    if (page_size == 0 || (page_size & (page_size - 1)) != 0)
      return {Errc::BadRecipe, "page size must be a power of two"};
    return ok_status();
  }
};

// Simulated clock; ticks map to wall time only when tick_duration is set.
class TickClock {
 public:
  TickClock() = default;
  explicit TickClock(std::chrono::microseconds per_tick) : per_tick_(per_tick) {}

  void advance(uint64_t n) {
    t_ += n;
    if (per_tick_.count() > 0) std::this_thread::sleep_for(per_tick_ * n);
  }
  uint64_t now() const { return t_; }

 private:
  uint64_t t_ = 0;
  std::chrono::microseconds per_tick_{0};
};

struct SandboxEvent {
  enum class Kind { Write, Exec, Tick };
  Kind kind = Kind::Tick;
  uint64_t addr = 0;   // guest-virtual; Write and Exec
  uint32_t len = 0;    // Write
  Bytes data;          // Write: the bytes written
  uint64_t tick_no = 0;  // Tick

  static SandboxEvent write(uint64_t addr, ByteView bytes) {
    SandboxEvent e;
    e.kind = Kind::Write;
    e.addr = addr;
    e.len = static_cast<uint32_t>(bytes.size());
    e.data.assign(bytes.begin(), bytes.end());
    return e;
  }
  static SandboxEvent exec(uint64_t addr) {
    SandboxEvent e;
    e.kind = Kind::Exec;
    e.addr = addr;
    return e;
  }
  static SandboxEvent tick(uint64_t n) {
    SandboxEvent e;
    e.kind = Kind::Tick;
    e.tick_no = n;
    return e;
  }
};

struct ProcessDump {
  uint32_t index = 0;
  Bytes bytes;            // snapshot of the dumped pages; multiple of page_size
  uint32_t oep_rva = 0;   // exec address relative to the dump start
  uint64_t tick_captured = 0;
};

// ---------------------------------------------------------------------------
// Emulator: a deterministic stand-in for the instrumented guest. Samples
// following the synthetic stub convention go through one write-then-execute
// phase per packing layer; everything else executes inside its original
// pages forever. Time advances one Tick per 64 payload bytes processed.

inline constexpr unsigned kBytesPerTick = 64;

class Emulator {
 public:
  static Result<Emulator> create(ByteView sample, uint64_t page_size) {
    auto parsed = parse_pe(sample);
    if (!parsed.ok()) return {Errc::NotPe, parsed.message()};
    Emulator emu;
    emu.page_size_ = page_size;
    const PeImage& img = parsed.value();

    const SectionInfo* stub = img.find_section(".stub");
    const SectionInfo* pay = img.find_section(".pay");
    bool packed = false;
    if (stub != nullptr && pay != nullptr) {
      auto header = decode_stub(img.section_bytes(static_cast<size_t>(stub - img.sections.data())));
      if (header.ok() && header->payload_len > 0 &&
          header->payload_len == pay->raw_size && header->oep_rva < header->payload_len &&
          header->layers <= kMaxLayers && find_family(header->family) != nullptr) {
        packed = true;
        emu.total_layers_ = header->layers;
        emu.transform_ = find_family(header->family)->transform;
        emu.key_seed_ = header->key_seed;
        emu.payload_va_ = img.image_base + pay->virtual_rva;
        ByteView body = img.section_bytes(static_cast<size_t>(pay - img.sections.data()));
        emu.current_.assign(body.begin(), body.end());
        emu.idle_exec_va_ = emu.payload_va_ + header->oep_rva;
        emu.final_oep_rva_ = header->oep_rva;
      }
    }
    if (!packed) {
      emu.total_layers_ = 0;
      emu.idle_exec_va_ = img.image_base + img.entry_point_rva;
    }
    return emu;
  }

  // Infinite stream; the caller's policy decides when to stop consuming.
  SandboxEvent next() {
    if (buffer_.empty()) refill();
    SandboxEvent e = std::move(buffer_.front());
    buffer_.pop_front();
    return e;
  }

  // True once every packing layer has been replayed (immediately for
  // samples that never self-modify).
  bool unpack_done() const { return layers_done_ == total_layers_ && buffer_.empty(); }

 private:
  void refill() {
    if (layers_done_ < total_layers_) {
      emit_layer();
    } else {
      buffer_.push_back(SandboxEvent::tick(++tick_no_));
      buffer_.push_back(SandboxEvent::exec(idle_exec_va_));
    }
  }

  void emit_layer() {
    Bytes decoded = invert_layer(current_, transform_, key_seed_);
    size_t pos = 0;
    while (pos < decoded.size()) {
      const uint64_t addr = payload_va_ + pos;
      const uint64_t page_end = (addr / page_size_ + 1) * page_size_;
      const size_t len = std::min<uint64_t>(decoded.size() - pos, page_end - addr);
      byte_carry_ += len;
      while (byte_carry_ >= kBytesPerTick) {
        buffer_.push_back(SandboxEvent::tick(++tick_no_));
        byte_carry_ -= kBytesPerTick;
      }
      buffer_.push_back(SandboxEvent::write(addr, ByteView(decoded.data() + pos, len)));
      pos += len;
    }
    ++layers_done_;
    const uint64_t target =
        layers_done_ == total_layers_ ? payload_va_ + final_oep_rva_ : payload_va_;
    buffer_.push_back(SandboxEvent::exec(target));
    current_ = std::move(decoded);
  }

  uint64_t page_size_ = 4096;
  unsigned total_layers_ = 0;
  unsigned layers_done_ = 0;
  PackTransform transform_ = PackTransform::XorRolling;
  uint32_t key_seed_ = 0;
  uint64_t payload_va_ = 0;
  uint32_t final_oep_rva_ = 0;
  uint64_t idle_exec_va_ = 0;
  Bytes current_;
  std::deque<SandboxEvent> buffer_;
  uint64_t tick_no_ = 0;
  uint64_t byte_carry_ = 0;
};

inline Result<Emulator> emulate(ByteView sample, uint64_t page_size) {
  return Emulator::create(sample, page_size);
}

// Finite prefix of the stream covering the whole unpacking phase; empty
// for samples that never self-modify. Used by the monitor oracles.
inline Result<std::vector<SandboxEvent>> emulate_unpack_trace(ByteView sample,
                                                              uint64_t page_size) {
  auto emu = Emulator::create(sample, page_size);
  if (!emu.ok()) return emu.err();
  std::vector<SandboxEvent> trace;
  while (!emu->unpack_done()) trace.push_back(emu->next());
  return trace;
}

// ---------------------------------------------------------------------------
// Write-then-execute monitor. Generic over the event stream: pages touched
// by Write events become dirty; an Exec on a dirty page dumps the maximal
// contiguous dirty run around it and cleans those pages, so each packing
// layer yields exactly one dump. The monitor never declares completion;
// ending the analysis is the caller's quiesce/timeout policy.

class UnpackMonitor {
 public:
  explicit UnpackMonitor(uint64_t page_size) : page_size_(page_size) {}

  std::optional<ProcessDump> feed(const SandboxEvent& ev) {
    switch (ev.kind) {
      case SandboxEvent::Kind::Tick:
        ++ticks_;
        return std::nullopt;
      case SandboxEvent::Kind::Write: {
        record_write(ev);
        return std::nullopt;
      }
      case SandboxEvent::Kind::Exec:
        return on_exec(ev.addr);
    }
    return std::nullopt;
  }

  uint64_t ticks_seen() const { return ticks_; }

 private:
  uint64_t page_base(uint64_t addr) const { return addr / page_size_ * page_size_; }

  void record_write(const SandboxEvent& ev) {
    size_t copied = 0;
    uint64_t addr = ev.addr;
    while (copied < ev.data.size()) {
      const uint64_t base = page_base(addr);
      Bytes& page = dirty_.try_emplace(base, Bytes(page_size_, 0)).first->second;
      const size_t page_off = static_cast<size_t>(addr - base);
      const size_t n = std::min<size_t>(ev.data.size() - copied, page_size_ - page_off);
      std::copy(ev.data.begin() + copied, ev.data.begin() + copied + n,
                page.begin() + page_off);
      copied += n;
      addr += n;
    }
  }

  std::optional<ProcessDump> on_exec(uint64_t addr) {
    const uint64_t page = page_base(addr);
    if (dirty_.find(page) == dirty_.end()) return std::nullopt;
    uint64_t lo = page;
    while (dirty_.find(lo - page_size_) != dirty_.end()) lo -= page_size_;
    uint64_t hi = page + page_size_;
    while (dirty_.find(hi) != dirty_.end()) hi += page_size_;

    ProcessDump dump;
    dump.index = next_index_++;
    dump.oep_rva = static_cast<uint32_t>(addr - lo);
    dump.tick_captured = ticks_;
    dump.bytes.reserve(static_cast<size_t>(hi - lo));
    for (uint64_t p = lo; p < hi; p += page_size_) {
      auto it = dirty_.find(p);
      put_bytes(dump.bytes, as_view(it->second));
      dirty_.erase(it);
    }
    return dump;
  }

  uint64_t page_size_;
  std::map<uint64_t, Bytes> dirty_;
  uint32_t next_index_ = 0;
  uint64_t ticks_ = 0;
};

inline std::vector<ProcessDump> monitor_unpack(std::span<const SandboxEvent> events,
                                               uint64_t page_size) {
  UnpackMonitor mon(page_size);
  std::vector<ProcessDump> dumps;
  for (const auto& ev : events) {
    if (auto d = mon.feed(ev)) dumps.push_back(std::move(*d));
  }
  return dumps;
}

// ---------------------------------------------------------------------------
// Analysis state machine.

enum class AnalysisState {
  Queued,
  Booting,
  Transferring,
  Executing,
  Quiescing,
  Packaging,
  Done,
  Failed,
};

inline const char* analysis_state_name(AnalysisState s) {
  switch (s) {
    case AnalysisState::Queued: return "Queued";
    case AnalysisState::Booting: return "Booting";
    case AnalysisState::Transferring: return "Transferring";
    case AnalysisState::Executing: return "Executing";
    case AnalysisState::Quiescing: return "Quiescing";
    case AnalysisState::Packaging: return "Packaging";
    case AnalysisState::Done: return "Done";
    case AnalysisState::Failed: return "Failed";
  }
  return "?";
}

enum class FailReason { None, Timeout, ParseError };

inline const char* fail_reason_name(FailReason r) {
  switch (r) {
    case FailReason::None: return "None";
    case FailReason::Timeout: return "Timeout";
    case FailReason::ParseError: return "ParseError";
  }
  return "?";
}

struct UnpackContainer {
  Bytes original;
  std::vector<ProcessDump> dumps;
  std::vector<std::string> log;  // tick=N state=X event=Y per entry
  FailReason fail_reason = FailReason::None;
  uint64_t total_ticks = 0;
  std::string mode = "dynamic";

  bool unpacked() const { return !dumps.empty(); }
};

// Drives one sample through the boot / transfer / execute / quiesce
// protocol on the simulated clock. Ticks in the log are relative to the
// start of this sample's analysis, so containers are byte-identical
// regardless of how analyses are scheduled across workers.
inline UnpackContainer run_analysis(ByteView sample, const SandboxConfig& cfg,
                                    TickClock& clock) {
  UnpackContainer c;
  c.original.assign(sample.begin(), sample.end());
  uint64_t t = 0;
  auto log = [&](AnalysisState st, const std::string& event) {
    c.log.push_back("tick=" + std::to_string(t) + " state=" + analysis_state_name(st) +
                    " event=" + event);
  };

  log(AnalysisState::Queued, "enter");
  log(AnalysisState::Booting, "enter");
  clock.advance(cfg.boot_ticks);
  t += cfg.boot_ticks;
  log(AnalysisState::Transferring, "enter");

  auto emu = Emulator::create(sample, cfg.page_size);
  if (!emu.ok()) {
    log(AnalysisState::Failed, "parse_error");
    c.fail_reason = FailReason::ParseError;
    c.total_ticks = t;
    return c;
  }

  log(AnalysisState::Executing, "enter");
  const uint64_t exec_entry = t;
  UnpackMonitor monitor(cfg.page_size);
  std::optional<uint64_t> quiesce_deadline;

  for (;;) {
    if (quiesce_deadline.has_value() && t >= *quiesce_deadline) break;
    if (!quiesce_deadline.has_value() && t - exec_entry >= cfg.timeout_ticks) {
      log(AnalysisState::Failed, "timeout");
      c.fail_reason = FailReason::Timeout;
      c.total_ticks = t;
      return c;
    }
    SandboxEvent ev = emu->next();
    if (ev.kind == SandboxEvent::Kind::Tick) {
      clock.advance(1);
      ++t;
      continue;
    }
    if (auto dump = monitor.feed(ev)) {
      dump->tick_captured = t;
      const bool first = c.dumps.empty();
      const uint32_t index = dump->index;
      c.dumps.push_back(std::move(*dump));
      log(first ? AnalysisState::Executing : AnalysisState::Quiescing,
          "dump_" + std::to_string(index));
      if (first) {
        log(AnalysisState::Quiescing, "enter");
        quiesce_deadline = t + cfg.quiesce_ticks;
      }
    }
  }

  log(AnalysisState::Packaging, "enter");
  log(AnalysisState::Done, "enter");
  c.total_ticks = t;
  return c;
}

// ---------------------------------------------------------------------------
// Orchestrator: a pool of identical sandbox slots. Containers are computed
// on real threads (analyses are independent), while the reported timing
// comes from a deterministic earliest-free-slot schedule, so results and
// timing are identical for any worker count and thread interleaving.

struct SlotTiming {
  size_t sample_index = 0;
  int worker = 0;
  uint64_t start_tick = 0;
  uint64_t end_tick = 0;
};

struct OrchestrationResult {
  std::vector<UnpackContainer> containers;
  std::vector<SlotTiming> schedule;
  uint64_t total_ticks = 0;
};

inline OrchestrationResult orchestrate(const std::vector<Bytes>& samples,
                                       const SandboxConfig& cfg) {
  OrchestrationResult result;
  result.containers.resize(samples.size());
  const int workers = std::max(1, cfg.workers);

  std::atomic<size_t> cursor{0};
  auto worker_fn = [&]() {
    for (;;) {
      const size_t i = cursor.fetch_add(1);
      if (i >= samples.size()) return;
      TickClock local(cfg.tick_duration);
      result.containers[i] = run_analysis(samples[i], cfg, local);
    }
  };
  if (workers == 1 || samples.size() <= 1) {
    worker_fn();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker_fn);
    for (auto& th : pool) th.join();
  }

  std::vector<uint64_t> free_at(static_cast<size_t>(workers), 0);
  for (size_t i = 0; i < samples.size(); ++i) {
    size_t slot = 0;
    for (size_t w = 1; w < free_at.size(); ++w)
      if (free_at[w] < free_at[slot]) slot = w;
    SlotTiming timing;
    timing.sample_index = i;
    timing.worker = static_cast<int>(slot);
    timing.start_tick = free_at[slot];
    timing.end_tick = free_at[slot] + result.containers[i].total_ticks;
    free_at[slot] = timing.end_tick;
    result.schedule.push_back(timing);
  }
  for (uint64_t f : free_at) result.total_ticks = std::max(result.total_ticks, f);
  return result;
}

}  // namespace peel
