#pragma once

#include <cmath>
#include <cstdio>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "peel/result.hpp"

namespace peel {

// Batch accounting in the shape of the daily evaluation tables: file and
// packer counters, the error-adjusted packed file count (APF), static and
// dynamic unpacking rates, and sandbox runtime statistics.

struct StageCounts {
  uint64_t total_files = 0;
  uint64_t pe32_files = 0;
  uint64_t packed_files = 0;
  uint64_t static_unpacked = 0;
  uint64_t corrupt_files = 0;
  uint64_t dynamic_unpacked = 0;
};

struct RuntimeStats {
  uint64_t analyses = 0;
  uint64_t min_ticks = 0;
  uint64_t max_ticks = 0;
  uint64_t total_ticks = 0;

  double mean_ticks() const {
    return analyses == 0 ? 0.0 : static_cast<double>(total_ticks) / static_cast<double>(analyses);
  }

  void add(uint64_t ticks) {
    if (analyses == 0) {
      min_ticks = max_ticks = ticks;
    } else {
      min_ticks = std::min(min_ticks, ticks);
      max_ticks = std::max(max_ticks, ticks);
    }
    total_ticks += ticks;
    ++analyses;
  }
};

struct BatchRow {
  std::string label;
  StageCounts counts;
  uint64_t apf = 0;
  std::optional<double> static_rate;   // static_unpacked / packed_files
  std::optional<double> dynamic_rate;  // dynamic_unpacked / apf
  RuntimeStats runtime;
};

struct BatchReport {
  std::vector<BatchRow> rows;
};

// APF = packed - statically unpacked - corrupt; negative combinations and
// more dynamic successes than APF candidates are count inconsistencies.
inline Result<BatchRow> batch_row_from_counts(const std::string& label, const StageCounts& c,
                                              const RuntimeStats& runtime = {}) {
  BatchRow row;
  row.label = label;
  row.counts = c;
  row.runtime = runtime;
  if (c.static_unpacked + c.corrupt_files > c.packed_files)
    return Result<BatchRow>(Errc::NegativeApf, "static + corrupt exceed packed count");
  row.apf = c.packed_files - c.static_unpacked - c.corrupt_files;
  if (c.dynamic_unpacked > row.apf)
    return Result<BatchRow>(Errc::NegativeApf, "dynamic successes exceed APF");
  if (c.packed_files > 0)
    row.static_rate = static_cast<double>(c.static_unpacked) /
                      static_cast<double>(c.packed_files);
  if (row.apf > 0)
    row.dynamic_rate = static_cast<double>(c.dynamic_unpacked) / static_cast<double>(row.apf);
  return row;
}

// Per-sample stage results, the unit the reporter aggregates.
struct StageRecord {
  enum class Static { NotAttempted, Unpacked, NotSupported, ParseError, StubInconsistent };
  enum class Dynamic { NotAttempted, Unpacked, Timeout, ParseError };

  std::string sha256;
  bool pe32 = false;
  bool packed = false;  // code-ratio verdict
  Static static_result = Static::NotAttempted;
  Dynamic dynamic_result = Dynamic::NotAttempted;
  std::optional<bool> gate_accepted;
  std::optional<double> gate_fraction;
  std::optional<uint64_t> analysis_ticks;

  bool corrupt() const {
    return static_result == Static::ParseError || dynamic_result == Dynamic::ParseError;
  }
};

inline Result<BatchReport> compute_batch_report(std::span<const StageRecord> records,
                                                const std::string& label = "batch") {
  StageCounts c;
  RuntimeStats runtime;
  for (const auto& r : records) {
    ++c.total_files;
    c.pe32_files += r.pe32;
    c.packed_files += r.packed;
    c.static_unpacked += r.static_result == StageRecord::Static::Unpacked;
    c.corrupt_files += r.packed && r.corrupt();
    c.dynamic_unpacked += r.dynamic_result == StageRecord::Dynamic::Unpacked;
    if (r.analysis_ticks.has_value()) runtime.add(*r.analysis_ticks);
  }
  auto row = batch_row_from_counts(label, c, runtime);
  if (!row.ok()) return row.err();
  BatchReport report;
  report.rows.push_back(std::move(row.value()));
  return report;
}

// Percentages print with round-half-up to one decimal.
inline std::string format_pct(double rate) {
  const double pct = rate * 100.0;
  const double rounded = std::floor(pct * 10.0 + 0.5) / 10.0;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", rounded);
  return buf;
}

inline std::string format_rate_cell(const std::optional<double>& rate) {
  return rate.has_value() ? format_pct(*rate) : "-";
}

enum class ReportFormat { Table, Csv };

inline std::string render_report(const BatchReport& report, ReportFormat fmt) {
  std::ostringstream out;
  if (fmt == ReportFormat::Csv) {
    out << "label,total_files,pe32_files,packed_files,static_unpacked,corrupt_files,apf,"
           "dynamic_unpacked,static_rate,dynamic_rate,runtime_analyses,runtime_min_ticks,"
           "runtime_max_ticks,runtime_mean_ticks,runtime_total_ticks\n";
    for (const auto& r : report.rows) {
      out << r.label << ',' << r.counts.total_files << ',' << r.counts.pe32_files << ','
          << r.counts.packed_files << ',' << r.counts.static_unpacked << ','
          << r.counts.corrupt_files << ',' << r.apf << ',' << r.counts.dynamic_unpacked << ',';
      if (r.static_rate.has_value()) out << format_pct(*r.static_rate);
      out << ',';
      if (r.dynamic_rate.has_value()) out << format_pct(*r.dynamic_rate);
      out << ',' << r.runtime.analyses << ',' << r.runtime.min_ticks << ','
          << r.runtime.max_ticks << ',';
      char mean[32];
      std::snprintf(mean, sizeof mean, "%.1f", r.runtime.mean_ticks());
      out << mean << ',' << r.runtime.total_ticks << '\n';
    }
    return out.str();
  }

  // Table: metric rows, one column per batch, in the evaluation table order.
  std::vector<std::pair<std::string, std::vector<std::string>>> lines = {
      {"Total Files:", {}},
      {"PE32 Files:", {}},
      {"Packed Files:", {}},
      {"Statically Unpacked:", {}},
      {"Unpacking Rate (static/packed):", {}},
      {"Corrupt Files:", {}},
      {"Error Adjusted Packed Files (APF):", {}},
      {"Dynamically Unpacked:", {}},
      {"Unpacking Rate (dynamic/APF):", {}},
      {"Sandbox Analyses:", {}},
      {"Fastest Runtime (ticks):", {}},
      {"Slowest Runtime (ticks):", {}},
      {"Average Runtime (ticks):", {}},
      {"Complete Runtime (ticks):", {}},
  };
  for (const auto& r : report.rows) {
    char mean[32];
    std::snprintf(mean, sizeof mean, "%.1f", r.runtime.mean_ticks());
    size_t i = 0;
    lines[i++].second.push_back(std::to_string(r.counts.total_files));
    lines[i++].second.push_back(std::to_string(r.counts.pe32_files));
    lines[i++].second.push_back(std::to_string(r.counts.packed_files));
    lines[i++].second.push_back(std::to_string(r.counts.static_unpacked));
    lines[i++].second.push_back(format_rate_cell(r.static_rate));
    lines[i++].second.push_back(std::to_string(r.counts.corrupt_files));
    lines[i++].second.push_back(std::to_string(r.apf));
    lines[i++].second.push_back(std::to_string(r.counts.dynamic_unpacked));
    lines[i++].second.push_back(format_rate_cell(r.dynamic_rate));
    lines[i++].second.push_back(std::to_string(r.runtime.analyses));
    lines[i++].second.push_back(std::to_string(r.runtime.min_ticks));
    lines[i++].second.push_back(std::to_string(r.runtime.max_ticks));
    lines[i++].second.push_back(mean);
    lines[i++].second.push_back(std::to_string(r.runtime.total_ticks));
  }

  out << "Description";
  for (const auto& r : report.rows) out << '\t' << r.label;
  out << '\n';
  for (const auto& [name, cells] : lines) {
    out << name;
    for (const auto& cell : cells) out << '\t' << cell;
    out << '\n';
  }
  return out.str();
}

// CSV round-trip support (counts only; rates are re-derived).
inline Result<BatchReport> parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line))
    return Result<BatchReport>(Errc::IoError, "empty csv");
  BatchReport report;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() < 15) return Result<BatchReport>(Errc::IoError, "short csv row");
    StageCounts c;
    c.total_files = std::stoull(cells[1]);
    c.pe32_files = std::stoull(cells[2]);
    c.packed_files = std::stoull(cells[3]);
    c.static_unpacked = std::stoull(cells[4]);
    c.corrupt_files = std::stoull(cells[5]);
    c.dynamic_unpacked = std::stoull(cells[7]);
    RuntimeStats rt;
    rt.analyses = std::stoull(cells[10]);
    rt.min_ticks = std::stoull(cells[11]);
    rt.max_ticks = std::stoull(cells[12]);
    rt.total_ticks = std::stoull(cells[14]);
    auto row = batch_row_from_counts(cells[0], c, rt);
    if (!row.ok()) return row.err();
    report.rows.push_back(std::move(row.value()));
  }
  return report;
}

}  // namespace peel
