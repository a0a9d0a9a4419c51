#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "peel/entropy.hpp"
#include "peel/pe.hpp"
#include "peel/result.hpp"

namespace peel {

struct DetectionThresholds {
  double entropy_threshold = 7.4;        // section counts as compressed strictly above this
  double compressed_size_fraction = 0.20;
  double code_fraction_threshold = 0.40;
  size_t region_window = 256;
  double null_fraction = 0.90;
  double printable_fraction = 0.85;
  double payload_entropy_floor = 7.0;
  double code_entropy_floor = 4.0;

  Status validate() const {
    auto frac = [](double v) { return v > 0.0 && v < 1.0; };
    if (!frac(compressed_size_fraction) || !frac(code_fraction_threshold) ||
        !frac(null_fraction) || !frac(printable_fraction))
      return {Errc::BadRecipe, "fractions must lie in (0,1)"};
    if (entropy_threshold <= 0.0 || entropy_threshold >= 8.0 ||
        payload_entropy_floor <= 0.0 || payload_entropy_floor >= 8.0 ||
        code_entropy_floor <= 0.0 || code_entropy_floor >= 8.0)
      return {Errc::BadRecipe, "entropy thresholds must lie in (0,8)"};
    if (region_window < 16) return {Errc::BadRecipe, "region window below 16 bytes"};
    return ok_status();
  }
};

enum class RegionKind { Null, String, Data, Code, Packed };

inline const char* region_kind_name(RegionKind k) {
  switch (k) {
    case RegionKind::Null: return "Null";
    case RegionKind::String: return "String";
    case RegionKind::Data: return "Data";
    case RegionKind::Code: return "Code";
    case RegionKind::Packed: return "Packed";
  }
  return "?";
}

struct Region {
  uint64_t offset = 0;
  uint64_t length = 0;
  RegionKind kind = RegionKind::Data;
};

// Regions tile the analyzed byte range without gaps or overlaps.
using RegionMap = std::vector<Region>;

enum class DetectMethod { EntropyHeuristic, CodeRatio };

inline const char* detect_method_name(DetectMethod m) {
  return m == DetectMethod::EntropyHeuristic ? "EntropyHeuristic" : "CodeRatio";
}

inline const char* detect_metric_name(DetectMethod m) {
  return m == DetectMethod::EntropyHeuristic ? "compressed_fraction" : "code_fraction";
}

struct SectionEvidence {
  std::string name;
  double entropy = 0.0;
  uint64_t raw_size = 0;
  bool compressed = false;
};

struct DetectionVerdict {
  bool packed = false;
  DetectMethod method = DetectMethod::EntropyHeuristic;
  double metric = 0.0;                    // compressed_fraction or code_fraction
  std::vector<SectionEvidence> sections;  // entropy heuristic evidence
  RegionMap regions;                      // code-ratio evidence
};

// peutils-style heuristic: a section is "compressed" iff its entropy is
// strictly above the threshold; the image is packed iff at least one such
// section exists and the compressed sections cover strictly more than
// compressed_size_fraction of the file.
inline DetectionVerdict detect_entropy_heuristic(const PeImage& image,
                                                 const DetectionThresholds& t) {
  DetectionVerdict v;
  v.method = DetectMethod::EntropyHeuristic;
  uint64_t compressed_bytes = 0;
  bool any = false;
  for (const auto& s : image.sections) {
    SectionEvidence ev{s.name, s.entropy, s.raw_size, s.entropy > t.entropy_threshold};
    if (ev.compressed) {
      any = true;
      compressed_bytes += s.raw_size;
    }
    v.sections.push_back(std::move(ev));
  }
  v.metric = image.total_file_size == 0
                 ? 0.0
                 : static_cast<double>(compressed_bytes) /
                       static_cast<double>(image.total_file_size);
  v.packed = any && v.metric > t.compressed_size_fraction;
  return v;
}

// Codescanner-style region tiling: windows that are definitely not
// entropic (nulls, strings) are identified first and suppressed from the
// later ratio; the rest is bucketed by window entropy.
inline Result<RegionMap> classify_regions(ByteView data, const DetectionThresholds& t) {
  if (data.empty()) return Errc::EmptyInput;
  RegionMap map;
  const size_t w = t.region_window;
  for (size_t off = 0; off < data.size(); off += w) {
    const size_t len = std::min(w, data.size() - off);
    ByteView win(data.data() + off, len);
    size_t nulls = 0, printable = 0;
    for (uint8_t b : win) {
      if (b == 0) ++nulls;
      if ((b >= 0x20 && b <= 0x7E) || b == 0x09 || b == 0x0A || b == 0x0D) ++printable;
    }
    RegionKind kind;
    const double fn = static_cast<double>(nulls) / static_cast<double>(len);
    const double fp = static_cast<double>(printable) / static_cast<double>(len);
    if (fn >= t.null_fraction) {
      kind = RegionKind::Null;
    } else if (fp >= t.printable_fraction) {
      kind = RegionKind::String;
    } else {
      const double h = entropy_of(win);
      if (h >= t.payload_entropy_floor) kind = RegionKind::Packed;
      else if (h >= t.code_entropy_floor) kind = RegionKind::Code;
      else kind = RegionKind::Data;
    }
    if (!map.empty() && map.back().kind == kind) {
      map.back().length += len;
    } else {
      map.push_back(Region{off, len, kind});
    }
  }
  return map;
}

// CodeDB admission heuristic: after suppressing Null and String regions,
// the remaining bytes must be at least code_fraction_threshold code.
// An empty denominator reports code_fraction 1.0 and not packed.
inline Result<DetectionVerdict> detect_code_ratio(ByteView data, const DetectionThresholds& t) {
  auto regions = classify_regions(data, t);
  if (!regions.ok()) return regions.err();
  DetectionVerdict v;
  v.method = DetectMethod::CodeRatio;
  v.regions = std::move(regions.value());
  uint64_t code = 0, denom = 0;
  for (const auto& r : v.regions) {
    switch (r.kind) {
      case RegionKind::Code: code += r.length; denom += r.length; break;
      case RegionKind::Data:
      case RegionKind::Packed: denom += r.length; break;
      case RegionKind::Null:
      case RegionKind::String: break;
    }
  }
  if (denom == 0) {
    v.metric = 1.0;
    v.packed = false;
  } else {
    v.metric = static_cast<double>(code) / static_cast<double>(denom);
    v.packed = v.metric < t.code_fraction_threshold;
  }
  return v;
}

}  // namespace peel
