#pragma once

#include <string>

#include "peel/detect.hpp"
#include "peel/pe.hpp"
#include "peel/sandbox.hpp"

namespace peel {

// CodeDB admission gate. Only the first dump of a container is ever
// considered; later dumps of real-world samples were found to carry no
// visible code, so the first one decides admission.

struct GateDecision {
  bool accepted = false;
  std::string status;       // "accepted" | "packed"
  double code_fraction = 0.0;
  uint32_t dump_index_used = 0;
};

inline Result<const ProcessDump*> select_dump(const UnpackContainer& c) {
  if (!c.unpacked()) return {Errc::NoDumps, "container holds no dumps"};
  return &c.dumps.front();
}

// Runs the code-ratio check over the fixed-up PE form of the first dump.
// Accepts at exactly the threshold; the detector marks packed strictly
// below it, keeping the two rules complementary. Rejection never deletes
// the container.
inline Result<GateDecision> gate(const UnpackContainer& c, const DetectionThresholds& t) {
  auto dump = select_dump(c);
  if (!dump.ok()) return dump.err();
  auto fixed = build_minimal_pe((*dump)->bytes, (*dump)->oep_rva);
  if (!fixed.ok()) return fixed.err();
  auto verdict = detect_code_ratio(fixed.value(), t);
  if (!verdict.ok()) return verdict.err();

  GateDecision decision;
  decision.dump_index_used = 0;
  decision.code_fraction = verdict->metric;
  decision.accepted = verdict->metric >= t.code_fraction_threshold;
  decision.status = decision.accepted ? "accepted" : "packed";
  return decision;
}

}  // namespace peel
