#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "peel/gate.hpp"
#include "peel/synth.hpp"

using namespace peel;
using testutil::windows;

namespace {

const DetectionThresholds kDefaults{};

UnpackContainer container_with_dump(Bytes dump_bytes, uint32_t oep = 0) {
  // dumps carry whole pages
  dump_bytes.resize(align_up(std::max<size_t>(dump_bytes.size(), 1), 4096), 0);
  UnpackContainer c;
  c.original = prng_bytes(1, 64);
  ProcessDump d;
  d.index = 0;
  d.bytes = std::move(dump_bytes);
  d.oep_rva = oep;
  c.dumps.push_back(std::move(d));
  c.log.push_back("tick=0 state=Done event=enter");
  return c;
}

}  // namespace

TEST_CASE("select_dump always picks index zero") {
  UnpackContainer c = container_with_dump(windows("cccc"));
  ProcessDump extra1 = c.dumps[0];
  extra1.index = 1;
  ProcessDump extra2 = c.dumps[0];
  extra2.index = 2;
  c.dumps.push_back(extra1);
  c.dumps.push_back(extra2);

  auto d = select_dump(c);
  REQUIRE(d.ok());
  CHECK((*d)->index == 0);
}

TEST_CASE("select_dump on a failed container reports NoDumps") {
  UnpackContainer failed;
  failed.fail_reason = FailReason::Timeout;
  auto d = select_dump(failed);
  REQUIRE_FALSE(d.ok());
  CHECK(d.error() == Errc::NoDumps);

  auto g = gate(failed, kDefaults);
  REQUIRE_FALSE(g.ok());
  CHECK(g.error() == Errc::NoDumps);
}

TEST_CASE("gate accepts a 45% code dump") {
  // 9 code + 11 packed windows: 0.45; header and padding windows are null
  // and suppressed, so the fraction carries through the fixed-up PE.
  UnpackContainer c = container_with_dump(windows("cccccccccppppppppppp"));
  auto g = gate(c, kDefaults);
  REQUIRE(g.ok());
  CHECK(g->accepted);
  CHECK(g->status == "accepted");
  CHECK(g->dump_index_used == 0);
  CHECK(g->code_fraction == Catch::Approx(0.45));
}

TEST_CASE("gate rejects a 39% code dump with status packed") {
  // 39 code + 61 packed windows: 0.39 < 0.40
  std::string plan(39, 'c');
  plan.append(61, 'p');
  UnpackContainer c = container_with_dump(windows(plan));
  auto g = gate(c, kDefaults);
  REQUIRE(g.ok());
  CHECK_FALSE(g->accepted);
  CHECK(g->status == "packed");
  CHECK(g->code_fraction == Catch::Approx(0.39));
}

TEST_CASE("gate accepts at exactly the threshold") {
  // 8 code + 12 packed windows: exactly 0.40
  UnpackContainer c = container_with_dump(windows("ccccccccpppppppppppp"));
  auto g = gate(c, kDefaults);
  REQUIRE(g.ok());
  CHECK(g->code_fraction == Catch::Approx(0.40));
  CHECK(g->accepted);
  CHECK(g->status == "accepted");

  // while the detector still calls the same bytes packed only below 0.40
  auto fixed = build_minimal_pe(c.dumps[0].bytes, 0);
  REQUIRE(fixed.ok());
  auto v = detect_code_ratio(fixed.value(), kDefaults);
  REQUIRE(v.ok());
  CHECK_FALSE(v->packed);
}

TEST_CASE("gate decisions are a pure function of first-dump bytes and thresholds") {
  UnpackContainer c = container_with_dump(windows("ccpppp", 321), 256);
  auto g1 = gate(c, kDefaults);
  auto g2 = gate(c, kDefaults);
  REQUIRE(g1.ok());
  REQUIRE(g2.ok());
  CHECK(g1->accepted == g2->accepted);
  CHECK(g1->code_fraction == g2->code_fraction);
  CHECK(g1->status == g2->status);

  // appending later dumps never changes the decision
  ProcessDump tail;
  tail.index = 1;
  tail.bytes = Bytes(4096, 0xFF);
  tail.oep_rva = 0;
  c.dumps.push_back(tail);
  auto g3 = gate(c, kDefaults);
  REQUIRE(g3.ok());
  CHECK(g3->accepted == g1->accepted);
  CHECK(g3->code_fraction == g1->code_fraction);
}

TEST_CASE("gate agrees with ground truth on one-layer corpus samples") {
  const SandboxConfig cfg{};
  for (uint64_t seed : {70ull, 71ull, 72ull}) {
    const Bytes inner = synth_plain_pe(seed, PayloadProfile::CodeRich);
    PackRecipe recipe{1, 1, static_cast<uint32_t>(seed), 0};
    auto packed = pack(inner, recipe);
    REQUIRE(packed.ok());
    TickClock clock;
    UnpackContainer c = run_analysis(packed.value(), cfg, clock);
    REQUIRE(c.unpacked());
    auto g = gate(c, DetectionThresholds{});
    REQUIRE(g.ok());
    CHECK(g->accepted);  // code-rich payloads pass once fully unpacked
  }
  for (uint64_t seed : {80ull, 81ull}) {
    const Bytes inner = synth_plain_pe(seed, PayloadProfile::CodePoor);
    PackRecipe recipe{2, 1, static_cast<uint32_t>(seed), 0};
    auto packed = pack(inner, recipe);
    REQUIRE(packed.ok());
    TickClock clock;
    UnpackContainer c = run_analysis(packed.value(), cfg, clock);
    REQUIRE(c.unpacked());
    auto g = gate(c, DetectionThresholds{});
    REQUIRE(g.ok());
    CHECK_FALSE(g->accepted);  // opaque payloads stay below 40% code
    CHECK(g->status == "packed");
  }
}
