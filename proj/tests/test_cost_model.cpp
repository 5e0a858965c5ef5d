#include "doctest.h"

#include "actionkit/cost_model.hpp"

using namespace actionkit;
using namespace actionkit::cost;

TEST_CASE("insertion site counts") {
  CHECK(count_module_sites(build_backbone(Backbone::ResNet50, Variant::Action, 8, 83, {})) ==
        16);
  CHECK(count_module_sites(build_backbone(Backbone::ResNet50, Variant::Action, 8, 83,
                                          {"res2"})) == 3);
  CHECK(count_module_sites(build_backbone(Backbone::ResNet50, Variant::Action, 8, 83,
                                          {"res3", "res4"})) == 10);
  CHECK(count_module_sites(build_backbone(Backbone::MobileNetV2, Variant::Tsm, 8, 83, {})) ==
        10);
  CHECK(count_module_sites(build_backbone(Backbone::ResNet50, Variant::Tsn, 8, 83, {})) == 0);
}

TEST_CASE("unknown stages and names are rejected") {
  CHECK_THROWS_AS(build_backbone(Backbone::ResNet50, Variant::Action, 8, 83, {"res6"}),
                  ConfigError);
  CHECK_THROWS_AS(build_backbone(Backbone::MobileNetV2, Variant::Action, 8, 83, {"res2"}),
                  ConfigError);
  CHECK_THROWS_AS(parse_backbone("vgg"), ConfigError);
  CHECK_THROWS_AS(parse_variant("gsm"), ConfigError);
  CHECK_THROWS_AS(build_backbone(Backbone::ResNet50, Variant::Tsn, 0, 83, {}), ConfigError);
}

TEST_CASE("shift is free: tsm costs exactly match tsn") {
  for (const Backbone b : {Backbone::ResNet50, Backbone::MobileNetV2}) {
    const CostReport tsn = count_cost(build_backbone(b, Variant::Tsn, 8, 83, {}));
    const CostReport tsm = count_cost(build_backbone(b, Variant::Tsm, 8, 83, {}));
    CHECK(tsn.macs == tsm.macs);
    CHECK(tsn.params == tsm.params);
  }
}

TEST_CASE("doubling the segment count doubles macs and keeps params") {
  for (const Variant v : {Variant::Tsn, Variant::Action}) {
    const CostReport t8 = count_cost(build_backbone(Backbone::ResNet50, v, 8, 83, {}));
    const CostReport t16 = count_cost(build_backbone(Backbone::ResNet50, v, 16, 83, {}));
    CHECK(t16.macs == 2 * t8.macs);
    CHECK(t16.params == t8.params);
  }
  // the per-frame count times 8 equals the 8-segment count exactly
  const CostReport t1 = count_cost(build_backbone(Backbone::ResNet50, Variant::Tsn, 1, 83, {}));
  const CostReport t8 = count_cost(build_backbone(Backbone::ResNet50, Variant::Tsn, 8, 83, {}));
  CHECK(8 * t1.macs == t8.macs);
}

TEST_CASE("variant cost is the baseline plus the per-site module costs") {
  struct Site {
    u64 c, s;
  };
  // channels and spatial extents seen by the 16 block-start sites
  const Site sites[] = {{64, 56},   {256, 56},  {256, 56},  {256, 56},
                        {512, 28},  {512, 28},  {512, 28},  {512, 28},
                        {1024, 14}, {1024, 14}, {1024, 14}, {1024, 14},
                        {1024, 14}, {1024, 14}, {2048, 7},  {2048, 7}};
  const CostReport base = count_cost(build_backbone(Backbone::ResNet50, Variant::Tsn, 8, 83, {}));
  for (const Variant v : {Variant::Ste, Variant::Ce, Variant::Me, Variant::Action}) {
    const CostReport full = count_cost(build_backbone(Backbone::ResNet50, v, 8, 83, {}));
    u64 macs = 0, params = 0;
    for (const Site& s : sites) {
      const auto [m, p] = excitation_site_cost(v, s.c, s.s, s.s, 8);
      macs += m;
      params += p;
    }
    CHECK(full.macs == base.macs + macs);
    CHECK(full.params == base.params + params);
  }
}

TEST_CASE("adding insertion stages never decreases cost") {
  const std::vector<std::vector<std::string>> nested = {
      {"res2"}, {"res2", "res3"}, {"res2", "res3", "res4"}, {"res2", "res3", "res4", "res5"}};
  u64 prev_macs = 0, prev_params = 0;
  for (const auto& stages : nested) {
    const CostReport r =
        count_cost(build_backbone(Backbone::ResNet50, Variant::Action, 8, 83, stages));
    CHECK(r.macs >= prev_macs);
    CHECK(r.params >= prev_params);
    prev_macs = r.macs;
    prev_params = r.params;
  }
}

TEST_CASE("per-path compute deltas are strictly ordered") {
  const CostReport base = count_cost(build_backbone(Backbone::ResNet50, Variant::Tsn, 8, 83, {}));
  const u64 ste = count_cost(build_backbone(Backbone::ResNet50, Variant::Ste, 8, 83, {})).macs;
  const u64 ce = count_cost(build_backbone(Backbone::ResNet50, Variant::Ce, 8, 83, {})).macs;
  const u64 me = count_cost(build_backbone(Backbone::ResNet50, Variant::Me, 8, 83, {})).macs;
  const u64 act =
      count_cost(build_backbone(Backbone::ResNet50, Variant::Action, 8, 83, {})).macs;
  CHECK(base.macs < ste);
  CHECK(ste < ce);
  CHECK(ce < me);
  CHECK(me < act);
}

TEST_CASE("single-site accounting matches the hand-computed formulas") {
  // spatio-temporal path at (C=64, 56x56), per clip of 8 segments:
  //   channel mean 64*56^2, 3x3x3 conv 27*56^2 + bias 56^2, sigmoid 56^2,
  //   gate 64*56^2 -> (2*64 + 29) * 3136 per frame
  const auto [ste_macs, ste_params] = excitation_site_cost(Variant::Ste, 64, 56, 56, 8);
  CHECK(ste_macs == 8ull * 3136 * (2 * 64 + 29));
  CHECK(ste_params == 28);

  // channel path at (C=256, 56x56): pool + squeeze + temporal + expand +
  // sigmoid + gate
  const auto [ce_macs, ce_params] = excitation_site_cost(Variant::Ce, 256, 56, 56, 8);
  const u64 red = 16;
  const u64 per_frame = 256ull * 3136 + (red * 256 + red) + (red * red * 3 + red) +
                        (256 * red + 256) + 256 + 256ull * 3136;
  CHECK(ce_macs == 8 * per_frame);
  CHECK(ce_params == (red * 256 + red) + (red * red * 3 + red) + (256 * red + 256));

  // parameter count of one motion site: squeeze + depthwise diff + expand
  const auto [me_macs, me_params] = excitation_site_cost(Variant::Me, 256, 56, 56, 8);
  CHECK(me_params == (red * 256 + red) + (red * 9 + red) + (256 * red + 256));
  CHECK(me_macs > ce_macs);
}

TEST_CASE("delta report arithmetic") {
  CostReport a, b;
  a.macs = 33'000'000'000ull;
  a.params = 23'680'000;
  b.macs = 34'750'000'000ull;
  b.params = 28'080'000;
  const DeltaReport d = delta_report(a, b, 92.1, 94.2);
  CHECK(d.dmacs == doctest::Approx(1.75e9));
  CHECK(d.dmacs_pct == doctest::Approx(100.0 * 1.75 / 33.0));
  CHECK(d.dparams == doctest::Approx(4.4e6));
  CHECK(d.dtop1 == doctest::Approx(2.1));

  const DeltaReport zero = delta_report(a, a, 90.0, 90.0);
  CHECK(zero.dmacs == 0.0);
  CHECK(zero.dmacs_pct == 0.0);
  CHECK(zero.dparams == 0.0);
  CHECK(zero.dtop1 == 0.0);
}

TEST_CASE("efficiency metric") {
  CHECK(efficiency(5.3, 2.1) == doctest::Approx(2.5238095238095237).epsilon(1e-12));
  CHECK(efficiency(0.0, 3.0) == 0.0);
  CHECK(efficiency(0.8, 1.1) == doctest::Approx(0.7272727272727273).epsilon(1e-12));
  CHECK_THROWS_AS(efficiency(1.0, 0.0), DomainError);
}

TEST_CASE("per-stage breakdown sums to the totals") {
  const CostReport r = count_cost(build_backbone(Backbone::ResNet50, Variant::Action, 8, 83, {}));
  u64 macs = 0, params = 0;
  for (const StageCost& s : r.per_stage) {
    macs += s.macs;
    params += s.params;
  }
  CHECK(macs == r.macs);
  CHECK(params == r.params);
}
