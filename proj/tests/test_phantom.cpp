#include <doctest.h>

#include "oracles.hpp"
#include "vict/evaluation.hpp"
#include "vict/phantom.hpp"

using namespace vict;

TEST_SUITE("phantom") {

TEST_CASE("ground truth from the two scans closes the loop") {
  auto spec = default_phantom_spec({96, 96, 96}, 1.25);
  const auto ph = generate_phantom(spec);
  CHECK(ground_truth_removal(ph.preop, ph.intraop) == ph.truth);
  CHECK(count_nonzero(ph.truth) > 100);

  spec.hu_noise = 0.0;
  const auto clean = generate_phantom(spec);
  const auto tissue = threshold_mask(clean.preop, kTissueThresholdHu);
  MaskVolume expect(clean.carve.geometry(), 0);
  for (std::size_t v = 0; v < expect.size(); ++v) expect[v] = clean.carve[v] && tissue[v];
  CHECK(ground_truth_removal(clean.preop, clean.intraop) == expect);
  for (std::size_t v = 0; v < expect.size(); ++v) {
    if (clean.truth[v]) CHECK(clean.roi[v] == 1);
  }
}

TEST_CASE("generation and simulation are deterministic per seed") {
  auto spec = default_phantom_spec({48, 48, 48}, 2.5);
  const auto a = generate_phantom(spec);
  const auto b = generate_phantom(spec);
  CHECK(a.preop == b.preop);
  CHECK(a.intraop == b.intraop);
  auto sim = table1_preset();
  sim.duration = 30.0;
  const auto ta = simulate_trace(a, sim);
  const auto tb = simulate_trace(b, sim);
  CHECK(ta.samples == tb.samples);
  sim.seed = 2;
  CHECK_FALSE(simulate_trace(a, sim).samples == ta.samples);
}

TEST_CASE("simulated stats are within 2 percent of the request") {
  const auto ph = generate_phantom(default_phantom_spec());
  auto sim = table1_preset();
  sim.duration = 120.0;
  sim.seed = 5;
  const auto tr = simulate_trace(ph, sim);
  for (Tool tool : {Tool::kInstrument, Tool::kEndoscope}) {
    const auto st = compute_stats(tr.of_tool(tool));
    CHECK(std::abs(st.sampling_rate_high - 15.0) <= 0.3);
    CHECK(std::abs(st.sampling_rate_low - 15.0) <= 0.3);
    CHECK(std::abs(st.tracking_rate - 72.0) <= 2.0);
  }
}

TEST_CASE("spec validation") {
  auto spec = default_phantom_spec({32, 32, 32}, 1.0);
  spec.carve_spheres.clear();
  spec.carve_capsules.clear();
  CHECK_THROWS_AS(generate_phantom(spec), InputError);
  auto sim = table1_preset();
  sim.tracking_rate = 1.5;
  CHECK_THROWS_AS(sim.validate(), InputError);
}

TEST_CASE("config sections override the defaults") {
  const auto tree = parse_keyvalue(
      "[phantom]\ndims = 40 40 40\nspacing_mm = 2 2 2\nhu_noise = 0\nseed = 9\n"
      "[simulation]\npreset = table1\nduration_s = 12\ntracking_rate = 0.5\n");
  const auto p = parse_phantom_spec(tree, default_phantom_spec());
  CHECK(p.geometry.dims == Index3{40, 40, 40});
  CHECK(p.hu_noise == 0.0);
  CHECK(p.seed == 9);
  const auto s = parse_simulation_spec(tree, table1_preset());
  CHECK(s.duration == 12.0);
  CHECK(s.tracking_rate == 0.5);
  CHECK(s.sampling_rate == 15.0);
}

TEST_CASE("with 50 percent dropout trajectory recall beats tip recall") {
  const auto ph = generate_phantom(default_phantom_spec());
  auto sim = table1_preset();
  sim.tracking_rate = 0.5;
  sim.seed = 3;
  const auto tr = simulate_trace(ph, sim);
  const Geometry& g = ph.preop.geometry();
  const auto o = resolve_options(tr, g, EstimationOptions{});
  const auto tip = method_tip(tr, g, o);
  const auto traj = method_trajectory(tr, g, o);
  const auto tissue = threshold_mask(ph.preop, kTissueThresholdHu);
  MaskVolume region(g, 0);
  for (std::size_t v = 0; v < region.size(); ++v) region[v] = ph.roi[v] && tissue[v];
  const auto mt = metrics(confusion(tip.mask.mask, ph.truth, &region));
  const auto mj = metrics(confusion(traj.mask.mask, ph.truth, &region));
  MESSAGE("recall tip " << mt.recall << " trajectory " << mj.recall);
  CHECK(mj.recall > mt.recall);
}

}
