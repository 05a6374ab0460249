#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "support.hpp"
#include "vict/evaluation.hpp"
#include "vict/keyvalue.hpp"

using namespace vict;

TEST_SUITE("evaluation") {

TEST_CASE("confusion counts equal set arithmetic") {
  std::mt19937_64 rng(61);
  const Geometry g = oracle::cube(16);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = oracle::random_mask(g, rng);
    const auto b = oracle::random_mask(g, rng);
    const auto region = oracle::random_mask(g, rng, 0.3, 1.0);
    CHECK(confusion(a, b) == oracle::set_confusion(a, b));
    MaskVolume ar(g, 0), br(g, 0);
    for (std::size_t v = 0; v < a.size(); ++v) {
      ar[v] = a[v] && region[v];
      br[v] = b[v] && region[v];
    }
    auto ref = oracle::set_confusion(ar, br);
    ref.tn -= a.size() - count_nonzero(region);
    CHECK(confusion(a, b, &region) == ref);
  }
}

TEST_CASE("hand-computed metrics") {
  ConfusionCounts c{3, 1, 3, 100};
  const auto m = metrics(c);
  CHECK(m.precision == 0.75);
  CHECK(m.recall == 0.5);
  CHECK(m.fscore == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(m.dsc == doctest::Approx(0.6).epsilon(1e-15));
  CHECK_FALSE(m.dsc_fscore_diverge);

  const auto empty = metrics(ConfusionCounts{0, 0, 5, 10});
  CHECK(empty.recall == 0.0);
  CHECK(empty.precision_degenerate);
  CHECK(empty.fscore_degenerate);
  CHECK_FALSE(empty.recall_degenerate);

  const auto none = metrics(ConfusionCounts{0, 0, 0, 10});
  CHECK(none.dsc_degenerate);
  CHECK(none.recall_degenerate);
}

TEST_CASE("hausdorff equals the all-pairs oracle") {
  std::mt19937_64 rng(62);
  for (int trial = 0; trial < 40; ++trial) {
    Geometry g = oracle::cube(12, trial % 2 ? 1.0 : 0.6);
    g.spacing[2] = 1.3;
    const auto a = oracle::sparse_mask(g, rng, 1 + rng() % 150);
    const auto b = oracle::sparse_mask(g, rng, 1 + rng() % 150);
    CHECK(hausdorff(a, b) == oracle::hausdorff(a, b));
    CHECK(hausdorff(a, b) == hausdorff(b, a));
    CHECK(hausdorff(a, a) == 0.0);
    CHECK(directed_hausdorff(a, b) == std::sqrt(oracle::directed_sq(a, b)));
  }
  const Geometry g = oracle::cube(4);
  CHECK_THROWS_AS(hausdorff(MaskVolume(g, 0), MaskVolume(g, 1)), ComputeError);
}

TEST_CASE("resampling with a transform and its inverse round-trips") {
  std::mt19937_64 rng(63);
  const Geometry g = oracle::cube(64, 1.0);
  MaskVolume m(g, 0);
  for (std::size_t v = 0; v < m.size(); ++v) {
    m[v] = (index_to_world(g, g.unravel(v)) - Vec3::Constant(31.5)).norm() <= 24.0;
  }
  for (int trial = 0; trial < 5; ++trial) {
    RigidTransform t;
    t.rotation = Eigen::AngleAxisd(0.2 + 0.3 * trial, Vec3::Random().normalized()).toRotationMatrix();
    const Vec3 c = Vec3::Constant(31.5);
    t.translation = c - t.rotation * c + Vec3::Random();
    const auto moved = resample(m, t, g);
    const auto back = resample(moved, t.inverse(), g);
    std::size_t diff = 0;
    for (std::size_t v = 0; v < m.size(); ++v) diff += m[v] != back[v];
    const double frac = static_cast<double>(diff) / static_cast<double>(count_nonzero(m));
    MESSAGE("round-trip disagreement " << frac);
    CHECK(frac <= 0.02);
  }
}

TEST_CASE("trilinear resampling reproduces a linear field") {
  const Geometry g = oracle::cube(10);
  HuVolume v(g);
  for (int k = 0; k < 10; ++k) {
    for (int j = 0; j < 10; ++j) {
      for (int i = 0; i < 10; ++i) v.at(i, j, k) = static_cast<std::int16_t>(10 * i + 20 * j - 30 * k);
    }
  }
  RigidTransform t;
  t.translation = Vec3(0.5, 0.25, 0.0);
  const auto r = resample(v, t, g, Interpolation::kTrilinear);
  CHECK(r.at(3, 3, 3) == static_cast<std::int16_t>(std::lround(10 * 3.5 + 20 * 3.25 - 90)));
  CHECK(r.at(9, 0, 0) == kAirHu);
  const auto n = resample(v, RigidTransform::identity(), g, Interpolation::kNearest);
  CHECK(n == v);
}

TEST_CASE("transform files round-trip") {
  const auto dir = test::scratch("transform");
  RigidTransform t;
  t.rotation = Eigen::AngleAxisd(0.7, Vec3(1, 2, 2).normalized()).toRotationMatrix();
  t.translation = Vec3(1.5, -2.25, 1e-7);
  write_transform(dir / "t.txt", t);
  const auto back = read_transform(dir / "t.txt");
  CHECK(back.rotation == t.rotation);
  CHECK(back.translation == t.translation);
  std::ofstream(dir / "bad.txt") << "rotation = 2 0 0 0 1 0 0 0 1\ntranslation = 0 0 0\n";
  CHECK_THROWS_AS(read_transform(dir / "bad.txt"), InputError);
}

TEST_CASE("completeness distance table") {
  const Opening s[3] = {Opening::kNot, Opening::kPartial, Opening::kFull};
  const double expect[3][3] = {{0, 0.5, 1}, {0.5, 0, 0.5}, {1, 0.5, 0}};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) CHECK(site_distance(s[i], s[j]) == expect[i][j]);
  }
  CompletenessRating ref;
  for (auto& x : ref.sites) x = Opening::kNot;
  auto rated = ref;
  rated.sites[3] = Opening::kFull;
  CHECK(completeness_score(rated, ref).precision == 87.5);
  ref.sites[5] = Opening::kFull;
  rated = ref;
  rated.sites[5] = Opening::kPartial;
  CHECK(completeness_score(rated, ref).precision == 93.75);
  rated.sites[0].reset();
  CHECK_THROWS_AS(completeness_score(rated, ref), InputError);
}

TEST_CASE("rating files accept the long and short forms") {
  const auto r = parse_rating(parse_keyvalue(
      "ms_l = fully_opened\nms_r = partial\nae_l = not\nae_r = unopened\n"
      "pe_l = full\npe_r = partially\ns_l = not_opened\ns_r = fully\n"));
  for (const auto& s : r.sites) CHECK(s.has_value());
  CHECK(*r.sites[0] == Opening::kFull);
  CHECK(*r.sites[1] == Opening::kPartial);
  CHECK_THROWS_AS(parse_rating(parse_keyvalue("ms_l = maybe\n")), InputError);
}

TEST_CASE("region evaluation intersects both masks with the region") {
  const Geometry g = oracle::cube(8);
  MaskVolume est(g, 0), truth(g, 0), region(g, 0);
  est.at(1, 1, 1) = est.at(6, 6, 6) = 1;
  truth.at(1, 1, 1) = 1;
  for (int i = 0; i < 4; ++i) region.at(i, i, i) = 1;
  const auto r = evaluate_region("roi", est, truth, &region);
  CHECK(r.counts == ConfusionCounts{1, 0, 0, 3});
  CHECK(r.hausdorff_defined);
  CHECK(r.hausdorff == 0.0);
  const auto text = format_report(EvaluationReport{std::nullopt, {r}, {}, {}, std::nullopt});
  CHECK(text.find("[region_roi]") != std::string::npos);
}

}
