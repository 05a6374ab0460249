// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "cli.hpp"
#include "oracles.hpp"
#include "support.hpp"
#include "vict/evaluation.hpp"
#include "vict/keyvalue.hpp"
#include "vict/phantom.hpp"
#include "vict/vct.hpp"

using namespace vict;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

Outcome metric_oracle() {
  std::mt19937_64 rng(1001);
  const Geometry g = oracle::cube(16);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto a = oracle::random_mask(g, rng, 0.0, trial % 10 == 0 ? 0.002 : 0.6);
    const auto b = oracle::random_mask(g, rng, 0.0, trial % 7 == 0 ? 0.002 : 0.6);
    const auto c = confusion(a, b);
    const auto r = oracle::set_confusion(a, b);
    if (!(c == r)) {
      ++mismatches;
      continue;
    }
    const auto m = metrics(c);
    const double tp = static_cast<double>(r.tp), fp = static_cast<double>(r.fp), fn = static_cast<double>(r.fn);
    auto close = [](double x, double y) { return std::abs(x - y) <= 1e-12; };
    const bool ok_p = r.tp + r.fp == 0 ? m.precision_degenerate : close(m.precision, tp / (tp + fp));
    const bool ok_r = r.tp + r.fn == 0 ? m.recall_degenerate : close(m.recall, tp / (tp + fn));
    const bool ok_d = 2 * r.tp + r.fp + r.fn == 0 ? m.dsc_degenerate : close(m.dsc, 2 * tp / (2 * tp + fp + fn));
    const bool ok_f = r.tp == 0 ? (m.fscore == 0.0) : close(m.fscore, 2 * tp / (2 * tp + fp + fn));
    mismatches += !(ok_p && ok_r && ok_d && ok_f);
  }
  return {mismatches == 0, "1000 pairs on 16^3, " + std::to_string(mismatches) + " mismatches"};
}

Outcome hausdorff_oracle() {
  std::mt19937_64 rng(1002);
  std::size_t bad = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Geometry g = oracle::cube(20, 1.0 + 0.1 * (trial % 5));
    g.spacing[1] *= 0.75;
    const auto a = oracle::sparse_mask(g, rng, 1 + rng() % 500);
    const auto b = oracle::sparse_mask(g, rng, 1 + rng() % 500);
    const double h = hausdorff(a, b);
    bad += h != oracle::hausdorff(a, b);
    bad += h != hausdorff(b, a);
    bad += hausdorff(a, a) != 0.0;
  }
  return {bad == 0, "100 cases, <=500 voxels per mask, " + std::to_string(bad) + " failures"};
}

Outcome gpr_oracle() {
  std::mt19937_64 rng(1003);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::uniform_real_distribution<double> ls(1.0, 4.0);
  double worst_mean = 0.0, worst_cov = 0.0, worst_interp = 0.0, min_eig = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 5 + static_cast<int>(rng() % 46);
    GprInputs x(n, 4);
    GprTargets y(n, 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = u(rng);
    KernelSpec k;
    k.signal_variance = 0.5 + u(rng);
    for (auto& l : k.length_scales) l = ls(rng);
    k.noise_variance = 0.01 + 0.01 * u(rng);
    const auto model = GprModel::fit(x, y, k);
    GprInputs xq(12, 4);
    for (Eigen::Index i = 0; i < xq.size(); ++i) xq.data()[i] = u(rng);
    const auto p = model.predict(xq);
    const auto ref = oracle::dense_gpr(k, x, y, xq);
    for (Eigen::Index i = 0; i < p.mean.rows(); ++i) {
      for (Eigen::Index c = 0; c < 3; ++c) {
        const double d = std::abs(p.mean(i, c) - ref.mean(i, c));
        worst_mean = std::max(worst_mean, d / std::max(1.0, std::abs(ref.mean(i, c))));
      }
    }
    for (Eigen::Index i = 0; i < p.covariance.size(); ++i) {
      const double d = std::abs(p.covariance.data()[i] - ref.cov.data()[i]);
      worst_cov = std::max(worst_cov, d / std::max(k.signal_variance, std::abs(ref.cov.data()[i])));
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p.covariance);
    min_eig = std::min(min_eig, es.eigenvalues().minCoeff());

    KernelSpec clean = k;
    clean.noise_variance = 0.0;
    const auto exact = GprModel::fit(x, y, clean);
    worst_interp = std::max(worst_interp, (exact.predict_mean(x) - y).cwiseAbs().maxCoeff());
  }
  std::ostringstream d;
  d << "50 problems: mean rel " << worst_mean << ", cov rel " << worst_cov << ", interpolation "
    << worst_interp << ", min eig " << min_eig;
  return {worst_mean <= 1e-8 && worst_cov <= 1e-8 && worst_interp <= 1e-6 && min_eig >= -1e-8, d.str()};
}

Outcome threshold_oracle() {
  std::mt19937_64 rng(1004);
  std::size_t bad = 0, fallbacks = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int levels = trial % 4 == 0 ? 8 + static_cast<int>(rng() % 64) : 256;
    std::vector<std::uint64_t> v(static_cast<std::size_t>(levels), 0);
    switch (trial % 4) {
      case 0:
      case 1:
        for (int d = 1; d < levels; ++d) v[static_cast<std::size_t>(d)] = static_cast<std::uint64_t>(4000.0 * std::exp(-0.05 * d * (1 + rng() % 3))) + rng() % 5;
        break;
      case 2:
        for (int d = 1; d < levels; ++d) v[static_cast<std::size_t>(d)] = rng() % 100;
        break;
      default:
        v[static_cast<std::size_t>(1 + rng() % static_cast<std::uint64_t>(levels - 1))] = 1 + rng() % 3;
        break;
    }
    DensityHistogram h;
    h.levels = levels;
    h.v = v;
    double s = 0.0;
    for (int d = 1; d < levels; ++d) s += static_cast<double>(v[static_cast<std::size_t>(d)]);
    h.th = s / (levels - 1);
    const auto got = auto_threshold(h);
    const auto want = oracle::scan_threshold(v);
    bad += got.level != want.level || got.fallback != want.fallback;
    fallbacks += got.fallback;
    for (std::uint64_t c : {2u, 3u, 10u, 977u}) {
      DensityHistogram hs = h;
      for (auto& x : hs.v) x *= c;
      hs.th = h.th * static_cast<double>(c);
      const auto sc = auto_threshold(hs);
      bad += sc.level != got.level || sc.fallback != got.fallback;
    }
  }
  return {bad == 0 && fallbacks > 0, "100 histograms (" + std::to_string(fallbacks) + " fallback), " +
                                         std::to_string(bad) + " mismatches incl. scaling"};
}

Outcome synthesis_oracle() {
  std::mt19937_64 rng(1005);
  std::size_t bad = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Geometry g = oracle::cube(12 + static_cast<int>(rng() % 10));
    HuVolume v(g);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<std::int16_t>(static_cast<int>(rng() % 65536) - 32768);
    const auto m = oracle::random_mask(g, rng, 0.0, 0.2);
    const auto out = synthesize(v, m);
    int mn = 1 << 20;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (m[i]) mn = std::min(mn, static_cast<int>(v[i]));
    }
    for (std::size_t i = 0; i < v.size(); ++i) bad += out.volume[i] != (m[i] ? mn : v[i]);
  }
  return {bad == 0, "100 pairs, " + std::to_string(bad) + " voxel mismatches"};
}

Outcome phantom_table2() {
  const auto t0 = Clock::now();
  bool ok = true;
  std::ostringstream d;
  d.precision(3);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto spec = default_phantom_spec();
    spec.seed = seed;
    const auto ph = generate_phantom(spec);
    auto sim = table1_preset();
    sim.seed = seed;
    const auto tr = simulate_trace(ph, sim);
    const Geometry& g = ph.preop.geometry();
    const auto o = resolve_options(tr, g, EstimationOptions{});
    const auto tissue = threshold_mask(ph.preop, kTissueThresholdHu);
    MaskVolume region(g, 0);
    for (std::size_t v = 0; v < region.size(); ++v) region[v] = ph.roi[v] && tissue[v];
    const auto truth = ground_truth_removal(ph.preop, ph.intraop);
    const auto tip = metrics(confusion(method_tip(tr, g, o).mask.mask, truth, &region));
    const auto traj = metrics(confusion(method_trajectory(tr, g, o).mask.mask, truth, &region));
    ok = ok && tip.dsc >= 0.80 && traj.dsc >= 0.80 && traj.recall > tip.recall;
    d << (seed > 1 ? "; " : "") << "seed " << seed << " tip dsc " << tip.dsc << " rec " << tip.recall
      << " traj dsc " << traj.dsc << " rec " << traj.recall;
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 300.0;
  d << "; " << fmt("%.1f s", secs);
  return {ok, d.str()};
}

Outcome realtime() {
  const auto dir = test::scratch("acceptance_realtime");
  std::ostringstream sink;
  if (cli::run({"phantom", "--dims", "256", "--spacing", "0.5", "--out", (dir / "ph").string()}, sink, sink) != 0) {
    return {false, "phantom generation failed: " + sink.str()};
  }
  bool ok = true;
  std::ostringstream d;
  d.precision(3);
  for (const char* method : {"tip", "body", "trajectory"}) {
    const auto out = dir / method;
    std::ostringstream o, e;
    const int code = cli::run({"replay", "--config", (dir / "ph" / "run.cfg").string(), "--method", method,
                               "--speed", "inf", "--out", out.string()},
                              o, e);
    if (code != 0) {
      ok = false;
      d << method << " failed (" << e.str() << "); ";
      continue;
    }
    const auto lat = read_keyvalue_file(out / "latency.txt");
    const double per_sample = lat.get<double>("latency.mean_per_instrument_sample_ms");
    const double factor = lat.get<double>("latency.realtime_factor");
    ok = ok && per_sample < 6.6 && factor >= 10.0;
    d << method << " " << per_sample << " ms/sample " << factor << "x; ";
  }
  d << "256^3, 400 s trace, cost per instrument sample incl. checkpoints";
  return {ok, d.str()};
}

Outcome completeness() {
  const Opening s[3] = {Opening::kNot, Opening::kPartial, Opening::kFull};
  const double table[3][3] = {{0, 0.5, 1}, {0.5, 0, 0.5}, {1, 0.5, 0}};
  bool ok = true;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) ok = ok && site_distance(s[i], s[j]) == table[i][j];
  }
  CompletenessRating ref;
  for (auto& x : ref.sites) x = Opening::kNot;
  auto rated = ref;
  rated.sites[2] = Opening::kFull;
  const double p = completeness_score(rated, ref).precision;
  ok = ok && p == 87.5;
  return {ok, "3x3 table exact, one maximal error of 8 sites -> " + fmt("%.2f", p)};
}

Outcome determinism() {
  const auto dir = test::scratch("acceptance_determinism");
  std::ostringstream sink;
  if (cli::run({"phantom", "--seed", "6", "--out", (dir / "ph").string()}, sink, sink) != 0) {
    return {false, "phantom generation failed"};
  }
  const auto cfg = (dir / "ph" / "run.cfg").string();
  bool ok = true;
  std::ostringstream d;
  for (const char* method : {"tip", "trajectory", "body"}) {
    auto go = [&](std::vector<std::string> args) {
      std::ostringstream o, e;
      const int code = cli::run(args, o, e);
      if (code != 0) d << method << ": " << e.str();
      return code == 0;
    };
    const auto a = dir / (std::string(method) + "_a");
    const auto b = dir / (std::string(method) + "_b");
    const auto r = dir / (std::string(method) + "_replay");
    ok = ok && go({"estimate", "--config", cfg, "--method", method, "--out", a.string()});
    ok = ok && go({"estimate", "--config", cfg, "--method", method, "--out", b.string()});
    ok = ok && go({"replay", "--config", cfg, "--method", method, "--speed", "inf", "--out", r.string()});
    bool same = true;
    for (const char* f : {"mask.vraw", "vct.vraw", "vct.vhdr", "manifest.txt"}) {
      same = same && test::slurp(a / f) == test::slurp(b / f);
    }
    for (const char* f : {"mask.vraw", "vct.vraw"}) same = same && test::slurp(a / f) == test::slurp(r / f);
    ok = ok && same;
    d << method << (same ? " identical; " : " DIFFERS; ");
  }
  d << "estimate twice + replay at inf speed";
  return {ok, d.str()};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"metric oracle equivalence", metric_oracle},
      {"hausdorff correctness", hausdorff_oracle},
      {"gpr correctness", gpr_oracle},
      {"threshold rule", threshold_oracle},
      {"synthesis rule", synthesis_oracle},
      {"phantom analog of the precision table", phantom_table2},
      {"real-time contract", realtime},
      {"completeness scoring", completeness},
      {"determinism", determinism},
  };
  const double limits[] = {10, 30, 10, 5, 0, 300, 0, 0, 0};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = seconds_since(t0);
    if (limits[i] > 0 && secs >= limits[i]) {
      o.pass = false;
      o.detail += fmt(" [over the %.0f s limit]", limits[i]);
    }
    failed += !o.pass;
    std::printf("criterion %zu %s: %s (%.2f s) %s\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first, secs,
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
