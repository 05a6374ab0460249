#include <doctest.h>

#include <sstream>

#include "cli.hpp"
#include "oracles.hpp"
#include "support.hpp"
#include "vict/evaluation.hpp"
#include "vict/keyvalue.hpp"
#include "vict/motion.hpp"
#include "vict/volume_io.hpp"

using namespace vict;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

/// A small phantom shared by the CLI tests.
const fs::path& phantom_dir() {
  static const fs::path dir = [] {
    const auto d = test::scratch("cli_phantom");
    std::ofstream(d / "phantom.cfg") << "[phantom]\ndims = 64 64 64\nspacing_mm = 2 2 2\n"
                                        "[simulation]\nduration_s = 150\n";
    const auto r = run({"phantom", "--config", (d / "phantom.cfg").string(), "--out", (d / "ph").string(),
                        "--seed", "4"});
    REQUIRE(r.code == 0);
    return d / "ph";
  }();
  return dir;
}

std::string cfg() { return (phantom_dir() / "run.cfg").string(); }

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("exit codes") {
  const auto dir = test::scratch("cli_codes");
  CHECK(run({"stats", (phantom_dir() / "trace.jsonl").string()}).code == 0);
  CHECK(run({"stats", (dir / "missing.jsonl").string()}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"estimate", "--bogus"}).code == 2);
  CHECK(run({}).code == 2);
  CHECK(run({"estimate", "--config", cfg(), "--method", "laser", "--out", dir.string()}).code == 2);
  CHECK(run({"estimate", "--config", cfg(), "--levels", "4", "--out", dir.string()}).code == 2);
  CHECK(run({"estimate", "--preop", (dir / "none").string(), "--trace", (dir / "none").string()}).code == 2);
  CHECK(run({"--help"}).code == 0);

  // trajectory without endoscope samples cannot project
  const auto tr = read_trace_file((phantom_dir() / "trace.jsonl").string()).of_tool(Tool::kInstrument);
  write_trace_file((dir / "instrument_only.jsonl").string(), tr);
  const auto r = run({"estimate", "--config", cfg(), "--method", "trajectory", "--trace",
                      (dir / "instrument_only.jsonl").string(), "--out", (dir / "t").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("endoscope") != std::string::npos);

  // mismatched lattices
  write_volume(dir / "small", MaskVolume(oracle::cube(4), 0));
  CHECK(run({"evaluate", "--config", cfg(), "--mask", (dir / "small").string()}).code == 2);
}

TEST_CASE("stats report matches the preset") {
  const auto r = run({"stats", (phantom_dir() / "trace.jsonl").string()});
  REQUIRE(r.code == 0);
  const auto t = parse_keyvalue(r.out);
  CHECK(std::abs(t.get<double>("instrument.tracking_rate_percent") - 72.0) <= 2.0);
  CHECK(std::abs(t.get<double>("endoscope.sampling_rate_high_hz") - 15.0) <= 0.3);
}

TEST_CASE("estimate writes outputs and reruns bit-identically") {
  const auto dir = test::scratch("cli_estimate");
  for (const char* run_name : {"a", "b"}) {
    REQUIRE(run({"estimate", "--config", cfg(), "--out", (dir / run_name).string()}).code == 0);
  }
  for (const char* f : {"mask.vhdr", "mask.vraw", "vct.vhdr", "vct.vraw", "manifest.txt"}) {
    CAPTURE(f);
    CHECK(test::slurp(dir / "a" / f) == test::slurp(dir / "b" / f));
  }
  const auto m = read_keyvalue_file(dir / "a" / "manifest.txt");
  CHECK(m.get<int>("result.threshold_level") >= 1);
  CHECK(m.count("result") == 1);
  CHECK(m.get<std::string>("inputs.preop_data_crc32") == file_checksum(phantom_dir() / "preop.vraw"));
}

TEST_CASE("evaluate matches library calls exactly") {
  const auto dir = test::scratch("cli_evaluate");
  REQUIRE(run({"estimate", "--config", cfg(), "--out", dir.string()}).code == 0);
  std::ofstream(dir / "r1.txt") << "ms_l = full\nms_r = full\nae_l = partial\nae_r = not\n"
                                   "pe_l = not\npe_r = not\ns_l = full\ns_r = not\n";
  std::ofstream(dir / "ref.txt") << "ms_l = full\nms_r = full\nae_l = full\nae_r = not\n"
                                    "pe_l = not\npe_r = not\ns_l = full\ns_r = not\n";
  const auto r = run({"evaluate", "--config", cfg(), "--mask", (dir / "mask").string(), "--out",
                      (dir / "report.txt").string(), "--rating", (dir / "r1.txt").string(),
                      "--reference-rating", (dir / "ref.txt").string()});
  REQUIRE(r.code == 0);
  CHECK(test::slurp(dir / "report.txt") == r.out);

  const auto preop = read_volume_as<std::int16_t>(phantom_dir() / "preop");
  const auto intraop = read_volume_as<std::int16_t>(phantom_dir() / "intraop");
  const auto roi = read_volume_as<std::uint8_t>(phantom_dir() / "roi");
  const auto est = read_volume_as<std::uint8_t>(dir / "mask");
  const auto truth = ground_truth_removal(preop, intraop);
  const auto tissue = threshold_mask(preop, kTissueThresholdHu);
  MaskVolume in(tissue.geometry(), 0), out(tissue.geometry(), 0);
  for (std::size_t v = 0; v < in.size(); ++v) {
    in[v] = tissue[v] && roi[v];
    out[v] = tissue[v] && !roi[v];
  }
  EvaluationReport rep;
  rep.stats = compute_stats(read_trace_file((phantom_dir() / "trace.jsonl").string()).of_tool(Tool::kInstrument));
  rep.regions = {evaluate_region("head", est, truth, &tissue), evaluate_region("roi", est, truth, &in),
                 evaluate_region("non-roi", est, truth, &out)};
  rep.rating_names = {"r1.txt"};
  rep.completeness = {completeness_score(read_rating_file(dir / "r1.txt"), read_rating_file(dir / "ref.txt"))};
  rep.completeness_overall = rep.completeness[0].precision;
  CHECK(r.out == format_report(rep));
  CHECK(rep.completeness[0].precision == 93.75);

  // a perfect estimate
  write_volume(dir / "perfect", truth);
  const auto p = parse_keyvalue(run({"evaluate", "--config", cfg(), "--mask", (dir / "perfect").string()}).out);
  CHECK(p.get<double>("region_head.dsc") == 1.0);
  CHECK(p.get<double>("region_head.precision") == 1.0);
  CHECK(p.get<double>("region_head.recall") == 1.0);
  CHECK(p.get<double>("region_head.hausdorff_mm") == 0.0);

  // an empty estimate
  write_volume(dir / "empty", MaskVolume(truth.geometry(), 0));
  const auto e = parse_keyvalue(run({"evaluate", "--config", cfg(), "--mask", (dir / "empty").string()}).out);
  CHECK(e.get<double>("region_head.recall") == 0.0);
  CHECK(e.get<bool>("region_head.precision_degenerate"));
  CHECK(e.get<bool>("region_head.fscore_degenerate"));
  CHECK_FALSE(e.get<bool>("region_head.hausdorff_defined"));
}

TEST_CASE("replay at infinite speed equals estimate") {
  const auto dir = test::scratch("cli_replay");
  for (const char* method : {"tip", "body"}) {
    CAPTURE(method);
    const auto b = dir / (std::string("b_") + method);
    const auto s = dir / (std::string("s_") + method);
    REQUIRE(run({"estimate", "--config", cfg(), "--method", method, "--out", b.string()}).code == 0);
    REQUIRE(run({"replay", "--config", cfg(), "--method", method, "--speed", "inf", "--out", s.string()}).code == 0);
    CHECK(test::slurp(b / "vct.vraw") == test::slurp(s / "vct.vraw"));
    CHECK(test::slurp(b / "mask.vraw") == test::slurp(s / "mask.vraw"));
    CHECK(test::slurp(b / "vct.vhdr") == test::slurp(s / "vct.vhdr"));
    const auto lat = read_keyvalue_file(s / "latency.txt");
    CHECK(lat.get<std::size_t>("latency.samples") > 0);
  }
  // the revisions log carries no timings, so it is reproducible too
  REQUIRE(run({"replay", "--config", cfg(), "--speed", "inf", "--out", (dir / "again").string()}).code == 0);
  CHECK(test::slurp(dir / "s_tip" / "revisions.txt") == test::slurp(dir / "again" / "revisions.txt"));
}

TEST_CASE("replay of an empty trace makes no revisions") {
  const auto dir = test::scratch("cli_empty");
  std::ofstream(dir / "empty.jsonl").flush();
  const auto r = run({"replay", "--config", cfg(), "--trace", (dir / "empty.jsonl").string(), "--speed", "inf",
                      "--out", dir.string()});
  CHECK(r.code == 0);
  const auto lat = read_keyvalue_file(dir / "latency.txt");
  CHECK(lat.get<int>("latency.revisions") == 0);
  CHECK(test::slurp(dir / "vct.vraw") == test::slurp(phantom_dir() / "preop.vraw"));
}

TEST_CASE("real-time replay on a 256 cubed grid misses no deadline") {
  const auto dir = test::scratch("cli_realtime");
  std::ofstream(dir / "phantom.cfg") << "[simulation]\nduration_s = 20\n";
  REQUIRE(run({"phantom", "--config", (dir / "phantom.cfg").string(), "--dims", "256", "--spacing", "0.5",
               "--out", (dir / "ph").string()})
              .code == 0);
  REQUIRE(run({"replay", "--config", (dir / "ph" / "run.cfg").string(), "--speed", "1", "--out",
               (dir / "out").string()})
              .code == 0);
  const auto lat = read_keyvalue_file(dir / "out" / "latency.txt");
  MESSAGE("p99 latency " << lat.get<double>("latency.latency_p99_ms") << " ms, budget "
                         << lat.get<double>("latency.budget_ms") << " ms");
  CHECK(lat.get<int>("latency.missed_deadlines") == 0);
}

}
