#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <optional>
#include <ostream>
#include <thread>

#include "vict/evaluation.hpp"
#include "vict/keyvalue.hpp"
#include "vict/phantom.hpp"
#include "vict/removal.hpp"
#include "vict/vct.hpp"
#include "vict/volume_io.hpp"

namespace vict::cli {

namespace fs = std::filesystem;

namespace {

struct RunConfig {
  std::string preop;
  std::string trace;
  std::string geometry;
  std::string intraop;
  std::string transform;
  std::string roi;
  std::string mask;
  std::vector<std::string> ratings;
  std::string reference_rating;
  Method method = Method::kTip;
  EstimationOptions est;
  std::int16_t hu_threshold = kTissueThresholdHu;
  std::string out = ".";
  std::uint64_t seed = 1;
  bool seed_set = false;
  std::size_t checkpoint_every = kCheckpointInterval;
  std::string speed = "1";
  std::size_t snapshot_every = 0;
  KeyValueTree tree;
};

std::string resolve_path(const fs::path& base, const std::string& p) {
  if (p.empty()) return p;
  const fs::path path(p);
  return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

void load_config(const std::string& file, RunConfig& cfg) {
  cfg.tree = read_keyvalue_file(file);
  const fs::path base = fs::path(file).parent_path();
  const auto& t = cfg.tree;
  auto path_of = [&](const char* key, std::string& out) {
    if (const auto v = t.get_optional<std::string>(std::string("inputs.") + key)) {
      out = resolve_path(base, *v);
    }
  };
  path_of("preop", cfg.preop);
  path_of("trace", cfg.trace);
  path_of("geometry", cfg.geometry);
  path_of("intraop", cfg.intraop);
  path_of("transform", cfg.transform);
  path_of("roi", cfg.roi);
  path_of("mask", cfg.mask);
  path_of("reference_rating", cfg.reference_rating);
  if (const auto v = t.get_optional<std::string>("inputs.ratings")) {
    std::istringstream in(*v);
    for (std::string p; in >> p;) cfg.ratings.push_back(resolve_path(base, p));
  }

  if (const auto sec = t.get_child_optional("estimation")) {
    const auto& s = *sec;
    auto real = [&](const char* key) -> std::optional<double> {
      if (!s.count(key)) return std::nullopt;
      return get_reals(s, key, 1)[0];
    };
    if (s.count("method")) cfg.method = parse_method(get_string(s, "method"));
    if (s.count("levels")) cfg.est.levels = static_cast<int>(get_ints(s, "levels", 1)[0]);
    if (auto v = real("bandwidth_s")) cfg.est.bandwidth = *v;
    if (auto v = real("step_s")) cfg.est.step = *v;
    if (auto v = real("max_interval_s")) cfg.est.max_interval = *v;
    if (auto v = real("noise_sigma_mm")) cfg.est.noise.sigma = *v;
    if (auto v = real("pair_window_s")) cfg.est.projection.pair_window = *v;
    if (auto v = real("fov_half_angle_deg")) cfg.est.projection.fov_half_angle = *v * M_PI / 180.0;
    if (s.count("max_training")) {
      cfg.est.max_training = static_cast<std::size_t>(get_ints(s, "max_training", 1)[0]);
    }
    if (s.count("body_any_touch")) cfg.est.body_any_touch = s.get<bool>("body_any_touch");
    if (s.count("kernel_length_scales")) {
      KernelSpec k;
      const auto l = get_reals(s, "kernel_length_scales", 4);
      std::copy(l.begin(), l.end(), k.length_scales.begin());
      k.signal_variance = real("kernel_signal_variance").value_or(1.0);
      k.noise_variance = real("kernel_noise_variance").value_or(cfg.est.noise.sigma * cfg.est.noise.sigma);
      k.validate();
      cfg.est.kernel = k;
    }
  }
  if (const auto v = t.get_optional<std::string>("evaluation.hu_threshold")) {
    cfg.hu_threshold = static_cast<std::int16_t>(get_ints(t.get_child("evaluation"), "hu_threshold", 1)[0]);
  }
  if (const auto sec = t.get_child_optional("run")) {
    const auto& s = *sec;
    if (s.count("out")) cfg.out = resolve_path(base, get_string(s, "out"));
    if (s.count("seed")) {
      cfg.seed = static_cast<std::uint64_t>(get_ints(s, "seed", 1)[0]);
      cfg.seed_set = true;
    }
    if (s.count("checkpoint_every")) {
      cfg.checkpoint_every = static_cast<std::size_t>(get_ints(s, "checkpoint_every", 1)[0]);
    }
    if (s.count("speed")) cfg.speed = get_string(s, "speed");
  }
}

void require(const std::string& value, const char* what) {
  if (value.empty()) throw InputError(std::string("missing input: ") + what);
}

double parse_speed(const std::string& s) {
  if (s == "inf" || s == "max" || s == "0") return std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || !(v > 0.0)) throw InputError("--speed must be a positive number or inf");
  return v;
}

void put_options(KeyValueWriter& w, Method method, const EstimationOptions& o) {
  w.section("parameters");
  w.put("method", method_name(method));
  w.put("levels", o.levels);
  w.put("bandwidth_s", o.bandwidth.value_or(0.0));
  w.put("max_interval_s", o.max_interval);
  w.put("noise_sigma_mm", o.noise.sigma);
  w.put("pair_window_s", o.projection.pair_window);
  if (o.projection.fov_half_angle) w.put("fov_half_angle_rad", *o.projection.fov_half_angle);
  if (method == Method::kTrajectory) {
    w.put("step_s", o.step.value_or(0.0));
    w.put("max_training", o.max_training);
  }
  if (method == Method::kBody) w.put("body_any_touch", o.body_any_touch);
}

void put_input(KeyValueWriter& w, const std::string& key, const fs::path& p) {
  w.put(key, p.string());
  if (p.extension() == ".vhdr" || p.extension() == ".vraw" || !fs::exists(p)) {
    w.put(key + "_header_crc32", file_checksum(header_path(p)));
    w.put(key + "_data_crc32", file_checksum(raw_path(p)));
  } else {
    w.put(key + "_crc32", file_checksum(p));
  }
}

void put_output(KeyValueWriter& w, const std::string& key, const fs::path& stem) {
  w.put(key, stem.filename().string());
  w.put(key + "_data_crc32", file_checksum(raw_path(stem)));
}

struct Loaded {
  HuVolume preop;
  MotionTrace trace;
  InstrumentGeometry geometry;
  EstimationOptions opts;
};

Loaded load_estimation_inputs(const RunConfig& cfg) {
  require(cfg.preop, "preop volume (--preop or [inputs] preop)");
  require(cfg.trace, "trace (--trace or [inputs] trace)");
  Loaded l{read_volume_as<std::int16_t>(cfg.preop), read_trace_file(cfg.trace), {}, {}};
  if (cfg.method == Method::kBody) {
    require(cfg.geometry, "instrument geometry (--geometry or [inputs] geometry)");
    l.geometry = read_instrument_geometry(cfg.geometry);
  }
  l.opts = l.trace.empty() ? cfg.est : resolve_options(l.trace, l.preop.geometry(), cfg.est);
  if (!l.opts.bandwidth) l.opts.bandwidth = 1.0;
  if (!l.opts.step) l.opts.step = 0.05;
  return l;
}

void write_manifest_inputs(KeyValueWriter& w, const RunConfig& cfg, const char* command) {
  w.section("run");
  w.put("command", command);
  w.put("seed", static_cast<long long>(cfg.seed));
  w.section("inputs");
  put_input(w, "preop", cfg.preop);
  put_input(w, "trace", cfg.trace);
  if (cfg.method == Method::kBody) put_input(w, "geometry", cfg.geometry);
}

int cmd_stats(const std::string& trace_path, double window, const std::string& out_path,
              std::ostream& out) {
  const auto trace = read_trace_file(trace_path);
  if (trace.empty()) throw InputError(trace_path + ": trace is empty");
  KeyValueWriter w;
  auto emit = [&](const std::string& name, const MotionTrace& t) {
    if (t.empty()) return;
    const auto st = compute_stats(t, window);
    w.section(name);
    w.put("sampling_rate_high_hz", st.sampling_rate_high);
    w.put("sampling_rate_low_hz", st.sampling_rate_low);
    w.put("tracking_rate_percent", st.tracking_rate);
    w.put("duration_s", st.duration);
    w.put("valid_count", st.valid_count);
    w.put("total_count", st.total_count);
  };
  emit("instrument", trace.of_tool(Tool::kInstrument));
  emit("endoscope", trace.of_tool(Tool::kEndoscope));
  if (!out_path.empty()) w.write(out_path);
  out << w.text();
  return 0;
}

int cmd_estimate(const RunConfig& cfg, std::ostream& out) {
  const auto in = load_estimation_inputs(cfg);
  const Geometry& ct = in.preop.geometry();
  Estimate est;
  switch (cfg.method) {
    case Method::kTip: est = method_tip(in.trace, ct, in.opts); break;
    case Method::kTrajectory: est = method_trajectory(in.trace, ct, in.opts); break;
    case Method::kBody: est = method_body(in.trace, ct, in.geometry, in.opts); break;
  }
  const auto vct = synthesize(in.preop, est.mask.mask);
  const fs::path dir(cfg.out);
  fs::create_directories(dir);
  write_volume(dir / "mask", est.mask.mask);
  write_volume(dir / "vct", vct.volume);

  KeyValueWriter w;
  write_manifest_inputs(w, cfg, "estimate");
  put_options(w, cfg.method, in.opts);
  w.section("result");
  w.put("threshold_level", est.threshold.level);
  w.put("threshold_fallback", est.threshold.fallback);
  for (std::size_t i = 0; i < est.tool_thresholds.size(); ++i) {
    w.put("tool_threshold_level_" + std::to_string(i + 1), est.tool_thresholds[i].level);
    w.put("tool_threshold_fallback_" + std::to_string(i + 1), est.tool_thresholds[i].fallback);
  }
  w.put("histogram_max_density", est.histogram.max_density);
  w.put("histogram_th", est.histogram.th);
  w.put("mask_voxels", count_nonzero(est.mask.mask));
  w.put("replacement_defined", vct.replacement.has_value());
  w.put("replacement_hu", static_cast<int>(vct.replacement.value_or(0)));
  if (cfg.method == Method::kTrajectory) {
    w.put("dense_points", est.dense_points);
    w.put("gpr_jitter", est.jitter);
    if (est.kernel) {
      w.put("kernel_signal_variance", est.kernel->signal_variance);
      w.put_reals("kernel_length_scales", {est.kernel->length_scales.begin(), est.kernel->length_scales.end()});
      w.put("kernel_noise_variance", est.kernel->noise_variance);
    }
  }
  w.section("outputs");
  put_output(w, "mask", dir / "mask");
  put_output(w, "vct", dir / "vct");
  w.write(dir / "manifest.txt");

  out << "method = " << method_name(cfg.method) << "\n"
      << "threshold_level = " << est.threshold.level << "\n"
      << "threshold_fallback = " << (est.threshold.fallback ? "true" : "false") << "\n"
      << "mask_voxels = " << count_nonzero(est.mask.mask) << "\n"
      << "output = " << dir.string() << "\n";
  return 0;
}

struct LatencyReport {
  std::size_t samples = 0;
  std::size_t instrument_samples = 0;
  double total_cost_s = 0.0;
  double finish_cost_s = 0.0;
  double mean_ms = 0.0;
  double mean_per_instrument_ms = 0.0;
  double p50_ms = 0.0;
  double p99_ms = 0.0;
  double max_ms = 0.0;
  double latency_p99_ms = 0.0;
  double budget_ms = 0.0;
  std::size_t missed_deadlines = 0;
  double realtime_factor = 0.0;
};

double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size()))) ;
  return v[std::min(v.size() - 1, k == 0 ? 0 : k - 1)];
}

int cmd_replay(const RunConfig& cfg, std::ostream& out) {
  const auto in = load_estimation_inputs(cfg);
  const double speed = parse_speed(cfg.speed);
  const fs::path dir(cfg.out);
  fs::create_directories(dir);
  if (cfg.snapshot_every > 0) fs::create_directories(dir / "snapshots");

  VctSession session(in.preop, cfg.method, in.geometry, in.opts, cfg.checkpoint_every);
  const auto& samples = in.trace.samples;
  using Clock = std::chrono::steady_clock;

  struct Item {
    std::size_t index;
    Clock::time_point arrival;
  };
  std::mutex m;
  std::condition_variable cv;
  std::deque<Item> queue;
  bool produced = false;

  const auto start = Clock::now();
  std::thread producer([&] {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (std::isfinite(speed)) {
        const double offset = (samples[i].t - samples.front().t) / speed;
        std::this_thread::sleep_until(start + std::chrono::duration_cast<Clock::duration>(
                                                  std::chrono::duration<double>(offset)));
      }
      {
        std::lock_guard lock(m);
        queue.push_back({i, Clock::now()});
      }
      cv.notify_one();
    }
    {
      std::lock_guard lock(m);
      produced = true;
    }
    cv.notify_one();
  });

  std::vector<double> cost_ms;
  std::vector<double> latency_ms;
  cost_ms.reserve(samples.size());
  latency_ms.reserve(samples.size());
  KeyValueWriter revisions;
  std::size_t last_mask = 0;
  std::optional<std::int16_t> last_repl;
  std::exception_ptr failure;
  while (true) {
    Item item{};
    {
      std::unique_lock lock(m);
      cv.wait(lock, [&] { return !queue.empty() || produced; });
      if (queue.empty()) break;
      item = queue.front();
      queue.pop_front();
    }
    if (failure) continue;
    try {
      const auto t0 = Clock::now();
      session.update(std::span<const MotionSample>(&samples[item.index], 1));
      const auto t1 = Clock::now();
      cost_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      latency_ms.push_back(std::chrono::duration<double, std::milli>(t1 - item.arrival).count());
      const auto snap = session.snapshot();
      if (snap.mask_voxels() != last_mask || snap.replacement() != last_repl) {
        revisions.section("revision_" + std::to_string(snap.revision()));
        revisions.put("t_s", samples[item.index].t);
        revisions.put("mask_voxels", snap.mask_voxels());
        if (snap.replacement()) revisions.put("replacement_hu", static_cast<int>(*snap.replacement()));
        last_mask = snap.mask_voxels();
        last_repl = snap.replacement();
      }
      if (cfg.snapshot_every > 0 && snap.revision() % cfg.snapshot_every == 0) {
        char name[32];
        std::snprintf(name, sizeof(name), "rev_%08llu", static_cast<unsigned long long>(snap.revision()));
        write_volume(dir / "snapshots" / name, snap.materialize());
      }
    } catch (...) {
      failure = std::current_exception();
    }
  }
  producer.join();
  if (failure) std::rethrow_exception(failure);

  LatencyReport lr;
  lr.samples = samples.size();
  for (const auto& s : samples) lr.instrument_samples += s.tool == Tool::kInstrument;
  if (!samples.empty()) {
    const auto t0 = Clock::now();
    session.finish();
    lr.finish_cost_s = std::chrono::duration<double>(Clock::now() - t0).count();
  }
  for (double c : cost_ms) lr.total_cost_s += c / 1000.0;
  lr.total_cost_s += lr.finish_cost_s;
  if (lr.samples > 0) lr.mean_ms = 1000.0 * lr.total_cost_s / static_cast<double>(lr.samples);
  if (lr.instrument_samples > 0) {
    lr.mean_per_instrument_ms = 1000.0 * lr.total_cost_s / static_cast<double>(lr.instrument_samples);
  }
  lr.p50_ms = percentile(cost_ms, 0.50);
  lr.p99_ms = percentile(cost_ms, 0.99);
  lr.max_ms = cost_ms.empty() ? 0.0 : *std::max_element(cost_ms.begin(), cost_ms.end());
  lr.latency_p99_ms = percentile(latency_ms, 0.99);
  const double interval = median_interval(in.trace, Tool::kInstrument);
  lr.budget_ms = 1000.0 * (interval > 0.0 ? interval : 1.0 / 15.0) / (std::isfinite(speed) ? speed : 1.0);
  for (double l : (std::isfinite(speed) ? latency_ms : cost_ms)) lr.missed_deadlines += l > lr.budget_ms;
  const double duration = samples.empty() ? 0.0 : samples.back().t - samples.front().t;
  lr.realtime_factor = lr.total_cost_s > 0.0 ? duration / lr.total_cost_s : 0.0;

  const auto final_state = session.current();
  write_volume(dir / "mask", final_state.mask);
  write_volume(dir / "vct", final_state.volume);
  revisions.write(dir / "revisions.txt");

  KeyValueWriter lat;
  lat.section("latency");
  lat.put("speed", cfg.speed);
  lat.put("samples", lr.samples);
  lat.put("instrument_samples", lr.instrument_samples);
  lat.put("revisions", static_cast<long long>(session.revision()));
  lat.put("checkpoints", session.stream().checkpoints());
  lat.put("total_cost_s", lr.total_cost_s);
  lat.put("finish_cost_s", lr.finish_cost_s);
  lat.put("mean_ms", lr.mean_ms);
  lat.put("mean_per_instrument_sample_ms", lr.mean_per_instrument_ms);
  lat.put("p50_ms", lr.p50_ms);
  lat.put("p99_ms", lr.p99_ms);
  lat.put("max_ms", lr.max_ms);
  lat.put("latency_p99_ms", lr.latency_p99_ms);
  lat.put("budget_ms", lr.budget_ms);
  lat.put("missed_deadlines", lr.missed_deadlines);
  lat.put("realtime_factor", lr.realtime_factor);
  lat.write(dir / "latency.txt");

  KeyValueWriter w;
  write_manifest_inputs(w, cfg, "replay");
  put_options(w, cfg.method, in.opts);
  w.put("checkpoint_every", cfg.checkpoint_every);
  w.section("result");
  const auto choice = session.stream().threshold();
  w.put("threshold_level", choice.level);
  w.put("threshold_fallback", choice.fallback);
  w.put("revisions", static_cast<long long>(session.revision()));
  w.put("mask_voxels", count_nonzero(final_state.mask));
  w.put("replacement_defined", final_state.replacement.has_value());
  w.put("replacement_hu", static_cast<int>(final_state.replacement.value_or(0)));
  w.section("outputs");
  put_output(w, "mask", dir / "mask");
  put_output(w, "vct", dir / "vct");
  w.write(dir / "manifest.txt");

  out << lat.text();
  return 0;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& report_path, std::ostream& out) {
  require(cfg.mask, "estimated mask (--mask or [inputs] mask)");
  require(cfg.preop, "preop volume (--preop or [inputs] preop)");
  require(cfg.intraop, "intraop volume (--intraop or [inputs] intraop)");
  const auto estimated = read_volume_as<std::uint8_t>(cfg.mask);
  validate_mask(estimated);
  const auto preop = read_volume_as<std::int16_t>(cfg.preop);
  const auto intraop = read_volume_as<std::int16_t>(cfg.intraop);
  const Geometry& g = preop.geometry();
  require_same_geometry(g, estimated.geometry(), "evaluate: estimated mask vs preop");

  const RigidTransform t = cfg.transform.empty() ? RigidTransform::identity() : read_transform(cfg.transform);
  const bool identity = t.rotation == Mat3::Identity() && t.translation == Vec3::Zero();
  const HuVolume aligned = identity && intraop.geometry() == g
                               ? intraop
                               : resample(intraop, t, g, Interpolation::kTrilinear);
  const MaskVolume truth = ground_truth_removal(preop, aligned, cfg.hu_threshold);

  const MaskVolume tissue = threshold_mask(preop, cfg.hu_threshold);
  EvaluationReport report;
  if (!cfg.trace.empty()) {
    const auto trace = read_trace_file(cfg.trace).of_tool(Tool::kInstrument);
    if (!trace.empty()) report.stats = compute_stats(trace);
  }
  report.regions.push_back(evaluate_region("head", estimated, truth, &tissue));
  if (!cfg.roi.empty()) {
    const auto roi = read_volume_as<std::uint8_t>(cfg.roi);
    validate_mask(roi);
    require_same_geometry(g, roi.geometry(), "evaluate: roi vs preop");
    MaskVolume in_roi(g, 0);
    MaskVolume out_roi(g, 0);
    for (std::size_t v = 0; v < g.voxel_count(); ++v) {
      in_roi[v] = tissue[v] && roi[v];
      out_roi[v] = tissue[v] && !roi[v];
    }
    report.regions.push_back(evaluate_region("roi", estimated, truth, &in_roi));
    report.regions.push_back(evaluate_region("non-roi", estimated, truth, &out_roi));
  }
  if (!cfg.ratings.empty()) {
    require(cfg.reference_rating, "reference rating (--reference-rating)");
    const auto reference = read_rating_file(cfg.reference_rating);
    double sum = 0.0;
    for (const auto& r : cfg.ratings) {
      report.rating_names.push_back(fs::path(r).filename().string());
      report.completeness.push_back(completeness_score(read_rating_file(r), reference));
      sum += report.completeness.back().precision;
    }
    report.completeness_overall = sum / static_cast<double>(cfg.ratings.size());
  }
  const std::string text = format_report(report);
  if (!report_path.empty()) {
    const fs::path p(report_path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw InputError("cannot write " + report_path);
    f << text;
  }
  out << text;
  return 0;
}

int cmd_phantom(const RunConfig& cfg, std::optional<int> dims, std::optional<double> spacing,
                std::ostream& out) {
  PhantomSpec spec = default_phantom_spec();
  if (dims || spacing) {
    spec = default_phantom_spec({dims.value_or(128), dims.value_or(128), dims.value_or(128)},
                                spacing.value_or(1.0));
  }
  spec = parse_phantom_spec(cfg.tree, spec);
  SimulationSpec sim = table1_preset();
  sim = parse_simulation_spec(cfg.tree, sim);
  if (cfg.seed_set) {
    spec.seed = cfg.seed;
    sim.seed = cfg.seed;
  }

  const auto ph = generate_phantom(spec);
  const auto trace = simulate_trace(ph, sim);
  const fs::path dir(cfg.out);
  fs::create_directories(dir);
  write_volume(dir / "preop", ph.preop);
  write_volume(dir / "intraop", ph.intraop);
  write_volume(dir / "truth", ph.truth);
  write_volume(dir / "roi", ph.roi);
  write_trace_file((dir / "trace.jsonl").string(), trace);
  {
    std::ofstream g(dir / "geometry.txt", std::ios::binary);
    if (!g) throw InputError("cannot write " + (dir / "geometry.txt").string());
    g << "# tool, x0, y0, z0, x1, y1, z1, radius (mm, tool frame)\n"
      << format_instrument_geometry(default_instrument_geometry());
  }
  write_transform(dir / "transform.txt", RigidTransform::identity());

  KeyValueWriter run;
  run.section("inputs");
  run.put("preop", std::string("preop.vhdr"));
  run.put("intraop", std::string("intraop.vhdr"));
  run.put("trace", std::string("trace.jsonl"));
  run.put("geometry", std::string("geometry.txt"));
  run.put("transform", std::string("transform.txt"));
  run.put("roi", std::string("roi.vhdr"));
  run.section("estimation");
  run.put("method", std::string("tip"));
  run.section("run");
  run.put("seed", static_cast<long long>(spec.seed));
  run.write(dir / "run.cfg");

  KeyValueWriter w;
  w.section("run");
  w.put("command", std::string("phantom"));
  w.put("phantom_seed", static_cast<long long>(spec.seed));
  w.put("simulation_seed", static_cast<long long>(sim.seed));
  w.section("phantom");
  w.put_reals("dims", {static_cast<double>(spec.geometry.dims[0]), static_cast<double>(spec.geometry.dims[1]),
                       static_cast<double>(spec.geometry.dims[2])});
  w.put("spacing_mm", spec.geometry.spacing);
  w.put("carve_voxels", count_nonzero(ph.carve));
  w.put("truth_voxels", count_nonzero(ph.truth));
  w.put("roi_voxels", count_nonzero(ph.roi));
  w.section("simulation");
  w.put("sampling_rate_hz", sim.sampling_rate);
  w.put("tracking_rate", sim.tracking_rate);
  w.put("noise_sigma_mm", sim.noise.sigma);
  w.put("duration_s", sim.duration);
  w.put("depth_bias_mm", sim.depth_bias_mm);
  w.put("transit_speed_mm_s", sim.transit_speed);
  w.put("samples", trace.size());
  w.section("outputs");
  for (const char* name : {"preop", "intraop", "truth", "roi"}) put_output(w, name, dir / name);
  w.put("trace_crc32", file_checksum(dir / "trace.jsonl"));
  w.write(dir / "manifest.txt");

  out << "truth_voxels = " << count_nonzero(ph.truth) << "\n"
      << "samples = " << trace.size() << "\n"
      << "output = " << dir.string() << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Virtual intraoperative CT from tracked instrument motion"};
  app.require_subcommand(1);

  std::string config_path;
  std::string method;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> levels;
  std::optional<int> hu_threshold;
  bool body_any_touch = false;
  RunConfig flags;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Sectioned key = value run configuration");
    sub->add_option("--out", out_dir, "Output directory (report file for evaluate)");
    sub->add_option("--seed", seed, "Seed recorded in the manifest and used by the phantom");
  };
  auto estimation_flags = [&](CLI::App* sub) {
    sub->add_option("--method", method, "tip | trajectory | body");
    sub->add_option("--levels", levels, "Histogram levels");
    sub->add_flag("--body-any-touch", body_any_touch, "Body method: mask every touched voxel");
    sub->add_option("--preop", flags.preop, "Preoperative CT volume");
    sub->add_option("--trace", flags.trace, "Motion trace");
    sub->add_option("--geometry", flags.geometry, "Instrument geometry");
  };

  std::string stats_trace;
  double window = 1.0;
  auto* stats = app.add_subcommand("stats", "Sampling and tracking statistics of a trace");
  stats->add_option("trace", stats_trace, "Trace file")->required();
  stats->add_option("--window", window, "Sliding window (s)");
  stats->add_option("--out", out_dir, "Write the report to this file too");

  auto* estimate = app.add_subcommand("estimate", "Estimate removal and write the virtual CT");
  common(estimate);
  estimation_flags(estimate);

  auto* replay = app.add_subcommand("replay", "Stream a trace through the incremental virtual CT");
  common(replay);
  estimation_flags(replay);
  std::string speed;
  std::optional<std::size_t> snapshot_every;
  std::optional<std::size_t> checkpoint_every;
  replay->add_option("--speed", speed, "Replay speed multiplier; inf for as fast as possible");
  replay->add_option("--snapshot-every", snapshot_every, "Write a snapshot volume every N revisions");
  replay->add_option("--checkpoint-every", checkpoint_every, "Instrument samples between checkpoints");

  auto* evaluate = app.add_subcommand("evaluate", "Compare an estimated mask with the intraoperative CT");
  common(evaluate);
  evaluate->add_option("--hu-threshold", hu_threshold, "Tissue threshold in HU (default -800)");
  evaluate->add_option("--mask", flags.mask, "Estimated removal mask");
  evaluate->add_option("--preop", flags.preop, "Preoperative CT volume");
  evaluate->add_option("--intraop", flags.intraop, "Intraoperative CT volume");
  evaluate->add_option("--transform", flags.transform, "Rigid transform, preop world to intraop world");
  evaluate->add_option("--roi", flags.roi, "Region-of-interest mask");
  evaluate->add_option("--trace", flags.trace, "Trace for the statistics section");
  evaluate->add_option("--rating", flags.ratings, "Completeness rating file (repeatable)");
  evaluate->add_option("--reference-rating", flags.reference_rating, "Reference completeness rating");

  auto* phantom = app.add_subcommand("phantom", "Generate a synthetic phantom and simulated trace");
  common(phantom);
  std::optional<int> dims;
  std::optional<double> spacing;
  phantom->add_option("--dims", dims, "Voxels per axis");
  phantom->add_option("--spacing", spacing, "Voxel spacing (mm)");

  std::vector<const char*> argv{"vict"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) load_config(config_path, cfg);
    auto override_str = [](std::string& dst, const std::string& src) {
      if (!src.empty()) dst = src;
    };
    override_str(cfg.preop, flags.preop);
    override_str(cfg.trace, flags.trace);
    override_str(cfg.geometry, flags.geometry);
    override_str(cfg.intraop, flags.intraop);
    override_str(cfg.transform, flags.transform);
    override_str(cfg.roi, flags.roi);
    override_str(cfg.mask, flags.mask);
    override_str(cfg.reference_rating, flags.reference_rating);
    if (!flags.ratings.empty()) cfg.ratings = flags.ratings;
    if (!method.empty()) cfg.method = parse_method(method);
    if (levels) cfg.est.levels = *levels;
    if (body_any_touch) cfg.est.body_any_touch = true;
    if (hu_threshold) {
      if (*hu_threshold < -32768 || *hu_threshold > 32767) throw InputError("--hu-threshold out of range");
      cfg.hu_threshold = static_cast<std::int16_t>(*hu_threshold);
    }
    if (seed) {
      cfg.seed = *seed;
      cfg.seed_set = true;
    }
    if (!speed.empty()) cfg.speed = speed;
    if (snapshot_every) cfg.snapshot_every = *snapshot_every;
    if (checkpoint_every) cfg.checkpoint_every = *checkpoint_every;
    if (cfg.est.levels < 8) throw InputError("--levels must be >= 8");

    if (stats->parsed()) return cmd_stats(stats_trace, window, out_dir, out);
    if (!out_dir.empty()) cfg.out = out_dir;
    if (estimate->parsed()) return cmd_estimate(cfg, out);
    if (replay->parsed()) return cmd_replay(cfg, out);
    if (evaluate->parsed()) return cmd_evaluate(cfg, out_dir, out);
    if (phantom->parsed()) return cmd_phantom(cfg, dims, spacing, out);
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ComputeError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace vict::cli
