#include "vict/removal.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace vict {

const char* method_name(Method m) {
  switch (m) {
    case Method::kTip: return "tip";
    case Method::kTrajectory: return "trajectory";
    case Method::kBody: return "body";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  if (s == "tip") return Method::kTip;
  if (s == "trajectory") return Method::kTrajectory;
  if (s == "body") return Method::kBody;
  throw InputError("unknown method '" + s + "' (expected tip|trajectory|body)");
}

void SparseDensity::deposit(std::size_t voxel, double weight) {
  const auto [it, inserted] = slot_.try_emplace(voxel, voxels_.size());
  if (inserted) {
    voxels_.push_back(voxel);
    values_.push_back(weight);
  } else {
    values_[it->second] += weight;
  }
}

double SparseDensity::value_of(std::size_t voxel) const {
  const auto it = slot_.find(voxel);
  return it == slot_.end() ? 0.0 : values_[it->second];
}

std::vector<double> residence_weights(std::span<const TimedPoint> points, double cap) {
  std::vector<double> w(points.size(), 0.0);
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    w[i] = std::min(points[i + 1].t - points[i].t, cap);
  }
  return w;
}

namespace {

double tool_duration(const MotionTrace& trace, Tool tool) {
  double first = 0.0;
  double last = 0.0;
  bool any = false;
  for (const auto& s : trace.samples) {
    if (s.tool != tool) continue;
    if (!any) first = s.t;
    last = s.t;
    any = true;
  }
  return any ? last - first : 0.0;
}

std::vector<TimedPoint> valid_points(const MotionTrace& trace, Tool tool) {
  std::vector<TimedPoint> out;
  for (const auto& s : trace.samples) {
    if (s.tool == tool && s.valid) out.push_back({s.t, s.tip});
  }
  return out;
}

SparseDensity deposit_points(const Geometry& ct, std::span<const TimedPoint> pts, double cap) {
  const auto w = residence_weights(pts, cap);
  SparseDensity raw;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (const auto idx = world_to_index(ct, pts[i].p)) raw.deposit(ct.linear(*idx), w[i]);
  }
  return raw;
}

MaskVolume mask_from(const Geometry& ct, std::span<const std::size_t> voxels) {
  MaskVolume m(ct, 0);
  for (auto v : voxels) m[v] = 1;
  return m;
}

void require_valid_instrument(const MotionTrace& trace) {
  for (const auto& s : trace.samples) {
    if (s.tool == Tool::kInstrument && s.valid) return;
  }
  throw ComputeError("trace has no valid instrument samples");
}

}  // namespace

TipDensityGrid accumulate_density(const MotionTrace& trace, const Geometry& ct,
                                  double max_interval) {
  const auto pts = valid_points(trace, Tool::kInstrument);
  if (pts.empty()) throw ComputeError("accumulate_density: no valid instrument samples");
  const auto w = residence_weights(pts, max_interval);
  std::vector<WeightedPoint> weighted;
  weighted.reserve(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) weighted.push_back({pts[i].p, w[i]});
  auto raster = rasterize_points(ct, weighted);
  const double duration = tool_duration(trace, Tool::kInstrument);
  if (duration > 0.0) {
    for (auto& v : raster.grid.data()) v /= duration;
  } else {
    std::fill(raster.grid.data().begin(), raster.grid.data().end(), 0.0);
  }
  return std::move(raster.grid);
}

int quantize_level(double density, double max_density, int levels) {
  if (!(density > 0.0)) return 0;
  const double scaled = std::ceil(density / max_density * static_cast<double>(levels - 1));
  return static_cast<int>(std::clamp(scaled, 1.0, static_cast<double>(levels - 1)));
}

DensityHistogram quantize_histogram(std::span<const double> densities, int levels) {
  if (levels < 8) throw InputError("histogram levels must be >= 8");
  DensityHistogram h;
  h.levels = levels;
  h.v.assign(static_cast<std::size_t>(levels), 0);
  double mx = 0.0;
  for (double d : densities) mx = std::max(mx, d);
  if (!(mx > 0.0)) throw ComputeError("density grid is empty: no modification observed");
  h.max_density = mx;
  std::uint64_t total = 0;
  for (double d : densities) {
    const int lvl = quantize_level(d, mx, levels);
    if (lvl > 0) {
      ++h.v[static_cast<std::size_t>(lvl)];
      ++total;
    }
  }
  h.th = static_cast<double>(total) / static_cast<double>(levels - 1);
  return h;
}

DensityHistogram quantize_histogram(const TipDensityGrid& density, int levels) {
  return quantize_histogram(density.data(), levels);
}

std::vector<double> gradient(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<double> g(n, 0.0);
  if (n < 2) return g;
  g[0] = v[1] - v[0];
  g[n - 1] = v[n - 1] - v[n - 2];
  for (std::size_t i = 1; i + 1 < n; ++i) g[i] = (v[i + 1] - v[i - 1]) / 2.0;
  return g;
}

ThresholdChoice auto_threshold(const DensityHistogram& hist) {
  const int levels = hist.levels;
  std::vector<double> counts;
  for (int d = 1; d < levels; ++d) counts.push_back(static_cast<double>(hist.v[static_cast<std::size_t>(d)]));
  const auto g2 = gradient(gradient(counts));
  const auto g3 = gradient(g2);
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (g2[i] > hist.th && g3[i] <= hist.th) return {static_cast<int>(i) + 1, false};
  }
  double sum = 0.0;
  int occupied = 0;
  for (int d = 1; d < levels; ++d) {
    if (hist.v[static_cast<std::size_t>(d)] > 0) {
      sum += d;
      ++occupied;
    }
  }
  int level = occupied ? static_cast<int>(std::ceil(sum / occupied)) : 1;
  return {std::clamp(level, 1, levels - 1), true};
}

std::vector<std::size_t> select_voxels(const SparseDensity& raw, double duration, int levels,
                                       ThresholdChoice* choice, DensityHistogram* hist) {
  if (!(duration > 0.0)) throw ComputeError("procedure duration is zero: no modification observed");
  std::vector<double> vals(raw.values().begin(), raw.values().end());
  for (auto& v : vals) v /= duration;
  const auto h = quantize_histogram(vals, levels);
  const auto c = auto_threshold(h);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < vals.size(); ++i) {
    if (quantize_level(vals[i], h.max_density, levels) >= c.level) out.push_back(raw.voxels()[i]);
  }
  std::sort(out.begin(), out.end());
  if (choice) *choice = c;
  if (hist) *hist = h;
  return out;
}

bool InstrumentGeometry::has(Tool t) const {
  return std::any_of(segments.begin(), segments.end(), [t](const auto& s) { return s.tool == t; });
}

InstrumentGeometry parse_instrument_geometry(const std::string& text) {
  InstrumentGeometry g;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<std::string> fields;
    std::stringstream ls(line);
    for (std::string f; std::getline(ls, f, ',');) {
      const auto b = f.find_first_not_of(" \t\r");
      const auto e = f.find_last_not_of(" \t\r");
      fields.push_back(b == std::string::npos ? "" : f.substr(b, e - b + 1));
    }
    if (fields.size() != 8) throw ParseError("geometry record needs 8 fields", lineno);
    CapsuleSegment s;
    if (fields[0] == "instrument") {
      s.tool = Tool::kInstrument;
    } else if (fields[0] == "endoscope") {
      s.tool = Tool::kEndoscope;
    } else {
      throw ParseError("unknown tool '" + fields[0] + "'", lineno);
    }
    double v[7];
    for (int i = 0; i < 7; ++i) {
      std::size_t used = 0;
      try {
        v[i] = std::stod(fields[static_cast<std::size_t>(i) + 1], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != fields[static_cast<std::size_t>(i) + 1].size() || !std::isfinite(v[i])) {
        throw ParseError("bad number '" + fields[static_cast<std::size_t>(i) + 1] + "'", lineno);
      }
    }
    s.start = {v[0], v[1], v[2]};
    s.end = {v[3], v[4], v[5]};
    s.radius = v[6];
    if (!(s.radius > 0.0)) throw ParseError("capsule radius must be positive", lineno);
    g.segments.push_back(s);
  }
  return g;
}

InstrumentGeometry read_instrument_geometry(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_instrument_geometry(ss.str());
  } catch (const ParseError& e) {
    throw InputError(path + ": " + e.what());
  }
}

std::string format_instrument_geometry(const InstrumentGeometry& g) {
  std::ostringstream out;
  out.precision(17);
  for (const auto& s : g.segments) {
    out << tool_name(s.tool) << ", " << s.start[0] << ", " << s.start[1] << ", " << s.start[2]
        << ", " << s.end[0] << ", " << s.end[1] << ", " << s.end[2] << ", " << s.radius << "\n";
  }
  return out.str();
}

EstimationOptions resolve_options(const MotionTrace& trace, const Geometry& ct,
                                  const EstimationOptions& opts) {
  EstimationOptions out = opts;
  const double med = median_interval(trace, Tool::kInstrument);
  if (!out.bandwidth) out.bandwidth = med > 0.0 ? 5.0 * med : 1.0;
  if (!out.step) {
    const auto pts = valid_points(trace, Tool::kInstrument);
    std::vector<double> speeds;
    for (std::size_t i = 1; i < pts.size(); ++i) {
      const double dt = pts[i].t - pts[i - 1].t;
      if (dt > 0.0) speeds.push_back((pts[i].p - pts[i - 1].p).norm() / dt);
    }
    const double fallback = med > 0.0 ? med : 0.05;
    double step = fallback;
    if (!speeds.empty()) {
      auto mid = speeds.begin() + static_cast<std::ptrdiff_t>(speeds.size() / 2);
      std::nth_element(speeds.begin(), mid, speeds.end());
      if (*mid > 0.0) step = 0.5 * ct.spacing.minCoeff() / *mid;
    }
    out.step = std::clamp(step, 1e-3, std::max(fallback, 1e-3));
  }
  return out;
}

Estimate method_tip(const MotionTrace& trace, const Geometry& ct, const EstimationOptions& opts) {
  require_valid_instrument(trace);
  const auto o = resolve_options(trace, ct, opts);
  const auto smoothed = smooth_tips(trace, o.noise, *o.bandwidth);
  const auto pts = valid_points(smoothed, Tool::kInstrument);
  const auto raw = deposit_points(ct, pts, o.max_interval);
  Estimate e;
  const auto voxels = select_voxels(raw, tool_duration(trace, Tool::kInstrument), o.levels,
                                    &e.threshold, &e.histogram);
  e.mask = {mask_from(ct, voxels), Method::kTip};
  e.bandwidth = *o.bandwidth;
  return e;
}

namespace {

EndoscopeFrame blend_frames(const EndoscopeFrame& a, const EndoscopeFrame& b, double f) {
  if (f == 0.0) return a;
  const Eigen::Quaterniond qa(a.rotation());
  const Eigen::Quaterniond qb(b.rotation());
  const Mat3 r = qa.slerp(f, qb).toRotationMatrix();
  EndoscopeFrame out;
  out.origin = a.origin + f * (b.origin - a.origin);
  out.x_axis = r.col(0);
  out.y_axis = r.col(1);
  out.z_axis = r.col(2);
  return out;
}

}  // namespace

std::vector<std::size_t> trajectory_voxels(const MotionTrace& trace, const Geometry& ct,
                                           const EstimationOptions& opts, Estimate* details) {
  require_valid_instrument(trace);
  const auto o = resolve_options(trace, ct, opts);
  const auto proj = project_to_endoscope(trace, o.projection);
  std::vector<TimedPoint> obs;
  obs.reserve(proj.local.size());
  for (const auto& s : proj.local.samples) obs.push_back({s.t, s.tip});
  if (obs.size() < 2) {
    throw ComputeError("trajectory: fewer than two instrument samples with a concurrent endoscope pose");
  }
  DensifyOptions dopts;
  dopts.step = *o.step;
  dopts.kernel = o.kernel;
  dopts.noise_sigma = o.noise.sigma;
  dopts.max_training = o.max_training;
  const auto dense = densify(obs, dopts);

  std::vector<MotionSample> path;
  path.reserve(dense.points.size());
  for (std::size_t i = 0; i < dense.points.size(); ++i) {
    const auto frame = blend_frames(proj.frames[dense.from[i]], proj.frames[dense.to[i]],
                                    dense.fraction[i]);
    MotionSample s;
    s.t = dense.points[i].t;
    s.valid = true;
    s.tip = frame.to_world(dense.points[i].p);
    path.push_back(s);
  }
  // The densified path is deposited through the same smoother as the tip method.
  std::vector<TimedPoint> world;
  world.reserve(path.size());
  const double max_shift = 3.0 * o.noise.sigma;
  for (std::size_t i = 0; i < path.size(); ++i) {
    world.push_back({path[i].t, smooth_tip_at(path, i, *o.bandwidth, max_shift)});
  }
  const auto raw = deposit_points(ct, world, o.max_interval);
  Estimate e;
  auto voxels = select_voxels(raw, tool_duration(trace, Tool::kInstrument), o.levels,
                              &e.threshold, &e.histogram);
  if (details) {
    e.bandwidth = *o.bandwidth;
    e.step = *o.step;
    e.dense_points = world.size();
    e.kernel = dense.kernel;
    e.jitter = dense.jitter;
    *details = std::move(e);
  }
  return voxels;
}

Estimate method_trajectory(const MotionTrace& trace, const Geometry& ct,
                           const EstimationOptions& opts) {
  Estimate e;
  const auto voxels = trajectory_voxels(trace, ct, opts, &e);
  e.mask = {mask_from(ct, voxels), Method::kTrajectory};
  return e;
}

std::pair<WorldPoint, WorldPoint> place_segment(const EndoscopeFrame& pose,
                                                const CapsuleSegment& seg) {
  return {pose.to_world(seg.start), pose.to_world(seg.end)};
}

std::vector<std::size_t> body_voxels(const Geometry& ct, const EndoscopeFrame& pose,
                                     const InstrumentGeometry& geometry, Tool tool) {
  std::vector<std::size_t> out;
  for (const auto& seg : geometry.segments) {
    if (seg.tool != tool) continue;
    const auto [a, b] = place_segment(pose, seg);
    auto v = capsule_voxels(ct, a, b, seg.radius);
    if (out.empty()) {
      out = std::move(v);
    } else {
      std::vector<std::size_t> merged;
      std::set_union(out.begin(), out.end(), v.begin(), v.end(), std::back_inserter(merged));
      out = std::move(merged);
    }
  }
  return out;
}

Estimate method_body(const MotionTrace& trace, const Geometry& ct,
                     const InstrumentGeometry& geometry, const EstimationOptions& opts) {
  if (geometry.segments.empty()) throw InputError("body method: instrument geometry is missing");
  require_valid_instrument(trace);
  const auto o = resolve_options(trace, ct, opts);
  const auto smoothed = smooth_tips(trace, o.noise, *o.bandwidth);

  Estimate e;
  std::vector<std::size_t> all;
  bool first_tool = true;
  for (Tool tool : {Tool::kInstrument, Tool::kEndoscope}) {
    if (!geometry.has(tool)) continue;
    const auto samples = smoothed.valid_of(tool);
    if (samples.empty()) continue;
    std::vector<TimedPoint> pts;
    for (const auto& s : samples) pts.push_back({s.t, s.tip});
    const auto w = residence_weights(pts, o.max_interval);
    SparseDensity raw;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      EndoscopeFrame pose;
      try {
        pose = build_tool_frame(samples[i]);
      } catch (const ComputeError&) {
        continue;
      }
      for (auto v : body_voxels(ct, pose, geometry, tool)) raw.deposit(v, w[i]);
    }
    std::vector<std::size_t> voxels;
    ThresholdChoice choice;
    if (o.body_any_touch) {
      for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw.values()[i] > 0.0) voxels.push_back(raw.voxels()[i]);
      }
      choice = {1, false};
    } else {
      DensityHistogram hist;
      voxels = select_voxels(raw, tool_duration(trace, tool), o.levels, &choice, &hist);
      if (first_tool) e.histogram = hist;
    }
    if (first_tool) e.threshold = choice;
    first_tool = false;
    e.tool_thresholds.push_back(choice);
    all.insert(all.end(), voxels.begin(), voxels.end());
  }
  if (first_tool) throw ComputeError("body method: no valid samples for tools with geometry");
  e.mask = {mask_from(ct, all), Method::kBody};
  e.bandwidth = *o.bandwidth;
  return e;
}

}  // namespace vict
