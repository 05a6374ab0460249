#include "vict/motion.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "vict/error.hpp"

namespace vict {

using nlohmann::json;

const char* tool_name(Tool t) { return t == Tool::kInstrument ? "instrument" : "endoscope"; }

MotionTrace MotionTrace::of_tool(Tool tool) const {
  MotionTrace out;
  for (const auto& s : samples) {
    if (s.tool == tool) out.samples.push_back(s);
  }
  return out;
}

std::vector<MotionSample> MotionTrace::valid_of(Tool tool) const {
  std::vector<MotionSample> out;
  for (const auto& s : samples) {
    if (s.tool == tool && s.valid) out.push_back(s);
  }
  return out;
}

void MotionTrace::validate() const {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!std::isfinite(samples[i].t)) throw InputError("non-finite timestamp");
    if (i > 0 && samples[i].t < samples[i - 1].t) {
      throw InputError("timestamp regression at sample " + std::to_string(i));
    }
  }
}

namespace {

Vec3 read_vec(const json& j, const char* key) {
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 3) throw std::invalid_argument(std::string(key) + " must be [x,y,z]");
  Vec3 v;
  for (int i = 0; i < 3; ++i) {
    if (!a[i].is_number()) throw std::invalid_argument(std::string(key) + " must be numeric");
    v[i] = a[i].get<double>();
  }
  return v;
}

MotionSample parse_record(const std::string& line) {
  const json j = json::parse(line);
  if (!j.is_object()) throw std::invalid_argument("record is not an object");
  MotionSample s;
  if (!j.at("t").is_number()) throw std::invalid_argument("t must be a number");
  s.t = j.at("t").get<double>();
  const auto tool = j.at("tool").get<std::string>();
  if (tool == "instrument") {
    s.tool = Tool::kInstrument;
  } else if (tool == "endoscope") {
    s.tool = Tool::kEndoscope;
  } else {
    throw std::invalid_argument("unknown tool '" + tool + "'");
  }
  if (!j.at("valid").is_boolean()) throw std::invalid_argument("valid must be true|false");
  s.valid = j.at("valid").get<bool>();
  s.tip = read_vec(j, "tip");
  s.axis = read_vec(j, "axis");
  s.normal = read_vec(j, "norm");
  if (!std::isfinite(s.t)) throw std::invalid_argument("t must be finite");
  return s;
}

json vec_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

}  // namespace

MotionTrace parse_trace(std::istream& in) {
  MotionTrace trace;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    MotionSample s;
    try {
      s = parse_record(line);
    } catch (const std::exception& e) {
      throw ParseError(std::string("malformed trace record: ") + e.what(), lineno);
    }
    if (!trace.samples.empty() && s.t < trace.samples.back().t) {
      throw ParseError("timestamp regression", lineno);
    }
    trace.samples.push_back(s);
  }
  return trace;
}

MotionTrace parse_trace_text(const std::string& text) {
  std::istringstream in(text);
  return parse_trace(in);
}

MotionTrace read_trace_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  try {
    return parse_trace(in);
  } catch (const ParseError& e) {
    throw InputError(path + ": " + e.what());
  }
}

void write_trace(std::ostream& out, const MotionTrace& trace) {
  for (const auto& s : trace.samples) {
    json j;
    j["t"] = s.t;
    j["tool"] = tool_name(s.tool);
    j["valid"] = s.valid;
    j["tip"] = vec_json(s.tip);
    j["axis"] = vec_json(s.axis);
    j["norm"] = vec_json(s.normal);
    out << j.dump() << '\n';
  }
}

void write_trace_file(const std::string& path, const MotionTrace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  write_trace(out, trace);
}

TraceStats compute_stats(const MotionTrace& trace, double window) {
  if (trace.empty()) throw InputError("compute_stats: empty trace");
  if (!(window > 0.0)) throw InputError("compute_stats: window must be positive");
  TraceStats st;
  st.total_count = trace.size();
  st.valid_count = static_cast<std::size_t>(
      std::count_if(trace.samples.begin(), trace.samples.end(), [](const auto& s) { return s.valid; }));
  st.tracking_rate = 100.0 * static_cast<double>(st.valid_count) / static_cast<double>(st.total_count);
  const auto& s = trace.samples;
  st.duration = s.back().t - s.front().t;

  const double tol = 1e-9 * std::max(1.0, window);
  bool any = false;
  double hi = 0.0;
  double lo = 0.0;
  std::size_t end = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i].t + window > s.back().t + tol) break;
    end = std::max(end, i);
    while (end < s.size() && s[end].t - s[i].t < window - tol) ++end;
    const double rate = static_cast<double>(end - i) / window;
    hi = any ? std::max(hi, rate) : rate;
    lo = any ? std::min(lo, rate) : rate;
    any = true;
  }
  if (!any) {
    const double r = st.duration > 0.0 ? static_cast<double>(s.size() - 1) / st.duration : 0.0;
    hi = lo = r;
  }
  st.sampling_rate_high = hi;
  st.sampling_rate_low = lo;
  return st;
}

double median_interval(const MotionTrace& trace, Tool tool) {
  const auto v = trace.valid_of(tool);
  if (v.size() < 2) return 0.0;
  std::vector<double> d;
  d.reserve(v.size() - 1);
  for (std::size_t i = 1; i < v.size(); ++i) d.push_back(v[i].t - v[i - 1].t);
  const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid;
}

WorldPoint smooth_tip_at(std::span<const MotionSample> samples, std::size_t i, double bandwidth,
                         double max_shift) {
  const double ti = samples[i].t;
  const double reach = kSmoothingSupport * bandwidth;
  std::size_t lo = i;
  while (lo > 0 && ti - samples[lo - 1].t <= reach) --lo;
  Vec3 acc = Vec3::Zero();
  double wsum = 0.0;
  for (std::size_t j = lo; j < samples.size() && samples[j].t - ti <= reach; ++j) {
    const double u = (samples[j].t - ti) / bandwidth;
    const double w = std::exp(-0.5 * u * u);
    acc += w * samples[j].tip;
    wsum += w;
  }
  const WorldPoint& raw = samples[i].tip;
  Vec3 shift = acc / wsum - raw;
  const double len = shift.norm();
  if (len > max_shift) shift *= (len > 0.0 ? max_shift / len : 0.0);
  return raw + shift;
}

MotionTrace smooth_tips(const MotionTrace& trace, const NoiseModel& noise, double bandwidth) {
  if (!(bandwidth > 0.0)) throw InputError("smooth_tips: bandwidth must be positive");
  MotionTrace out = trace;
  const double max_shift = 3.0 * noise.sigma;
  for (Tool tool : {Tool::kInstrument, Tool::kEndoscope}) {
    std::vector<std::size_t> where;
    std::vector<MotionSample> valid;
    for (std::size_t k = 0; k < trace.size(); ++k) {
      if (trace.samples[k].tool == tool && trace.samples[k].valid) {
        where.push_back(k);
        valid.push_back(trace.samples[k]);
      }
    }
    for (std::size_t i = 0; i < valid.size(); ++i) {
      out.samples[where[i]].tip = smooth_tip_at(valid, i, bandwidth, max_shift);
    }
  }
  return out;
}

Mat3 EndoscopeFrame::rotation() const {
  Mat3 r;
  r.col(0) = x_axis;
  r.col(1) = y_axis;
  r.col(2) = z_axis;
  return r;
}

Vec3 EndoscopeFrame::to_local(const WorldPoint& p) const {
  const Vec3 d = p - origin;
  return {x_axis.dot(d), y_axis.dot(d), z_axis.dot(d)};
}

WorldPoint EndoscopeFrame::to_world(const Vec3& q) const {
  return origin + q[0] * x_axis + q[1] * y_axis + q[2] * z_axis;
}

EndoscopeFrame build_tool_frame(const MotionSample& s) {
  if (!s.valid) throw ComputeError("cannot build a frame from an invalid sample");
  const double an = s.axis.norm();
  const double nn = s.normal.norm();
  if (!(an > 0.0) || !(nn > 0.0) || !s.axis.allFinite() || !s.normal.allFinite()) {
    throw ComputeError("degenerate frame: zero-length axis or normal");
  }
  const Vec3 x = s.axis / an;
  const Vec3 n = s.normal / nn;
  const Vec3 c = x.cross(n);
  // |x cross n| = sin(angle); parallel within 1e-3 rad is degenerate either way round.
  if (c.norm() <= std::sin(1e-3)) {
    throw ComputeError("degenerate frame: axis parallel to tracker normal");
  }
  EndoscopeFrame f;
  f.origin = s.tip;
  f.x_axis = x;
  f.z_axis = c.normalized();
  f.y_axis = f.z_axis.cross(f.x_axis);
  return f;
}

EndoscopeFrame build_endoscope_frame(const MotionSample& s) {
  if (s.tool != Tool::kEndoscope) throw ComputeError("frame sample is not an endoscope sample");
  return build_tool_frame(s);
}

ProjectedTrace project_to_endoscope(const MotionTrace& trace, const ProjectionOptions& opts) {
  std::vector<double> times;
  std::vector<EndoscopeFrame> frames;
  for (const auto& s : trace.samples) {
    if (s.tool != Tool::kEndoscope || !s.valid) continue;
    try {
      frames.push_back(build_endoscope_frame(s));
      times.push_back(s.t);
    } catch (const ComputeError&) {
      // degenerate poses are treated as tracking loss
    }
  }
  if (frames.empty()) throw ComputeError("projection: trace has no valid endoscope samples");

  ProjectedTrace out;
  for (const auto& s : trace.samples) {
    if (s.tool != Tool::kInstrument || !s.valid) continue;
    const auto it = std::lower_bound(times.begin(), times.end(), s.t);
    std::size_t best = times.size();
    double best_dt = std::numeric_limits<double>::infinity();
    if (it != times.begin()) {
      const auto k = static_cast<std::size_t>(it - times.begin()) - 1;
      best = k;
      best_dt = s.t - times[k];
    }
    if (it != times.end()) {
      const auto k = static_cast<std::size_t>(it - times.begin());
      if (times[k] - s.t < best_dt) {
        best = k;
        best_dt = times[k] - s.t;
      }
    }
    if (best == times.size() || best_dt > opts.pair_window) continue;
    const EndoscopeFrame& f = frames[best];
    MotionSample local = s;
    local.tip = f.to_local(s.tip);
    const Mat3 rt = f.rotation().transpose();
    local.axis = rt * s.axis;
    local.normal = rt * s.normal;
    if (opts.fov_half_angle) {
      const double n = local.tip.norm();
      if (n > 0.0 && std::acos(std::clamp(-local.tip[0] / n, -1.0, 1.0)) > *opts.fov_half_angle) {
        continue;
      }
    }
    out.local.samples.push_back(local);
    out.frames.push_back(f);
  }
  return out;
}

}  // namespace vict
