#include "vict/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

namespace vict {

double depth_in(const Sphere& s, const Vec3& p) { return s.radius - (p - s.center).norm(); }

double depth_in(const Capsule& c, const Vec3& p) {
  const Vec3 seg = c.b - c.a;
  const double len2 = seg.squaredNorm();
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp((p - c.a).dot(seg) / len2, 0.0, 1.0);
  return c.radius - (p - (c.a + t * seg)).norm();
}

void PhantomSpec::validate() const {
  geometry.validate();
  if (carve_spheres.empty() && carve_capsules.empty()) {
    throw InputError("phantom: carve region is empty");
  }
  for (const auto& e : cavities) {
    if (!(e.radii.minCoeff() > 0.0)) throw InputError("phantom: cavity radii must be positive");
  }
  for (const auto& s : carve_spheres) {
    if (!(s.radius > 0.0)) throw InputError("phantom: carve sphere radius must be positive");
  }
  for (const auto& c : carve_capsules) {
    if (!(c.radius > 0.0)) throw InputError("phantom: carve capsule radius must be positive");
  }
  for (const auto& c : channels) {
    if (!(c.radius > 0.0)) throw InputError("phantom: channel radius must be positive");
  }
  if (!(hu_noise >= 0.0) || !(lining_mm >= 0.0) || !(roi_margin_mm >= 0.0)) {
    throw InputError("phantom: noise, lining and roi margin must be non-negative");
  }
}

double PhantomSpec::carve_depth(const Vec3& p) const {
  double d = -std::numeric_limits<double>::infinity();
  for (const auto& s : carve_spheres) d = std::max(d, depth_in(s, p));
  for (const auto& c : carve_capsules) d = std::max(d, depth_in(c, p));
  return d;
}

PhantomSpec default_phantom_spec(const Index3& dims, double spacing) {
  PhantomSpec s;
  s.geometry.dims = dims;
  s.geometry.spacing = Vec3::Constant(spacing);
  const Vec3 c = Vec3(dims[0] - 1, dims[1] - 1, dims[2] - 1) * spacing * 0.5;
  s.block_min = c - Vec3(48, 48, 40);
  s.block_max = c + Vec3(48, 48, 40);
  s.cavities = {{c + Vec3(-22, 4, -6), Vec3(10, 14, 12)},
                {c + Vec3(22, 4, -6), Vec3(10, 14, 12)},
                {c + Vec3(0, 30, 4), Vec3(9, 8, 8)}};
  s.channels = {{c + Vec3(0, -56, 0), c + Vec3(0, -10, 0), 3.0}};
  s.carve_capsules = {{c + Vec3(0, -8, 0), c + Vec3(0, 8, 0), 5.0}};
  s.carve_spheres = {{c + Vec3(5, 4, 2), 4.0}};
  return s;
}

Phantom generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  const Geometry& g = spec.geometry;
  Phantom ph{spec, HuVolume(g), HuVolume(g), MaskVolume(g, 0), MaskVolume(g, 0), MaskVolume(g, 0)};
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::size_t n = 0;
  for (int k = 0; k < g.dims[2]; ++k) {
    for (int j = 0; j < g.dims[1]; ++j) {
      for (int i = 0; i < g.dims[0]; ++i, ++n) {
        const Vec3 p = index_to_world(g, {i, j, k});
        double hu = spec.air_hu;
        const bool in_block = (p.array() >= spec.block_min.array()).all() &&
                              (p.array() <= spec.block_max.array()).all();
        if (in_block) {
          double inner = -std::numeric_limits<double>::infinity();
          for (const auto& e : spec.cavities) {
            const double q = (p - e.center).cwiseQuotient(e.radii).norm();
            inner = std::max(inner, (1.0 - q) * e.radii.minCoeff());
          }
          for (const auto& ch : spec.channels) inner = std::max(inner, depth_in(ch, p));
          if (inner >= 0.0) {
            hu = spec.air_hu;
          } else if (inner >= -spec.lining_mm) {
            hu = spec.soft_hu;
          } else {
            hu = spec.bone_hu;
          }
        }
        const double draw = noise(rng);
        if (spec.hu_noise > 0.0) hu += std::round(draw * spec.hu_noise);
        ph.preop[n] = static_cast<std::int16_t>(std::clamp(hu, -32768.0, 32767.0));
        const double depth = spec.carve_depth(p);
        ph.carve[n] = depth >= 0.0 ? 1 : 0;
        ph.roi[n] = depth >= -spec.roi_margin_mm ? 1 : 0;
      }
    }
  }
  ph.intraop = ph.preop;
  std::size_t tissue = 0;
  std::size_t carved = 0;
  for (std::size_t v = 0; v < ph.carve.size(); ++v) {
    if (!ph.carve[v]) continue;
    ++carved;
    ph.truth[v] = ph.preop[v] >= -800 ? 1 : 0;
    tissue += ph.truth[v];
    ph.intraop[v] = spec.air_hu;
  }
  if (carved == 0) throw InputError("phantom: carve region contains no voxel centre");
  if (tissue == 0) throw InputError("phantom: carve region contains no tissue");
  return ph;
}

void SimulationSpec::validate() const {
  if (!(sampling_rate > 0.0)) throw InputError("simulation: sampling rate must be positive");
  if (!(tracking_rate > 0.0 && tracking_rate <= 1.0)) {
    throw InputError("simulation: tracking rate must be in (0, 1]");
  }
  if (!(noise.sigma >= 0.0)) throw InputError("simulation: noise sigma must be non-negative");
  if (!(duration > 0.0)) throw InputError("simulation: duration must be positive");
  if (!(transit_speed >= 0.0)) throw InputError("simulation: transit speed must be non-negative");
  if (!(depth_bias_mm >= 0.0)) throw InputError("simulation: depth bias must be non-negative");
}

SimulationSpec table1_preset() { return SimulationSpec{}; }

namespace {

struct Keyframe {
  double t;
  Vec3 p;
};

Vec3 position_at(const std::vector<Keyframe>& keys, double t) {
  if (t <= keys.front().t) return keys.front().p;
  if (t >= keys.back().t) return keys.back().p;
  const auto it = std::upper_bound(keys.begin(), keys.end(), t,
                                   [](double v, const Keyframe& k) { return v < k.t; });
  const Keyframe& b = *it;
  const Keyframe& a = *(it - 1);
  const double span = b.t - a.t;
  const double f = span > 0.0 ? (t - a.t) / span : 1.0;
  return a.p + f * (b.p - a.p);
}

std::vector<Index3> serpentine(const MaskVolume& carve) {
  const Geometry& g = carve.geometry();
  std::map<int, std::map<int, std::vector<int>>> slices;
  for (std::size_t v = 0; v < carve.size(); ++v) {
    if (!carve[v]) continue;
    const Index3 idx = g.unravel(v);
    slices[idx[2]][idx[1]].push_back(idx[0]);
  }
  std::vector<Index3> out;
  bool y_up = true;
  bool x_up = true;
  for (auto& [k, rows] : slices) {
    std::vector<int> ys;
    for (const auto& [j, xs] : rows) ys.push_back(j);
    if (!y_up) std::reverse(ys.begin(), ys.end());
    for (int j : ys) {
      auto xs = rows[j];
      if (!x_up) std::reverse(xs.begin(), xs.end());
      for (int i : xs) out.push_back({i, j, k});
      x_up = !x_up;
    }
    y_up = !y_up;
  }
  return out;
}

}  // namespace

MotionTrace simulate_trace(const Phantom& phantom, const SimulationSpec& sim) {
  sim.validate();
  const PhantomSpec& spec = phantom.spec;
  const Geometry& g = phantom.carve.geometry();
  const auto order = serpentine(phantom.carve);
  if (order.empty()) throw InputError("simulation: carve region is empty");

  std::vector<Vec3> waypoints;
  std::vector<double> dwell;
  Vec3 centroid = Vec3::Zero();
  for (const auto& idx : order) {
    const Vec3 p = index_to_world(g, idx);
    waypoints.push_back(p);
    dwell.push_back(std::max(0.0, spec.carve_depth(p)) + sim.depth_bias_mm);
    centroid += p;
  }
  centroid /= static_cast<double>(waypoints.size());

  const Capsule* channel = spec.channels.empty() ? nullptr : &spec.channels.front();
  const Vec3 entry = sim.entry ? *sim.entry : channel ? channel->a : centroid - Vec3(0, 30, 0);
  const bool transit = sim.transit_speed > 0.0;
  const double t_in = transit ? (waypoints.front() - entry).norm() / sim.transit_speed : 0.0;
  const double t_out = transit ? (waypoints.back() - entry).norm() / sim.transit_speed : 0.0;
  const double sweep = sim.duration - t_in - t_out;
  if (!(sweep > 0.0)) throw InputError("simulation: duration too short for the transit");

  double total_dwell = 0.0;
  for (double d : dwell) total_dwell += d;
  if (!(total_dwell > 0.0)) {
    std::fill(dwell.begin(), dwell.end(), 1.0);
    total_dwell = static_cast<double>(dwell.size());
  }
  const double scale = sweep / total_dwell;

  std::vector<Keyframe> keys;
  if (transit) keys.push_back({0.0, entry});
  double t = t_in;
  for (std::size_t i = 0; i < waypoints.size(); ++i) {
    keys.push_back({t, waypoints[i]});
    t += scale * dwell[i];
  }
  keys.push_back({t_in + sweep, waypoints.back()});
  if (transit) keys.push_back({sim.duration, entry});

  const Vec3 endo_tip = sim.endoscope_tip ? *sim.endoscope_tip
                        : channel        ? Vec3(0.5 * (channel->a + channel->b))
                                         : Vec3(centroid - Vec3(0, 25, 0));
  Vec3 endo_axis = sim.endoscope_axis ? *sim.endoscope_axis
                   : channel         ? Vec3(channel->a - channel->b)
                                     : Vec3(-Vec3::UnitY());
  endo_axis.normalize();
  const Vec3 fallback_axis = (entry - centroid).norm() > 0.0 ? Vec3((entry - centroid).normalized())
                                                             : Vec3(-Vec3::UnitY());

  std::mt19937_64 rng(sim.seed ^ 0x5851f42d4c957f2dULL);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto noisy = [&](const Vec3& p) {
    Vec3 out = p;
    for (int a = 0; a < 3; ++a) out[a] += sim.noise.sigma * gauss(rng);
    return out;
  };
  auto pick_normal = [&](const Vec3& axis) {
    Vec3 n = sim.endoscope_normal.normalized();
    if (axis.cross(n).norm() < 0.1) n = axis.cross(Vec3::UnitX()).norm() > 0.1 ? Vec3::UnitX() : Vec3::UnitY();
    return n;
  };

  MotionTrace trace;
  const auto count = static_cast<std::size_t>(std::floor(sim.duration * sim.sampling_rate)) + 1;
  for (std::size_t k = 0; k < count; ++k) {
    const double tk = static_cast<double>(k) / sim.sampling_rate;
    const Vec3 p = position_at(keys, tk);
    MotionSample s;
    s.t = tk;
    s.tool = Tool::kInstrument;
    const Vec3 to_entry = entry - p;
    s.axis = to_entry.norm() > 1e-6 ? Vec3(to_entry.normalized()) : fallback_axis;
    s.normal = pick_normal(s.axis);
    s.valid = uniform(rng) < sim.tracking_rate;
    s.tip = s.valid ? noisy(p) : Vec3::Zero();
    trace.samples.push_back(s);

    if (!sim.with_endoscope) continue;
    MotionSample e;
    e.t = tk;
    e.tool = Tool::kEndoscope;
    e.axis = endo_axis;
    e.normal = pick_normal(endo_axis);
    e.valid = uniform(rng) < sim.tracking_rate;
    e.tip = e.valid ? noisy(endo_tip) : Vec3::Zero();
    trace.samples.push_back(e);
  }
  return trace;
}

InstrumentGeometry default_instrument_geometry() {
  InstrumentGeometry g;
  g.segments.push_back({Tool::kInstrument, Vec3::Zero(), Vec3(60, 0, 0), 1.0});
  g.segments.push_back({Tool::kEndoscope, Vec3::Zero(), Vec3(40, 0, 0), 2.0});
  return g;
}

namespace {

std::vector<double> reals_of(const std::string& text, const std::string& key) {
  std::vector<double> out;
  std::istringstream in(text);
  for (std::string tok; in >> tok;) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size() || used == 0) throw InputError("key '" + key + "': not a number: " + tok);
    out.push_back(v);
  }
  return out;
}

std::vector<double> expect_count(const std::string& key, const std::string& text, std::size_t n) {
  auto v = reals_of(text, key);
  if (v.size() != n) throw InputError("key '" + key + "' expects " + std::to_string(n) + " values");
  return v;
}

template <class F>
void for_prefixed(const KeyValueTree& section, const std::string& prefix, F f) {
  for (const auto& [key, node] : section) {
    if (key.rfind(prefix, 0) == 0) f(key, node.data());
  }
}

}  // namespace

PhantomSpec parse_phantom_spec(const KeyValueTree& tree, PhantomSpec base) {
  const auto sec = tree.get_child_optional("phantom");
  if (!sec) return base;
  const KeyValueTree& s = *sec;
  if (s.count("dims")) {
    const auto d = get_ints(s, "dims", 3);
    const Index3 dims{static_cast<int>(d[0]), static_cast<int>(d[1]), static_cast<int>(d[2])};
    const double spacing = s.count("spacing_mm") ? get_reals(s, "spacing_mm", 3)[0] : base.geometry.spacing[0];
    // A new lattice re-centres the default anatomy unless shapes follow.
    base = default_phantom_spec(dims, spacing);
  }
  if (s.count("spacing_mm")) base.geometry.spacing = get_vec3(s, "spacing_mm");
  if (s.count("origin_mm")) base.geometry.origin = get_vec3(s, "origin_mm");
  if (s.count("block_min_mm")) base.block_min = get_vec3(s, "block_min_mm");
  if (s.count("block_max_mm")) base.block_max = get_vec3(s, "block_max_mm");
  if (s.count("bone_hu")) base.bone_hu = static_cast<std::int16_t>(get_ints(s, "bone_hu", 1)[0]);
  if (s.count("soft_hu")) base.soft_hu = static_cast<std::int16_t>(get_ints(s, "soft_hu", 1)[0]);
  if (s.count("air_hu")) base.air_hu = static_cast<std::int16_t>(get_ints(s, "air_hu", 1)[0]);
  if (s.count("hu_noise")) base.hu_noise = get_reals(s, "hu_noise", 1)[0];
  if (s.count("lining_mm")) base.lining_mm = get_reals(s, "lining_mm", 1)[0];
  if (s.count("roi_margin_mm")) base.roi_margin_mm = get_reals(s, "roi_margin_mm", 1)[0];
  if (s.count("seed")) base.seed = static_cast<std::uint64_t>(get_ints(s, "seed", 1)[0]);

  std::vector<Ellipsoid> cavities;
  for_prefixed(s, "cavity", [&](const std::string& k, const std::string& v) {
    const auto r = expect_count(k, v, 6);
    cavities.push_back({Vec3(r[0], r[1], r[2]), Vec3(r[3], r[4], r[5])});
  });
  std::vector<Capsule> channels;
  for_prefixed(s, "channel", [&](const std::string& k, const std::string& v) {
    const auto r = expect_count(k, v, 7);
    channels.push_back({Vec3(r[0], r[1], r[2]), Vec3(r[3], r[4], r[5]), r[6]});
  });
  std::vector<Sphere> spheres;
  for_prefixed(s, "carve_sphere", [&](const std::string& k, const std::string& v) {
    const auto r = expect_count(k, v, 4);
    spheres.push_back({Vec3(r[0], r[1], r[2]), r[3]});
  });
  std::vector<Capsule> capsules;
  for_prefixed(s, "carve_capsule", [&](const std::string& k, const std::string& v) {
    const auto r = expect_count(k, v, 7);
    capsules.push_back({Vec3(r[0], r[1], r[2]), Vec3(r[3], r[4], r[5]), r[6]});
  });
  if (!cavities.empty()) base.cavities = cavities;
  if (!channels.empty()) base.channels = channels;
  if (!spheres.empty() || !capsules.empty()) {
    base.carve_spheres = spheres;
    base.carve_capsules = capsules;
  }
  return base;
}

SimulationSpec parse_simulation_spec(const KeyValueTree& tree, SimulationSpec base) {
  const auto sec = tree.get_child_optional("simulation");
  if (!sec) return base;
  const KeyValueTree& s = *sec;
  if (s.count("preset")) {
    const auto name = get_string(s, "preset");
    if (name != "table1") throw InputError("unknown simulation preset '" + name + "'");
    const auto seed = base.seed;
    base = table1_preset();
    base.seed = seed;
  }
  auto real = [&](const char* key, double& out) {
    if (s.count(key)) out = get_reals(s, key, 1)[0];
  };
  real("sampling_rate_hz", base.sampling_rate);
  real("tracking_rate", base.tracking_rate);
  real("noise_sigma_mm", base.noise.sigma);
  real("duration_s", base.duration);
  real("transit_speed_mm_s", base.transit_speed);
  real("depth_bias_mm", base.depth_bias_mm);
  if (s.count("seed")) base.seed = static_cast<std::uint64_t>(get_ints(s, "seed", 1)[0]);
  if (s.count("entry_mm")) base.entry = get_vec3(s, "entry_mm");
  if (s.count("endoscope_tip_mm")) base.endoscope_tip = get_vec3(s, "endoscope_tip_mm");
  if (s.count("endoscope_axis")) base.endoscope_axis = get_vec3(s, "endoscope_axis");
  if (s.count("endoscope_normal")) base.endoscope_normal = get_vec3(s, "endoscope_normal");
  if (s.count("with_endoscope")) base.with_endoscope = s.get<bool>("with_endoscope");
  return base;
}

}  // namespace vict
