#include "vict/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "vict/simd/kernels.hpp"

namespace vict {

namespace {

template <class T, class Sample>
Volume<T> resample_with(const Geometry& reference, const RigidTransform& t, Sample sample) {
  t.validate();
  reference.validate();
  Volume<T> out(reference);
  std::size_t n = 0;
  for (int k = 0; k < reference.dims[2]; ++k) {
    for (int j = 0; j < reference.dims[1]; ++j) {
      for (int i = 0; i < reference.dims[0]; ++i, ++n) {
        out[n] = sample(t.apply(index_to_world(reference, {i, j, k})));
      }
    }
  }
  return out;
}

}  // namespace

HuVolume resample(const HuVolume& moving, const RigidTransform& reference_to_moving,
                  const Geometry& reference, Interpolation interp) {
  const Geometry& g = moving.geometry();
  if (interp == Interpolation::kNearest) {
    return resample_with<std::int16_t>(reference, reference_to_moving, [&](const Vec3& q) {
      const auto idx = world_to_index(g, q);
      return idx ? moving[g.linear(*idx)] : kAirHu;
    });
  }
  return resample_with<std::int16_t>(reference, reference_to_moving, [&](const Vec3& q) {
    const Vec3 c = world_to_continuous(g, q);
    int i0[3];
    int i1[3];
    double f[3];
    for (int a = 0; a < 3; ++a) {
      if (!(c[a] >= -0.5 && c[a] < g.dims[a] - 0.5)) return kAirHu;
      const double fl = std::floor(c[a]);
      f[a] = c[a] - fl;
      i0[a] = std::clamp(static_cast<int>(fl), 0, g.dims[a] - 1);
      i1[a] = std::clamp(static_cast<int>(fl) + 1, 0, g.dims[a] - 1);
    }
    double acc = 0.0;
    for (int corner = 0; corner < 8; ++corner) {
      const int ci = corner & 1 ? i1[0] : i0[0];
      const int cj = corner & 2 ? i1[1] : i0[1];
      const int ck = corner & 4 ? i1[2] : i0[2];
      const double w = (corner & 1 ? f[0] : 1.0 - f[0]) * (corner & 2 ? f[1] : 1.0 - f[1]) *
                       (corner & 4 ? f[2] : 1.0 - f[2]);
      acc += w * moving.at(ci, cj, ck);
    }
    return static_cast<std::int16_t>(std::clamp(std::lround(acc), -32768L, 32767L));
  });
}

MaskVolume resample(const MaskVolume& moving, const RigidTransform& reference_to_moving,
                    const Geometry& reference) {
  const Geometry& g = moving.geometry();
  return resample_with<std::uint8_t>(reference, reference_to_moving, [&](const Vec3& q) {
    const auto idx = world_to_index(g, q);
    return idx ? moving[g.linear(*idx)] : std::uint8_t{0};
  });
}

RigidTransform read_transform(const std::filesystem::path& path) {
  const auto tree = read_keyvalue_file(path);
  const auto r = get_reals(tree, "rotation", 9);
  RigidTransform t;
  for (int i = 0; i < 9; ++i) t.rotation(i / 3, i % 3) = r[static_cast<std::size_t>(i)];
  t.translation = get_vec3(tree, "translation");
  try {
    t.validate();
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  return t;
}

void write_transform(const std::filesystem::path& path, const RigidTransform& t) {
  KeyValueWriter w;
  std::vector<double> r;
  for (int i = 0; i < 9; ++i) r.push_back(t.rotation(i / 3, i % 3));
  w.put_reals("rotation", r);
  w.put("translation", t.translation);
  w.write(path);
}

MaskVolume ground_truth_removal(const HuVolume& preop, const HuVolume& intraop_aligned,
                                std::int16_t hu_threshold, const MaskVolume* roi) {
  require_same_geometry(preop.geometry(), intraop_aligned.geometry(), "ground truth: preop vs intraop");
  if (roi) require_same_geometry(preop.geometry(), roi->geometry(), "ground truth: preop vs roi");
  const MaskVolume before = threshold_mask(preop, hu_threshold);
  const MaskVolume after = threshold_mask(intraop_aligned, hu_threshold);
  MaskVolume out(preop.geometry(), 0);
  for (std::size_t v = 0; v < out.size(); ++v) {
    out[v] = before[v] && !after[v] && (!roi || (*roi)[v]) ? 1 : 0;
  }
  return out;
}

ConfusionCounts confusion(const MaskVolume& estimated, const MaskVolume& truth,
                          const MaskVolume* region) {
  require_same_geometry(estimated.geometry(), truth.geometry(), "confusion: estimate vs truth");
  if (region) require_same_geometry(estimated.geometry(), region->geometry(), "confusion: region");
  const auto c = simd::active_kernels().confusion_u8(estimated.data().data(), truth.data().data(),
                                                      region ? region->data().data() : nullptr,
                                                      estimated.size());
  return {c.tp, c.fp, c.fn, c.tn};
}

Metrics metrics(const ConfusionCounts& c) {
  Metrics m;
  const auto tp = static_cast<double>(c.tp);
  const auto fp = static_cast<double>(c.fp);
  const auto fn = static_cast<double>(c.fn);
  if (c.tp + c.fp > 0) {
    m.precision = tp / (tp + fp);
  } else {
    m.precision_degenerate = true;
  }
  if (c.tp + c.fn > 0) {
    m.recall = tp / (tp + fn);
  } else {
    m.recall_degenerate = true;
  }
  if (m.precision + m.recall > 0.0) {
    m.fscore = 2.0 * (m.precision * m.recall) / (m.precision + m.recall);
  } else {
    m.fscore_degenerate = true;
  }
  if (2 * c.tp + c.fp + c.fn > 0) {
    m.dsc = 2.0 * tp / (2.0 * tp + fp + fn);
  } else {
    m.dsc_degenerate = true;
  }
  m.dsc_fscore_diverge = std::abs(m.dsc - m.fscore) > 1e-12;
  return m;
}

namespace {

struct Cloud {
  std::vector<double> x, y, z;
};

Cloud centres(const MaskVolume& m) {
  Cloud c;
  const Geometry& g = m.geometry();
  for (std::size_t v = 0; v < m.size(); ++v) {
    if (!m[v]) continue;
    const Vec3 p = index_to_world(g, g.unravel(v));
    c.x.push_back(p[0]);
    c.y.push_back(p[1]);
    c.z.push_back(p[2]);
  }
  return c;
}

void shuffle_cloud(Cloud& c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = c.x.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(c.x[i - 1], c.x[j]);
    std::swap(c.y[i - 1], c.y[j]);
    std::swap(c.z[i - 1], c.z[j]);
  }
}

/// Largest squared nearest-neighbour distance from voxels of `from` to `to`.
/// Any candidate whose running minimum drops below the current maximum cannot
/// raise it, so its scan stops early.
double directed_sq(const MaskVolume& from, const MaskVolume& to) {
  Cloud target = centres(to);
  shuffle_cloud(target, 0x9e3779b97f4a7c15ULL);
  Cloud source = centres(from);
  shuffle_cloud(source, 0x2545f4914f6cdd1dULL);
  const auto& k = simd::active_kernels();
  const Geometry& g = from.geometry();
  double cmax = 0.0;
  for (std::size_t s = 0; s < source.x.size(); ++s) {
    const double q[3] = {source.x[s], source.y[s], source.z[s]};
    const auto idx = world_to_index(g, Vec3(q[0], q[1], q[2]));
    if (idx && to[g.linear(*idx)]) continue;
    const double d2 = k.min_sqdist(target.x.data(), target.y.data(), target.z.data(),
                                   target.x.size(), q, cmax);
    cmax = std::max(cmax, d2);
  }
  return cmax;
}

void require_nonempty(const MaskVolume& a, const MaskVolume& b) {
  require_same_geometry(a.geometry(), b.geometry(), "hausdorff");
  if (count_nonzero(a) == 0 || count_nonzero(b) == 0) {
    throw ComputeError("hausdorff: distance to an empty mask is undefined");
  }
}

}  // namespace

double directed_hausdorff(const MaskVolume& from, const MaskVolume& to) {
  require_nonempty(from, to);
  return std::sqrt(directed_sq(from, to));
}

double hausdorff(const MaskVolume& a, const MaskVolume& b) {
  require_nonempty(a, b);
  return std::sqrt(std::max(directed_sq(a, b), directed_sq(b, a)));
}

Opening parse_opening(const std::string& s) {
  if (s == "not" || s == "not_opened" || s == "unopened") return Opening::kNot;
  if (s == "partial" || s == "partially" || s == "partially_opened") return Opening::kPartial;
  if (s == "full" || s == "fully" || s == "fully_opened") return Opening::kFull;
  throw InputError("unknown opening state '" + s + "' (expected not|partial|full)");
}

const char* opening_name(Opening o) {
  switch (o) {
    case Opening::kNot: return "not";
    case Opening::kPartial: return "partial";
    case Opening::kFull: return "full";
  }
  return "?";
}

CompletenessRating parse_rating(const KeyValueTree& tree) {
  CompletenessRating r;
  for (std::size_t i = 0; i < kSites.size(); ++i) {
    if (const auto v = tree.get_optional<std::string>(kSites[i])) r.sites[i] = parse_opening(*v);
  }
  return r;
}

CompletenessRating read_rating_file(const std::filesystem::path& path) {
  return parse_rating(read_keyvalue_file(path));
}

double site_distance(Opening rated, Opening reference) {
  return 0.5 * std::abs(static_cast<int>(rated) - static_cast<int>(reference));
}

CompletenessScore completeness_score(const CompletenessRating& rated,
                                     const CompletenessRating& reference) {
  CompletenessScore s;
  double sum = 0.0;
  for (std::size_t i = 0; i < kSites.size(); ++i) {
    if (!rated.sites[i] || !reference.sites[i]) {
      throw InputError(std::string("completeness rating is missing site ") + kSites[i]);
    }
    s.distance[i] = site_distance(*rated.sites[i], *reference.sites[i]);
    sum += s.distance[i];
  }
  // The largest per-site distance is 1.
  s.precision = 100.0 * (1.0 - sum / static_cast<double>(kSites.size()));
  return s;
}

RegionReport evaluate_region(const std::string& label, const MaskVolume& estimated,
                             const MaskVolume& truth, const MaskVolume* region) {
  RegionReport r;
  r.label = label;
  r.counts = confusion(estimated, truth, region);
  r.metrics = metrics(r.counts);
  MaskVolume a = estimated;
  MaskVolume b = truth;
  if (region) {
    for (std::size_t v = 0; v < a.size(); ++v) {
      a[v] = a[v] && (*region)[v];
      b[v] = b[v] && (*region)[v];
    }
  }
  if (count_nonzero(a) > 0 && count_nonzero(b) > 0) {
    r.hausdorff = hausdorff(a, b);
    r.hausdorff_defined = true;
  }
  return r;
}

std::string format_report(const EvaluationReport& r) {
  KeyValueWriter w;
  if (r.stats) {
    w.section("stats");
    w.put("sampling_rate_high_hz", r.stats->sampling_rate_high);
    w.put("sampling_rate_low_hz", r.stats->sampling_rate_low);
    w.put("tracking_rate_percent", r.stats->tracking_rate);
    w.put("duration_s", r.stats->duration);
    w.put("valid_count", r.stats->valid_count);
    w.put("total_count", r.stats->total_count);
  }
  for (const auto& reg : r.regions) {
    std::string name = reg.label;
    std::replace(name.begin(), name.end(), '-', '_');
    w.section("region_" + name);
    w.put("label", reg.label);
    w.put("true_positives", static_cast<long long>(reg.counts.tp));
    w.put("false_positives", static_cast<long long>(reg.counts.fp));
    w.put("false_negatives", static_cast<long long>(reg.counts.fn));
    w.put("true_negatives", static_cast<long long>(reg.counts.tn));
    w.put("dsc", reg.metrics.dsc);
    w.put("precision", reg.metrics.precision);
    w.put("recall", reg.metrics.recall);
    w.put("fscore", reg.metrics.fscore);
    w.put("dsc_degenerate", reg.metrics.dsc_degenerate);
    w.put("precision_degenerate", reg.metrics.precision_degenerate);
    w.put("recall_degenerate", reg.metrics.recall_degenerate);
    w.put("fscore_degenerate", reg.metrics.fscore_degenerate);
    w.put("dsc_fscore_diverge", reg.metrics.dsc_fscore_diverge);
    w.put("hausdorff_mm", reg.hausdorff);
    w.put("hausdorff_defined", reg.hausdorff_defined);
  }
  for (std::size_t i = 0; i < r.completeness.size(); ++i) {
    w.section("completeness_" + std::to_string(i + 1));
    if (i < r.rating_names.size()) w.put("rating", r.rating_names[i]);
    for (std::size_t s = 0; s < kSites.size(); ++s) {
      w.put(std::string("distance_") + kSites[s], r.completeness[i].distance[s]);
    }
    w.put("precision_percent", r.completeness[i].precision);
  }
  if (r.completeness_overall) {
    w.section("completeness");
    w.put("overall_precision_percent", *r.completeness_overall);
  }
  return w.text();
}

}  // namespace vict
