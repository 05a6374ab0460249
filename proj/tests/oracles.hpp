#pragma once

// Brute-force reference implementations used by the unit and acceptance
// tests. They favour obviousness over speed and share no code with the
// library beyond the volume containers.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <set>
#include <vector>

#include "vict/evaluation.hpp"
#include "vict/gpr.hpp"
#include "vict/removal.hpp"
#include "vict/volume.hpp"

namespace vict::oracle {

inline Geometry cube(int n, double spacing = 1.0, Vec3 origin = Vec3::Zero()) {
  Geometry g;
  g.dims = {n, n, n};
  g.spacing = Vec3::Constant(spacing);
  g.origin = origin;
  return g;
}

/// Bernoulli mask with a random density in [lo, hi].
inline MaskVolume random_mask(const Geometry& g, std::mt19937_64& rng, double lo = 0.0,
                              double hi = 0.5) {
  std::uniform_real_distribution<double> dens(lo, hi);
  const double p = dens(rng);
  std::bernoulli_distribution on(p);
  MaskVolume m(g, 0);
  for (std::size_t v = 0; v < m.size(); ++v) m[v] = on(rng) ? 1 : 0;
  return m;
}

/// Mask with exactly `count` voxels set (or all, if fewer exist).
inline MaskVolume sparse_mask(const Geometry& g, std::mt19937_64& rng, std::size_t count) {
  MaskVolume m(g, 0);
  std::uniform_int_distribution<std::size_t> pick(0, m.size() - 1);
  count = std::min(count, m.size());
  std::size_t placed = 0;
  while (placed < count) {
    const auto v = pick(rng);
    if (!m[v]) {
      m[v] = 1;
      ++placed;
    }
  }
  return m;
}

inline std::set<std::size_t> members(const MaskVolume& m) {
  std::set<std::size_t> s;
  for (std::size_t v = 0; v < m.size(); ++v) {
    if (m[v]) s.insert(v);
  }
  return s;
}

/// Confusion counts by set arithmetic on voxel index sets.
inline ConfusionCounts set_confusion(const MaskVolume& est, const MaskVolume& truth) {
  const auto a = members(est);
  const auto b = members(truth);
  std::vector<std::size_t> both;
  std::vector<std::size_t> only_a;
  std::vector<std::size_t> only_b;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(only_a));
  std::set_difference(b.begin(), b.end(), a.begin(), a.end(), std::back_inserter(only_b));
  ConfusionCounts c;
  c.tp = both.size();
  c.fp = only_a.size();
  c.fn = only_b.size();
  c.tn = est.size() - both.size() - only_a.size() - only_b.size();
  return c;
}

/// Largest over a of min over b of the squared centre distance.
inline double directed_sq(const MaskVolume& a, const MaskVolume& b) {
  const Geometry& g = a.geometry();
  double best = 0.0;
  for (std::size_t u : members(a)) {
    const Vec3 p = index_to_world(g, g.unravel(u));
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t w : members(b)) {
      const Vec3 q = index_to_world(g, g.unravel(w));
      const double dx = p[0] - q[0];
      const double dy = p[1] - q[1];
      const double dz = p[2] - q[2];
      m = std::min(m, dx * dx + dy * dy + dz * dz);
    }
    best = std::max(best, m);
  }
  return best;
}

inline double hausdorff(const MaskVolume& a, const MaskVolume& b) {
  return std::sqrt(std::max(directed_sq(a, b), directed_sq(b, a)));
}

struct DenseGpr {
  Eigen::MatrixXd mean;
  Eigen::MatrixXd cov;
};

/// Posterior by explicit inversion of K + noise I.
inline DenseGpr dense_gpr(const KernelSpec& k, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                          const Eigen::MatrixXd& xq) {
  auto kv = [&](const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
    double s = 0.0;
    for (int d = 0; d < 4; ++d) s += std::pow((a[d] - b[d]) / k.length_scales[d], 2);
    return k.signal_variance * std::exp(-0.5 * s);
  };
  const auto n = x.rows();
  const auto m = xq.rows();
  Eigen::MatrixXd K(n, n), Ks(m, n), Kss(m, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) K(i, j) = kv(x.row(i), x.row(j)) + (i == j ? k.noise_variance : 0.0);
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) Ks(i, j) = kv(xq.row(i), x.row(j));
    for (Eigen::Index j = 0; j < m; ++j) Kss(i, j) = kv(xq.row(i), xq.row(j));
  }
  const Eigen::MatrixXd inv = K.fullPivLu().inverse();
  const Eigen::RowVectorXd mu = y.colwise().mean();
  DenseGpr out;
  out.mean = (Ks * inv * (y.rowwise() - mu)).rowwise() + mu;
  out.cov = Kss - Ks * inv * Ks.transpose();
  return out;
}

/// Every level d in 1..L-1 tested directly against the threshold rule, with
/// finite differences written out by hand.
inline ThresholdChoice scan_threshold(const std::vector<std::uint64_t>& v) {
  const int levels = static_cast<int>(v.size());
  const int n = levels - 1;  // levels 1..L-1
  std::vector<double> f(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) f[static_cast<std::size_t>(i)] = static_cast<double>(v[static_cast<std::size_t>(i + 1)]);
  auto diff = [](const std::vector<double>& y) {
    const std::size_t m = y.size();
    std::vector<double> d(m, 0.0);
    if (m < 2) return d;
    d[0] = y[1] - y[0];
    d[m - 1] = y[m - 1] - y[m - 2];
    for (std::size_t i = 1; i + 1 < m; ++i) d[i] = (y[i + 1] - y[i - 1]) / 2.0;
    return d;
  };
  const auto d2 = diff(diff(f));
  const auto d3 = diff(d2);
  double th = 0.0;
  for (double x : f) th += x;
  th /= static_cast<double>(n);
  for (int i = 0; i < n; ++i) {
    if (d2[static_cast<std::size_t>(i)] > th && d3[static_cast<std::size_t>(i)] <= th) return {i + 1, false};
  }
  double num = 0.0;
  double den = 0.0;
  for (int d = 1; d < levels; ++d) {
    if (v[static_cast<std::size_t>(d)] > 0) {
      num += d;
      den += 1.0;
    }
  }
  return {static_cast<int>(std::ceil(num / den)), true};
}

/// Voxels whose centre lies within r of segment [p0, p1] by a distance test
/// over the whole lattice, plus the voxels holding the end points.
inline std::set<std::size_t> capsule(const Geometry& g, const Vec3& p0, const Vec3& p1, double r) {
  std::set<std::size_t> out;
  const Vec3 d = p1 - p0;
  for (std::size_t v = 0; v < g.voxel_count(); ++v) {
    const Vec3 c = index_to_world(g, g.unravel(v));
    double t = d.squaredNorm() > 0.0 ? (c - p0).dot(d) / d.squaredNorm() : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    if ((c - (p0 + t * d)).norm() <= r) out.insert(v);
  }
  for (const Vec3& p : {p0, p1}) {
    if (const auto idx = world_to_index(g, p)) out.insert(g.linear(*idx));
  }
  return out;
}

}  // namespace vict::oracle
