#include "vict/volume.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vict/simd/kernels.hpp"

namespace vict {

bool is_orthonormal(const Mat3& m, double tol) {
  return ((m.transpose() * m) - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol;
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

RigidTransform RigidTransform::compose(const RigidTransform& inner) const {
  RigidTransform out;
  out.rotation = rotation * inner.rotation;
  out.translation = rotation * inner.translation + translation;
  return out;
}

void RigidTransform::validate(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) {
    throw InputError("rigid transform has non-finite entries");
  }
  if (!is_orthonormal(rotation, tol) || std::abs(rotation.determinant() - 1.0) > tol) {
    throw InputError("rigid transform rotation is not a proper rotation");
  }
}

const char* dtype_name(DType t) {
  switch (t) {
    case DType::kHu16: return "int16";
    case DType::kFloat32: return "float32";
    case DType::kDensity64: return "float64";
    case DType::kMask8: return "uint8";
  }
  return "?";
}

void Geometry::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] <= 0) throw InputError("volume dims must be positive");
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) {
      throw InputError("volume spacing must be positive");
    }
  }
  if (!origin.allFinite()) throw InputError("volume origin must be finite");
  if (!is_orthonormal(direction)) throw InputError("volume direction must be orthonormal");
}

Vec3 world_to_continuous(const Geometry& g, const WorldPoint& p) {
  const Vec3 local = g.direction.transpose() * (p - g.origin);
  return local.cwiseQuotient(g.spacing);
}

std::optional<Index3> world_to_index(const Geometry& g, const WorldPoint& p) {
  if (!p.allFinite()) return std::nullopt;
  const Vec3 c = world_to_continuous(g, p);
  Index3 idx;
  for (int a = 0; a < 3; ++a) {
    const double r = std::floor(c[a] + 0.5);
    if (r < 0.0 || r >= static_cast<double>(g.dims[a])) return std::nullopt;
    idx[a] = static_cast<int>(r);
  }
  return idx;
}

DType dtype_of(const AnyVolume& v) {
  return std::visit([](const auto& vol) {
    return dtype_of<typename std::decay_t<decltype(vol)>::value_type>();
  }, v);
}

const Geometry& geometry_of(const AnyVolume& v) {
  return std::visit([](const auto& vol) -> const Geometry& { return vol.geometry(); }, v);
}

void require_same_geometry(const Geometry& a, const Geometry& b, const char* what) {
  if (!(a == b)) throw GeometryMismatch(std::string(what) + ": volume lattices differ");
}

void validate_mask(const MaskVolume& m) {
  for (auto v : m.data()) {
    if (v > 1) throw InputError("mask volume contains values other than 0 and 1");
  }
}

PointRaster rasterize_points(const Geometry& g, std::span<const WeightedPoint> samples) {
  PointRaster out{DensityVolume(g, 0.0), 0, 0.0};
  for (const auto& s : samples) {
    if (const auto idx = world_to_index(g, s.point)) {
      out.grid[g.linear(*idx)] += s.weight;
      out.in_bounds_weight += s.weight;
    } else {
      ++out.out_of_bounds;
    }
  }
  return out;
}

std::vector<std::size_t> capsule_voxels(const Geometry& g, const WorldPoint& p0,
                                        const WorldPoint& p1, double radius) {
  if (radius < 0.0) throw InputError("capsule radius must be non-negative");
  std::vector<std::size_t> hits;

  // Conservative index-space box around the capsule.
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const auto* p : {&p0, &p1}) {
    const Vec3 c = world_to_continuous(g, *p);
    lo = lo.cwiseMin(c);
    hi = hi.cwiseMax(c);
  }
  Index3 first, last;
  for (int a = 0; a < 3; ++a) {
    const double pad = radius / g.spacing[a] + 1.0;
    const double f = std::max(0.0, std::floor(lo[a] - pad));
    const double l = std::min(static_cast<double>(g.dims[a] - 1), std::ceil(hi[a] + pad));
    if (f > l) return {};
    first[a] = static_cast<int>(f);
    last[a] = static_cast<int>(l);
  }

  const auto& k = simd::active_kernels();
  simd::CapsuleRow row;
  row.i_begin = first[0];
  row.spacing_x = g.spacing[0];
  for (int r = 0; r < 3; ++r) {
    row.axis_x[r] = g.direction(r, 0);
    row.origin[r] = g.origin[r];
    row.p0[r] = p0[r];
    row.seg[r] = p1[r] - p0[r];
  }
  row.seg_len2 = (row.seg[0] * row.seg[0] + row.seg[1] * row.seg[1]) + row.seg[2] * row.seg[2];
  row.radius2 = radius * radius;

  const std::size_t width = static_cast<std::size_t>(last[0] - first[0] + 1);
  std::vector<std::uint8_t> scratch(width);
  for (int kz = first[2]; kz <= last[2]; ++kz) {
    const double z = static_cast<double>(kz) * g.spacing[2];
    for (int jy = first[1]; jy <= last[1]; ++jy) {
      const double y = static_cast<double>(jy) * g.spacing[1];
      for (int r = 0; r < 3; ++r) {
        row.row_y[r] = g.direction(r, 1) * y;
        row.row_z[r] = g.direction(r, 2) * z;
      }
      std::fill(scratch.begin(), scratch.end(), 0);
      k.capsule_row(row, scratch.data(), width);
      const std::size_t base = g.linear(first[0], jy, kz);
      for (std::size_t i = 0; i < width; ++i) {
        if (scratch[i]) hits.push_back(base + i);
      }
    }
  }
  for (const auto* p : {&p0, &p1}) {
    if (const auto idx = world_to_index(g, *p)) {
      const std::size_t n = g.linear(*idx);
      const auto it = std::lower_bound(hits.begin(), hits.end(), n);
      if (it == hits.end() || *it != n) hits.insert(it, n);
    }
  }
  return hits;
}

MaskVolume rasterize_capsule(const Geometry& g, const WorldPoint& p0, const WorldPoint& p1,
                             double radius) {
  MaskVolume out(g, 0);
  for (auto n : capsule_voxels(g, p0, p1, radius)) out[n] = 1;
  return out;
}

MaskVolume threshold_mask(const HuVolume& hu, std::int16_t threshold) {
  MaskVolume out(hu.geometry(), 0);
  simd::active_kernels().threshold_ge_i16(hu.data().data(), out.data().data(), hu.size(),
                                          threshold);
  return out;
}

MaskVolume threshold_mask(const AnyVolume& v, std::int16_t threshold) {
  return threshold_mask(expect<std::int16_t>(v, "threshold_mask"), threshold);
}

std::size_t count_nonzero(const MaskVolume& m) {
  return static_cast<std::size_t>(
      std::count_if(m.data().begin(), m.data().end(), [](auto v) { return v != 0; }));
}

}  // namespace vict
