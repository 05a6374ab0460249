#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "vict/error.hpp"
#include "vict/geometry.hpp"

namespace vict {

using Index3 = std::array<int, 3>;

enum class DType { kHu16, kFloat32, kDensity64, kMask8 };

const char* dtype_name(DType t);

/// Lattice of a volume: voxel counts, spacing, origin of voxel (0,0,0) centre
/// and an orthonormal direction matrix whose columns are the voxel axes.
/// Data is stored x-fastest.
struct Geometry {
  Index3 dims{1, 1, 1};
  Vec3 spacing = Vec3::Ones();
  Vec3 origin = Vec3::Zero();
  Mat3 direction = Mat3::Identity();

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  std::size_t linear(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * dims[1] + j) * dims[0] + i;
  }
  std::size_t linear(const Index3& idx) const { return linear(idx[0], idx[1], idx[2]); }
  Index3 unravel(std::size_t n) const {
    const auto nx = static_cast<std::size_t>(dims[0]);
    const auto ny = static_cast<std::size_t>(dims[1]);
    return {static_cast<int>(n % nx), static_cast<int>((n / nx) % ny),
            static_cast<int>(n / (nx * ny))};
  }
  bool contains(const Index3& idx) const {
    return idx[0] >= 0 && idx[1] >= 0 && idx[2] >= 0 && idx[0] < dims[0] &&
           idx[1] < dims[1] && idx[2] < dims[2];
  }

  /// Throws InputError when dims/spacing are non-positive or direction is not orthonormal.
  void validate() const;

  friend bool operator==(const Geometry& a, const Geometry& b) {
    return a.dims == b.dims && a.spacing == b.spacing && a.origin == b.origin &&
           a.direction == b.direction;
  }
};

/// World position of a voxel centre. Evaluated component-wise as
/// ((D_r0*(i*sx) + D_r1*(j*sy)) + D_r2*(k*sz)) + o_r; the SIMD kernels
/// reproduce this order exactly.
inline Vec3 index_to_world(const Geometry& g, const Index3& idx) {
  const double x = static_cast<double>(idx[0]) * g.spacing[0];
  const double y = static_cast<double>(idx[1]) * g.spacing[1];
  const double z = static_cast<double>(idx[2]) * g.spacing[2];
  Vec3 out;
  for (int r = 0; r < 3; ++r) {
    out[r] = ((g.direction(r, 0) * x + g.direction(r, 1) * y) + g.direction(r, 2) * z) +
             g.origin[r];
  }
  return out;
}

/// Continuous (fractional) index coordinates of a world point.
Vec3 world_to_continuous(const Geometry& g, const WorldPoint& p);

/// Nearest voxel centre, ties toward +inf on each axis. nullopt when outside.
std::optional<Index3> world_to_index(const Geometry& g, const WorldPoint& p);

template <class T>
class Volume {
 public:
  using value_type = T;

  Volume() = default;
  explicit Volume(Geometry g, T fill = T{}) : geom_(std::move(g)) {
    geom_.validate();
    data_.assign(geom_.voxel_count(), fill);
  }
  Volume(Geometry g, std::vector<T> data) : geom_(std::move(g)), data_(std::move(data)) {
    geom_.validate();
    if (data_.size() != geom_.voxel_count()) {
      throw InputError("volume data length does not match dims");
    }
  }

  const Geometry& geometry() const { return geom_; }
  std::size_t size() const { return data_.size(); }

  T& operator[](std::size_t n) { return data_[n]; }
  const T& operator[](std::size_t n) const { return data_[n]; }
  T& at(int i, int j, int k) { return data_[geom_.linear(i, j, k)]; }
  const T& at(int i, int j, int k) const { return data_[geom_.linear(i, j, k)]; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  friend bool operator==(const Volume& a, const Volume& b) {
    return a.geom_ == b.geom_ && a.data_ == b.data_;
  }

 private:
  Geometry geom_;
  std::vector<T> data_;
};

using HuVolume = Volume<std::int16_t>;
using FloatVolume = Volume<float>;
using DensityVolume = Volume<double>;
using MaskVolume = Volume<std::uint8_t>;

/// A volume as read from disk, dtype not known until runtime.
using AnyVolume = std::variant<HuVolume, FloatVolume, MaskVolume>;

template <class T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<std::int16_t>() { return DType::kHu16; }
template <>
constexpr DType dtype_of<float>() { return DType::kFloat32; }
template <>
constexpr DType dtype_of<double>() { return DType::kDensity64; }
template <>
constexpr DType dtype_of<std::uint8_t>() { return DType::kMask8; }

DType dtype_of(const AnyVolume& v);
const Geometry& geometry_of(const AnyVolume& v);

/// Throws InputError unless the variant holds the requested type.
template <class T>
const Volume<T>& expect(const AnyVolume& v, const char* role) {
  if (const auto* p = std::get_if<Volume<T>>(&v)) return *p;
  throw InputError(std::string(role) + ": expected dtype " + dtype_name(dtype_of<T>()) +
                   ", got " + dtype_name(dtype_of(v)));
}

/// Throws GeometryMismatch when lattices differ.
void require_same_geometry(const Geometry& a, const Geometry& b, const char* what);

/// Mask voxels must be 0 or 1.
void validate_mask(const MaskVolume& m);

struct WeightedPoint {
  WorldPoint point;
  double weight = 0.0;
};

struct PointRaster {
  DensityVolume grid;
  std::size_t out_of_bounds = 0;
  double in_bounds_weight = 0.0;
};

/// Deposits each weight into the single voxel whose centre is nearest the
/// point. Sequential accumulation in input order.
PointRaster rasterize_points(const Geometry& g, std::span<const WeightedPoint> samples);

/// Linear indices, ascending, of voxels whose centre lies within `radius` of
/// segment [p0, p1], plus the voxels containing p0 and p1 (so that a
/// zero-radius capsule still marks its end voxels).
std::vector<std::size_t> capsule_voxels(const Geometry& g, const WorldPoint& p0,
                                        const WorldPoint& p1, double radius);

MaskVolume rasterize_capsule(const Geometry& g, const WorldPoint& p0, const WorldPoint& p1,
                             double radius);

/// 1 where intensity >= threshold.
MaskVolume threshold_mask(const HuVolume& hu, std::int16_t threshold);
MaskVolume threshold_mask(const AnyVolume& v, std::int16_t threshold);

std::size_t count_nonzero(const MaskVolume& m);

}  // namespace vict
