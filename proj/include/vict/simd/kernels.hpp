#pragma once

// Data-parallel inner loops. Every kernel has a scalar reference and, where
// the CPU allows, an AVX2 variant chosen at runtime. Variants must produce
// bit-identical results; tests/test_simd.cpp checks that.

#include <cstddef>
#include <cstdint>

namespace vict::simd {

struct Confusion {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;
};

/// One x-row of the capsule distance test. Voxel centre component r at x-index
/// i is ((axis_x[r] * (i * spacing_x) + row_y[r]) + row_z[r]) + origin[r],
/// matching index_to_world.
struct CapsuleRow {
  int i_begin = 0;
  double spacing_x = 1.0;
  double axis_x[3] = {1, 0, 0};
  double row_y[3] = {0, 0, 0};
  double row_z[3] = {0, 0, 0};
  double origin[3] = {0, 0, 0};
  double p0[3] = {0, 0, 0};
  double seg[3] = {0, 0, 0};
  double seg_len2 = 0.0;
  double radius2 = 0.0;
};

struct KernelTable {
  const char* name;

  /// out[i] = in[i] >= threshold.
  void (*threshold_ge_i16)(const std::int16_t* in, std::uint8_t* out, std::size_t n,
                           std::int16_t threshold);

  /// Minimum of in[i] over mask[i] != 0; INT32_MAX when the mask is empty.
  std::int32_t (*masked_min_i16)(const std::int16_t* in, const std::uint8_t* mask,
                                 std::size_t n);

  /// out[i] = mask[i] ? value : in[i].
  void (*select_i16)(const std::int16_t* in, const std::uint8_t* mask, std::int16_t value,
                     std::int16_t* out, std::size_t n);

  /// Voxel confusion counts; region may be null (whole range).
  Confusion (*confusion_u8)(const std::uint8_t* est, const std::uint8_t* truth,
                            const std::uint8_t* region, std::size_t n);

  /// Minimum squared distance from q to the points (xs, ys, zs). Returns as
  /// soon as a value below stop_below is seen (that value is returned).
  double (*min_sqdist)(const double* xs, const double* ys, const double* zs, std::size_t n,
                       const double q[3], double stop_below);

  /// out[i] |= dist(centre_i, segment)^2 <= radius^2, for i in [0, n).
  void (*capsule_row)(const CapsuleRow& row, std::uint8_t* out, std::size_t n);
};

const KernelTable& scalar_kernels();

/// nullptr when AVX2 is not compiled in or not supported by this CPU.
const KernelTable* avx2_kernels();

/// The table used by the library. AVX2 when available unless the environment
/// variable VICT_SIMD=scalar is set.
const KernelTable& active_kernels();

}  // namespace vict::simd
