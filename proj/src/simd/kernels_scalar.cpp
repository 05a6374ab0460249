#include <algorithm>
#include <limits>

#include "vict/simd/kernels.hpp"

namespace vict::simd {
namespace {

void threshold_ge_i16(const std::int16_t* in, std::uint8_t* out, std::size_t n,
                      std::int16_t threshold) {
  for (std::size_t i = 0; i < n; ++i) out[i] = in[i] >= threshold ? 1 : 0;
}

std::int32_t masked_min_i16(const std::int16_t* in, const std::uint8_t* mask, std::size_t n) {
  std::int32_t best = std::numeric_limits<std::int32_t>::max();
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i] && in[i] < best) best = in[i];
  }
  return best;
}

void select_i16(const std::int16_t* in, const std::uint8_t* mask, std::int16_t value,
                std::int16_t* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = mask[i] ? value : in[i];
}

Confusion confusion_u8(const std::uint8_t* est, const std::uint8_t* truth,
                       const std::uint8_t* region, std::size_t n) {
  Confusion c;
  for (std::size_t i = 0; i < n; ++i) {
    if (region && !region[i]) continue;
    const bool e = est[i] != 0;
    const bool t = truth[i] != 0;
    if (e && t) {
      ++c.tp;
    } else if (e) {
      ++c.fp;
    } else if (t) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

double min_sqdist(const double* xs, const double* ys, const double* zs, std::size_t n,
                  const double q[3], double stop_below) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - q[0];
    const double dy = ys[i] - q[1];
    const double dz = zs[i] - q[2];
    const double d2 = (dx * dx + dy * dy) + dz * dz;
    if (d2 < best) {
      best = d2;
      if (best < stop_below) return best;
    }
  }
  return best;
}

void capsule_row(const CapsuleRow& row, std::uint8_t* out, std::size_t n) {
  for (std::size_t l = 0; l < n; ++l) {
    const double x = static_cast<double>(row.i_begin + static_cast<int>(l)) * row.spacing_x;
    double c[3];
    for (int r = 0; r < 3; ++r) {
      c[r] = ((row.axis_x[r] * x + row.row_y[r]) + row.row_z[r]) + row.origin[r];
    }
    const double w0 = c[0] - row.p0[0];
    const double w1 = c[1] - row.p0[1];
    const double w2 = c[2] - row.p0[2];
    double t = 0.0;
    if (row.seg_len2 > 0.0) {
      t = ((w0 * row.seg[0] + w1 * row.seg[1]) + w2 * row.seg[2]) / row.seg_len2;
      t = std::min(1.0, std::max(0.0, t));
    }
    const double e0 = c[0] - (row.p0[0] + t * row.seg[0]);
    const double e1 = c[1] - (row.p0[1] + t * row.seg[1]);
    const double e2 = c[2] - (row.p0[2] + t * row.seg[2]);
    const double d2 = (e0 * e0 + e1 * e1) + e2 * e2;
    if (d2 <= row.radius2) out[l] = 1;
  }
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{"scalar",   threshold_ge_i16, masked_min_i16, select_i16,
                                 confusion_u8, min_sqdist,       capsule_row};
  return table;
}

}  // namespace vict::simd
