// Compiled with -mavx2 -mpopcnt; only reached after a runtime CPU check.

#include "vict/simd/kernels.hpp"

#if defined(__x86_64__) && defined(__AVX2__)

#include <immintrin.h>

#include <algorithm>
#include <limits>

namespace vict::simd {
namespace {

void threshold_ge_i16(const std::int16_t* in, std::uint8_t* out, std::size_t n,
                      std::int16_t threshold) {
  const __m256i thr = _mm256_set1_epi16(threshold);
  const __m256i ones = _mm256_set1_epi8(1);
  std::size_t i = 0;
  for (; i + 32 <= n; i += 32) {
    const __m256i a = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(in + i));
    const __m256i b = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(in + i + 16));
    // lt = thr > v, so v >= thr is its complement
    const __m256i lt_a = _mm256_cmpgt_epi16(thr, a);
    const __m256i lt_b = _mm256_cmpgt_epi16(thr, b);
    __m256i packed = _mm256_packs_epi16(lt_a, lt_b);
    packed = _mm256_permute4x64_epi64(packed, 0xD8);
    const __m256i ge = _mm256_andnot_si256(packed, ones);
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(out + i), ge);
  }
  for (; i < n; ++i) out[i] = in[i] >= threshold ? 1 : 0;
}

std::int32_t masked_min_i16(const std::int16_t* in, const std::uint8_t* mask, std::size_t n) {
  const __m256i zero = _mm256_setzero_si256();
  const __m256i top = _mm256_set1_epi16(std::numeric_limits<std::int16_t>::max());
  __m256i best = top;
  __m256i any = zero;
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m256i v = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(in + i));
    const __m256i m = _mm256_cvtepu8_epi16(_mm_loadu_si128(reinterpret_cast<const __m128i*>(mask + i)));
    const __m256i off = _mm256_cmpeq_epi16(m, zero);
    best = _mm256_min_epi16(best, _mm256_blendv_epi8(v, top, off));
    any = _mm256_or_si256(any, m);
  }
  alignas(32) std::int16_t lanes[16];
  _mm256_store_si256(reinterpret_cast<__m256i*>(lanes), best);
  const bool seen = !_mm256_testz_si256(any, any);
  std::int32_t result = std::numeric_limits<std::int32_t>::max();
  if (seen) result = *std::min_element(lanes, lanes + 16);
  for (; i < n; ++i) {
    if (mask[i] && in[i] < result) result = in[i];
  }
  return result;
}

void select_i16(const std::int16_t* in, const std::uint8_t* mask, std::int16_t value,
                std::int16_t* out, std::size_t n) {
  const __m256i zero = _mm256_setzero_si256();
  const __m256i fill = _mm256_set1_epi16(value);
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m256i v = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(in + i));
    const __m256i m = _mm256_cvtepu8_epi16(_mm_loadu_si128(reinterpret_cast<const __m128i*>(mask + i)));
    const __m256i off = _mm256_cmpeq_epi16(m, zero);
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(out + i), _mm256_blendv_epi8(fill, v, off));
  }
  for (; i < n; ++i) out[i] = mask[i] ? value : in[i];
}

Confusion confusion_u8(const std::uint8_t* est, const std::uint8_t* truth,
                       const std::uint8_t* region, std::size_t n) {
  const __m256i zero = _mm256_setzero_si256();
  Confusion c;
  std::size_t i = 0;
  for (; i + 32 <= n; i += 32) {
    const __m256i e = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(est + i));
    const __m256i t = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(truth + i));
    const auto e_bits = ~static_cast<std::uint32_t>(_mm256_movemask_epi8(_mm256_cmpeq_epi8(e, zero)));
    const auto t_bits = ~static_cast<std::uint32_t>(_mm256_movemask_epi8(_mm256_cmpeq_epi8(t, zero)));
    std::uint32_t r_bits = 0xFFFFFFFFu;
    if (region) {
      const __m256i r = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(region + i));
      r_bits = ~static_cast<std::uint32_t>(_mm256_movemask_epi8(_mm256_cmpeq_epi8(r, zero)));
    }
    c.tp += static_cast<std::uint64_t>(_mm_popcnt_u32(e_bits & t_bits & r_bits));
    c.fp += static_cast<std::uint64_t>(_mm_popcnt_u32(e_bits & ~t_bits & r_bits));
    c.fn += static_cast<std::uint64_t>(_mm_popcnt_u32(~e_bits & t_bits & r_bits));
    c.tn += static_cast<std::uint64_t>(_mm_popcnt_u32(~e_bits & ~t_bits & r_bits));
  }
  for (; i < n; ++i) {
    if (region && !region[i]) continue;
    const bool ev = est[i] != 0;
    const bool tv = truth[i] != 0;
    if (ev && tv) {
      ++c.tp;
    } else if (ev) {
      ++c.fp;
    } else if (tv) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

double min_sqdist(const double* xs, const double* ys, const double* zs, std::size_t n,
                  const double q[3], double stop_below) {
  const __m256d qx = _mm256_set1_pd(q[0]);
  const __m256d qy = _mm256_set1_pd(q[1]);
  const __m256d qz = _mm256_set1_pd(q[2]);
  const __m256d stop = _mm256_set1_pd(stop_below);
  __m256d best = _mm256_set1_pd(std::numeric_limits<double>::infinity());
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(xs + i), qx);
    const __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(ys + i), qy);
    const __m256d dz = _mm256_sub_pd(_mm256_loadu_pd(zs + i), qz);
    const __m256d d2 = _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy)),
                                     _mm256_mul_pd(dz, dz));
    best = _mm256_min_pd(best, d2);
    if (_mm256_movemask_pd(_mm256_cmp_pd(d2, stop, _CMP_LT_OQ))) break;
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, best);
  double result = std::min(std::min(lanes[0], lanes[1]), std::min(lanes[2], lanes[3]));
  if (result < stop_below) return result;
  for (; i < n; ++i) {
    const double dx = xs[i] - q[0];
    const double dy = ys[i] - q[1];
    const double dz = zs[i] - q[2];
    const double d2 = (dx * dx + dy * dy) + dz * dz;
    if (d2 < result) {
      result = d2;
      if (result < stop_below) return result;
    }
  }
  return result;
}

void capsule_row(const CapsuleRow& row, std::uint8_t* out, std::size_t n) {
  const __m256d sx = _mm256_set1_pd(row.spacing_x);
  const __m256d zero = _mm256_setzero_pd();
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d len2 = _mm256_set1_pd(row.seg_len2);
  const __m256d r2 = _mm256_set1_pd(row.radius2);
  __m256d ax[3], ry[3], rz[3], org[3], p0[3], seg[3];
  for (int r = 0; r < 3; ++r) {
    ax[r] = _mm256_set1_pd(row.axis_x[r]);
    ry[r] = _mm256_set1_pd(row.row_y[r]);
    rz[r] = _mm256_set1_pd(row.row_z[r]);
    org[r] = _mm256_set1_pd(row.origin[r]);
    p0[r] = _mm256_set1_pd(row.p0[r]);
    seg[r] = _mm256_set1_pd(row.seg[r]);
  }
  const bool has_len = row.seg_len2 > 0.0;
  std::size_t l = 0;
  for (; l + 4 <= n; l += 4) {
    const int base = row.i_begin + static_cast<int>(l);
    const __m256d idx = _mm256_cvtepi32_pd(_mm_setr_epi32(base, base + 1, base + 2, base + 3));
    const __m256d x = _mm256_mul_pd(idx, sx);
    __m256d c[3], w[3];
    for (int r = 0; r < 3; ++r) {
      c[r] = _mm256_add_pd(_mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(ax[r], x), ry[r]), rz[r]),
                           org[r]);
      w[r] = _mm256_sub_pd(c[r], p0[r]);
    }
    __m256d t = zero;
    if (has_len) {
      const __m256d dot = _mm256_add_pd(
          _mm256_add_pd(_mm256_mul_pd(w[0], seg[0]), _mm256_mul_pd(w[1], seg[1])),
          _mm256_mul_pd(w[2], seg[2]));
      t = _mm256_div_pd(dot, len2);
      t = _mm256_min_pd(one, _mm256_max_pd(zero, t));
    }
    __m256d e[3];
    for (int r = 0; r < 3; ++r) {
      e[r] = _mm256_sub_pd(c[r], _mm256_add_pd(p0[r], _mm256_mul_pd(t, seg[r])));
    }
    const __m256d d2 = _mm256_add_pd(
        _mm256_add_pd(_mm256_mul_pd(e[0], e[0]), _mm256_mul_pd(e[1], e[1])),
        _mm256_mul_pd(e[2], e[2]));
    const int hit = _mm256_movemask_pd(_mm256_cmp_pd(d2, r2, _CMP_LE_OQ));
    for (int k = 0; k < 4; ++k) {
      if (hit & (1 << k)) out[l + k] = 1;
    }
  }
  if (l < n) {
    CapsuleRow tail = row;
    tail.i_begin = row.i_begin + static_cast<int>(l);
    scalar_kernels().capsule_row(tail, out + l, n - l);
  }
}

}  // namespace

const KernelTable* avx2_kernels() {
  static const KernelTable table{"avx2",       threshold_ge_i16, masked_min_i16, select_i16,
                                 confusion_u8, min_sqdist,       capsule_row};
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("popcnt");
  return supported ? &table : nullptr;
}

}  // namespace vict::simd

#else

namespace vict::simd {
const KernelTable* avx2_kernels() { return nullptr; }
}  // namespace vict::simd

#endif
