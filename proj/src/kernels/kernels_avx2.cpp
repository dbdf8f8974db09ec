// SPDX-License-Identifier: Apache-2.0
// AVX2 variants. Compiled with -mavx2; only reached after a runtime check.
#include <immintrin.h>

#include <cmath>
#include <limits>

#include "wardpose/kernels.hpp"

namespace wardpose::kernels::avx2 {

MinMax masked_minmax(const PointColumns& pts, double min_confidence) noexcept {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const std::size_t n = pts.x.size();
  const __m256d pos_inf = _mm256_set1_pd(inf);
  const __m256d neg_inf = _mm256_set1_pd(-inf);
  const __m256d thr = _mm256_set1_pd(min_confidence);
  const __m256d abs_mask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));

  __m256d vmin_x = pos_inf, vmin_y = pos_inf, vmax_x = neg_inf, vmax_y = neg_inf;
  std::size_t count = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d x = _mm256_loadu_pd(pts.x.data() + i);
    const __m256d y = _mm256_loadu_pd(pts.y.data() + i);
    const __m256d c = _mm256_loadu_pd(pts.confidence.data() + i);
    // valid bytes -> 64-bit lane mask
    const __m256i v8 = _mm256_cvtepu8_epi64(_mm_cvtsi32_si128(
        static_cast<int>(static_cast<std::uint32_t>(pts.valid[i]) |
                         (static_cast<std::uint32_t>(pts.valid[i + 1]) << 8) |
                         (static_cast<std::uint32_t>(pts.valid[i + 2]) << 16) |
                         (static_cast<std::uint32_t>(pts.valid[i + 3]) << 24))));
    const __m256d valid = _mm256_castsi256_pd(
        _mm256_xor_si256(_mm256_cmpeq_epi64(v8, _mm256_setzero_si256()), _mm256_set1_epi64x(-1)));
    const __m256d conf_ok = _mm256_cmp_pd(c, thr, _CMP_GE_OQ);
    const __m256d x_fin = _mm256_cmp_pd(_mm256_and_pd(x, abs_mask), pos_inf, _CMP_LT_OQ);
    const __m256d y_fin = _mm256_cmp_pd(_mm256_and_pd(y, abs_mask), pos_inf, _CMP_LT_OQ);
    const __m256d keep = _mm256_and_pd(_mm256_and_pd(valid, conf_ok), _mm256_and_pd(x_fin, y_fin));

    vmin_x = _mm256_min_pd(vmin_x, _mm256_blendv_pd(pos_inf, x, keep));
    vmin_y = _mm256_min_pd(vmin_y, _mm256_blendv_pd(pos_inf, y, keep));
    vmax_x = _mm256_max_pd(vmax_x, _mm256_blendv_pd(neg_inf, x, keep));
    vmax_y = _mm256_max_pd(vmax_y, _mm256_blendv_pd(neg_inf, y, keep));
    count += static_cast<std::size_t>(__builtin_popcount(static_cast<unsigned>(_mm256_movemask_pd(keep))));
  }

  alignas(32) double lanes[4][4];
  _mm256_store_pd(lanes[0], vmin_x);
  _mm256_store_pd(lanes[1], vmin_y);
  _mm256_store_pd(lanes[2], vmax_x);
  _mm256_store_pd(lanes[3], vmax_y);
  MinMax m{inf, inf, -inf, -inf, count};
  for (int k = 0; k < 4; ++k) {
    m.min_x = lanes[0][k] < m.min_x ? lanes[0][k] : m.min_x;
    m.min_y = lanes[1][k] < m.min_y ? lanes[1][k] : m.min_y;
    m.max_x = lanes[2][k] > m.max_x ? lanes[2][k] : m.max_x;
    m.max_y = lanes[3][k] > m.max_y ? lanes[3][k] : m.max_y;
  }

  const PointColumns tail{pts.x.subspan(i), pts.y.subspan(i), pts.confidence.subspan(i), pts.valid.subspan(i)};
  const MinMax t = scalar::masked_minmax(tail, min_confidence);
  m.min_x = t.min_x < m.min_x ? t.min_x : m.min_x;
  m.min_y = t.min_y < m.min_y ? t.min_y : m.min_y;
  m.max_x = t.max_x > m.max_x ? t.max_x : m.max_x;
  m.max_y = t.max_y > m.max_y ? t.max_y : m.max_y;
  m.count += t.count;
  return m;
}

void iou_one_to_many(const CornerBox& a, std::span<const CornerBox> others, std::span<double> out) noexcept {
  static_assert(sizeof(CornerBox) == 4 * sizeof(double));
  const double area_a_s = (a.x2 - a.x1) * (a.y2 - a.y1);
  const __m256d ax1 = _mm256_set1_pd(a.x1);
  const __m256d ay1 = _mm256_set1_pd(a.y1);
  const __m256d ax2 = _mm256_set1_pd(a.x2);
  const __m256d ay2 = _mm256_set1_pd(a.y2);
  const __m256d area_a = _mm256_set1_pd(area_a_s);
  const __m256d zero = _mm256_setzero_pd();
  const __m256d one = _mm256_set1_pd(1.0);

  const std::size_t n = others.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const double* base = &others[i].x1;
    // 4x4 transpose: rows are boxes, columns are x1,y1,x2,y2
    const __m256d r0 = _mm256_loadu_pd(base);
    const __m256d r1 = _mm256_loadu_pd(base + 4);
    const __m256d r2 = _mm256_loadu_pd(base + 8);
    const __m256d r3 = _mm256_loadu_pd(base + 12);
    const __m256d t0 = _mm256_unpacklo_pd(r0, r1);
    const __m256d t1 = _mm256_unpackhi_pd(r0, r1);
    const __m256d t2 = _mm256_unpacklo_pd(r2, r3);
    const __m256d t3 = _mm256_unpackhi_pd(r2, r3);
    const __m256d bx1 = _mm256_permute2f128_pd(t0, t2, 0x20);
    const __m256d by1 = _mm256_permute2f128_pd(t1, t3, 0x20);
    const __m256d bx2 = _mm256_permute2f128_pd(t0, t2, 0x31);
    const __m256d by2 = _mm256_permute2f128_pd(t1, t3, 0x31);

    const __m256d iw = _mm256_max_pd(_mm256_sub_pd(_mm256_min_pd(ax2, bx2), _mm256_max_pd(ax1, bx1)), zero);
    const __m256d ih = _mm256_max_pd(_mm256_sub_pd(_mm256_min_pd(ay2, by2), _mm256_max_pd(ay1, by1)), zero);
    const __m256d inter = _mm256_mul_pd(iw, ih);
    const __m256d area_b = _mm256_mul_pd(_mm256_sub_pd(bx2, bx1), _mm256_sub_pd(by2, by1));
    const __m256d uni = _mm256_sub_pd(_mm256_add_pd(area_a, area_b), inter);
    const __m256d ratio = _mm256_min_pd(_mm256_div_pd(inter, uni), one);
    const __m256d positive = _mm256_cmp_pd(uni, zero, _CMP_GT_OQ);
    _mm256_storeu_pd(out.data() + i, _mm256_blendv_pd(zero, ratio, positive));
  }
  scalar::iou_one_to_many(a, others.subspan(i), out.subspan(i));
}

RgbSum rgb_sum(std::span<const std::uint8_t> pixels) noexcept {
  // 16 pixels (48 bytes) per step: deinterleave with pshufb, then psadbw
  // against zero for horizontal byte sums.
  const std::size_t n_bytes = pixels.size() - pixels.size() % 3;
  const std::uint8_t* p = pixels.data();
  const char z = static_cast<char>(0x80);
  // Channel c of pixel k sits at byte 3k + c of the 48-byte block.
  const __m128i r_m0 = _mm_setr_epi8(0, 3, 6, 9, 12, 15, z, z, z, z, z, z, z, z, z, z);
  const __m128i r_m1 = _mm_setr_epi8(z, z, z, z, z, z, 2, 5, 8, 11, 14, z, z, z, z, z);
  const __m128i r_m2 = _mm_setr_epi8(z, z, z, z, z, z, z, z, z, z, z, 1, 4, 7, 10, 13);
  const __m128i g_m0 = _mm_setr_epi8(1, 4, 7, 10, 13, z, z, z, z, z, z, z, z, z, z, z);
  const __m128i g_m1 = _mm_setr_epi8(z, z, z, z, z, 0, 3, 6, 9, 12, 15, z, z, z, z, z);
  const __m128i g_m2 = _mm_setr_epi8(z, z, z, z, z, z, z, z, z, z, z, 2, 5, 8, 11, 14);
  const __m128i b_m0 = _mm_setr_epi8(2, 5, 8, 11, 14, z, z, z, z, z, z, z, z, z, z, z);
  const __m128i b_m1 = _mm_setr_epi8(z, z, z, z, z, 1, 4, 7, 10, 13, z, z, z, z, z, z);
  const __m128i b_m2 = _mm_setr_epi8(z, z, z, z, z, z, z, z, z, z, 0, 3, 6, 9, 12, 15);
  const __m128i zero = _mm_setzero_si128();

  __m128i acc_r = zero, acc_g = zero, acc_b = zero;
  std::size_t i = 0;
  for (; i + 48 <= n_bytes; i += 48) {
    const __m128i c0 = _mm_loadu_si128(reinterpret_cast<const __m128i*>(p + i));
    const __m128i c1 = _mm_loadu_si128(reinterpret_cast<const __m128i*>(p + i + 16));
    const __m128i c2 = _mm_loadu_si128(reinterpret_cast<const __m128i*>(p + i + 32));
    const __m128i r = _mm_or_si128(_mm_or_si128(_mm_shuffle_epi8(c0, r_m0), _mm_shuffle_epi8(c1, r_m1)),
                                   _mm_shuffle_epi8(c2, r_m2));
    const __m128i g = _mm_or_si128(_mm_or_si128(_mm_shuffle_epi8(c0, g_m0), _mm_shuffle_epi8(c1, g_m1)),
                                   _mm_shuffle_epi8(c2, g_m2));
    const __m128i b = _mm_or_si128(_mm_or_si128(_mm_shuffle_epi8(c0, b_m0), _mm_shuffle_epi8(c1, b_m1)),
                                   _mm_shuffle_epi8(c2, b_m2));
    acc_r = _mm_add_epi64(acc_r, _mm_sad_epu8(r, zero));
    acc_g = _mm_add_epi64(acc_g, _mm_sad_epu8(g, zero));
    acc_b = _mm_add_epi64(acc_b, _mm_sad_epu8(b, zero));
  }
  auto hsum = [](__m128i v) {
    return static_cast<std::uint64_t>(_mm_cvtsi128_si64(v)) +
           static_cast<std::uint64_t>(_mm_extract_epi64(v, 1));
  };
  RgbSum s = scalar::rgb_sum(pixels.subspan(i, n_bytes - i));
  s.r += hsum(acc_r);
  s.g += hsum(acc_g);
  s.b += hsum(acc_b);
  return s;
}

}  // namespace wardpose::kernels::avx2
