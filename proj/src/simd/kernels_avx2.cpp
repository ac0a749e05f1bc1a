// AVX2 variants. This translation unit is the only one compiled with -mavx2;
// its entry points are reached solely through the dispatch table after a
// runtime CPU check.
#include <immintrin.h>

#include <cmath>

#include "simd/kernels_internal.hpp"

namespace egohand::simd::detail {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// exp(x) for x <= 709. Range reduction x = n ln2 + r with |r| <= ln2/2 and a
// degree-13 Taylor polynomial; relative error stays within a couple of ulp.
inline __m256d exp_pd(__m256d x) {
  const __m256d underflow = _mm256_cmp_pd(x, _mm256_set1_pd(-708.0), _CMP_LT_OQ);
  x = _mm256_min_pd(x, _mm256_set1_pd(709.0));
  x = _mm256_max_pd(x, _mm256_set1_pd(-708.0));

  const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(1.4426950408889634)),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_sub_pd(x, _mm256_mul_pd(n, _mm256_set1_pd(0.693145751953125)));
  r = _mm256_sub_pd(r, _mm256_mul_pd(n, _mm256_set1_pd(1.42860682030941723212e-6)));

  static constexpr double kInvFactorial[] = {
      1.0 / 6227020800.0, 1.0 / 479001600.0, 1.0 / 39916800.0, 1.0 / 3628800.0,
      1.0 / 362880.0,     1.0 / 40320.0,     1.0 / 5040.0,     1.0 / 720.0,
      1.0 / 120.0,        1.0 / 24.0,        1.0 / 6.0,        1.0 / 2.0,
      1.0,                1.0,
  };
  __m256d p = _mm256_set1_pd(kInvFactorial[0]);
  for (int k = 1; k < 14; ++k) {
    p = _mm256_add_pd(_mm256_mul_pd(p, r), _mm256_set1_pd(kInvFactorial[k]));
  }

  const __m128i n32 = _mm256_cvtpd_epi32(n);
  __m256i bits = _mm256_add_epi64(_mm256_cvtepi32_epi64(n32), _mm256_set1_epi64x(1023));
  bits = _mm256_slli_epi64(bits, 52);
  const __m256d result = _mm256_mul_pd(p, _mm256_castsi256_pd(bits));
  return _mm256_andnot_pd(underflow, result);
}

void lnes_weights_avx2(const std::uint64_t* t, std::size_t n, std::uint64_t t_end,
                       double delta_t, float* out) {
  const __m256i tend = _mm256_set1_epi64x(static_cast<long long>(t_end));
  const __m256i magic_bits = _mm256_set1_epi64x(0x4330000000000000LL);
  const __m256d magic = _mm256_set1_pd(4503599627370496.0);  // 2^52
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d zero = _mm256_setzero_pd();
  const __m256d dt = _mm256_set1_pd(delta_t);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256i ti = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(t + i));
    const __m256i age_i = _mm256_sub_epi64(tend, ti);
    // exact u64 -> double for values below 2^52
    const __m256d age = _mm256_sub_pd(_mm256_castsi256_pd(_mm256_or_si256(age_i, magic_bits)), magic);
    const __m256d w = _mm256_max_pd(_mm256_sub_pd(one, _mm256_div_pd(age, dt)), zero);
    _mm_storeu_ps(out + i, _mm256_cvtpd_ps(w));
  }
  for (; i < n; ++i) {
    const double w = 1.0 - static_cast<double>(t_end - t[i]) / delta_t;
    out[i] = static_cast<float>(w > 0.0 ? w : 0.0);
  }
}

SoftmaxMoments softmax_moments_avx2(const float* values, int width, int height, double peak,
                                    double inv_temperature) {
  SoftmaxMoments m;
  const double floor_weight = std::exp(-peak * inv_temperature);
  const __m256d vpeak = _mm256_set1_pd(peak);
  const __m256d vinv = _mm256_set1_pd(inv_temperature);
  const __m256d vfloor = _mm256_set1_pd(floor_weight);
  const __m256d zero = _mm256_setzero_pd();
  const __m256d lane = _mm256_set_pd(3.0, 2.0, 1.0, 0.0);
  for (int y = 0; y < height; ++y) {
    const float* row = values + static_cast<std::size_t>(y) * width;
    __m256d mass = zero;
    __m256d sx = zero;
    int x = 0;
    for (; x + 4 <= width; x += 4) {
      const __m256d v = _mm256_cvtps_pd(_mm_loadu_ps(row + x));
      __m256d w = exp_pd(_mm256_mul_pd(_mm256_sub_pd(v, vpeak), vinv));
      w = _mm256_max_pd(_mm256_sub_pd(w, vfloor), zero);
      const __m256d xs = _mm256_add_pd(_mm256_set1_pd(static_cast<double>(x)), lane);
      mass = _mm256_add_pd(mass, w);
      sx = _mm256_add_pd(sx, _mm256_mul_pd(w, xs));
    }
    double row_mass = hsum(mass);
    double row_x = hsum(sx);
    for (; x < width; ++x) {
      double w = std::exp((static_cast<double>(row[x]) - peak) * inv_temperature) - floor_weight;
      w = w > 0.0 ? w : 0.0;
      row_mass += w;
      row_x += w * x;
    }
    m.mass += row_mass;
    m.sum_x += row_x;
    m.sum_y += row_mass * y;
  }
  return m;
}

void exp_array_avx2(const double* in, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, exp_pd(_mm256_loadu_pd(in + i)));
  }
  for (; i < n; ++i) out[i] = in[i] < -708.0 ? 0.0 : std::exp(in[i]);
}

void outer_product_row_avx2(float* out, const double* row, double scale, std::size_t n) {
  const __m256d s = _mm256_set1_pd(scale);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm_storeu_ps(out + i, _mm256_cvtpd_ps(_mm256_mul_pd(s, _mm256_loadu_pd(row + i))));
  }
  for (; i < n; ++i) out[i] = static_cast<float>(scale * row[i]);
}

double sum_squared_diff_avx2(const float* a, const float* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 va = _mm256_loadu_ps(a + i);
    const __m256 vb = _mm256_loadu_ps(b + i);
    const __m256d d0 = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(va)),
                                     _mm256_cvtps_pd(_mm256_castps256_ps128(vb)));
    const __m256d d1 = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(va, 1)),
                                     _mm256_cvtps_pd(_mm256_extractf128_ps(vb, 1)));
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(d0, d0));
    acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(d1, d1));
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc;
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable table{
      lnes_weights_avx2, softmax_moments_avx2, exp_array_avx2, outer_product_row_avx2,
      sum_squared_diff_avx2,
  };
  return table;
}

}  // namespace egohand::simd::detail
