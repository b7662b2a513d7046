// AVX2 + FMA variants. Built with -mavx2 -mfma; only called after the
// dispatcher has confirmed CPU support.
#include <immintrin.h>

#include <cstddef>

#include "kernels_impl.hpp"

namespace mbps::kernels::detail {

namespace {

// exp via Cody-Waite reduction and a rational approximation on
// [-ln2/2, ln2/2]; inputs are clamped to the normal range.
inline __m256d exp4(__m256d x) {
  const __m256d hi = _mm256_set1_pd(709.0);
  const __m256d lo = _mm256_set1_pd(-708.0);
  x = _mm256_min_pd(_mm256_max_pd(x, lo), hi);

  const __m256d fx = _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(1.4426950408889634073599)),
                                     _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  x = _mm256_fnmadd_pd(fx, _mm256_set1_pd(6.93145751953125E-1), x);
  x = _mm256_fnmadd_pd(fx, _mm256_set1_pd(1.42860682030941723212E-6), x);

  const __m256d xx = _mm256_mul_pd(x, x);
  __m256d px = _mm256_set1_pd(1.26177193074810590878E-4);
  px = _mm256_fmadd_pd(px, xx, _mm256_set1_pd(3.02994407707441961300E-2));
  px = _mm256_fmadd_pd(px, xx, _mm256_set1_pd(9.99999999999999999910E-1));
  px = _mm256_mul_pd(px, x);
  __m256d qx = _mm256_set1_pd(3.00198505138664455042E-6);
  qx = _mm256_fmadd_pd(qx, xx, _mm256_set1_pd(2.52448340349684104192E-3));
  qx = _mm256_fmadd_pd(qx, xx, _mm256_set1_pd(2.27265548208155028766E-1));
  qx = _mm256_fmadd_pd(qx, xx, _mm256_set1_pd(2.00000000000000000009E0));

  __m256d r = _mm256_div_pd(px, _mm256_sub_pd(qx, px));
  r = _mm256_fmadd_pd(_mm256_set1_pd(2.0), r, _mm256_set1_pd(1.0));

  // 2^fx assembled in the exponent field.
  const __m128i n32 = _mm256_cvtpd_epi32(fx);
  __m256i n64 = _mm256_cvtepi32_epi64(n32);
  n64 = _mm256_add_epi64(n64, _mm256_set1_epi64x(1023));
  n64 = _mm256_slli_epi64(n64, 52);
  return _mm256_mul_pd(r, _mm256_castsi256_pd(n64));
}

// Natural log for positive normal inputs: frexp by bit manipulation, then
// the atanh-form rational approximation.
inline __m256d log4(__m256d x) {
  const __m256i bits = _mm256_castpd_si256(x);
  const __m256i exp_bits = _mm256_srli_epi64(bits, 52);
  // exponent - 1022 fits in 32 bits; convert through the low halves.
  const __m256i e64 = _mm256_sub_epi64(exp_bits, _mm256_set1_epi64x(1022));
  const __m128i e32 = _mm256_castsi256_si128(
      _mm256_permutevar8x32_epi32(e64, _mm256_setr_epi32(0, 2, 4, 6, 0, 0, 0, 0)));
  __m256d e = _mm256_cvtepi32_pd(e32);

  const __m256i mant_mask = _mm256_set1_epi64x(0x000fffffffffffffLL);
  const __m256i half_bits = _mm256_set1_epi64x(0x3fe0000000000000LL);
  __m256d m = _mm256_castsi256_pd(_mm256_or_si256(_mm256_and_si256(bits, mant_mask), half_bits));

  const __m256d half = _mm256_set1_pd(0.5);
  const __m256d below = _mm256_cmp_pd(m, _mm256_set1_pd(0.70710678118654752440), _CMP_LT_OQ);
  e = _mm256_sub_pd(e, _mm256_and_pd(below, _mm256_set1_pd(1.0)));

  // below: z = m - 0.5, y = 0.5 z + 0.5 ; else: z = m - 1, y = 0.5 m + 0.5
  const __m256d z_below = _mm256_sub_pd(m, half);
  const __m256d z_above = _mm256_sub_pd(_mm256_sub_pd(m, half), half);
  const __m256d y_below = _mm256_fmadd_pd(half, z_below, half);
  const __m256d y_above = _mm256_fmadd_pd(half, m, half);
  const __m256d zz = _mm256_blendv_pd(z_above, z_below, below);
  const __m256d yy = _mm256_blendv_pd(y_above, y_below, below);
  const __m256d s = _mm256_div_pd(zz, yy);

  const __m256d s2 = _mm256_mul_pd(s, s);
  __m256d rn = _mm256_set1_pd(-7.89580278884799154124E-1);
  rn = _mm256_fmadd_pd(rn, s2, _mm256_set1_pd(1.63866645699558079767E1));
  rn = _mm256_fmadd_pd(rn, s2, _mm256_set1_pd(-6.41409952958715622951E1));
  __m256d rd = _mm256_add_pd(s2, _mm256_set1_pd(-3.56722798256324312549E1));
  rd = _mm256_fmadd_pd(rd, s2, _mm256_set1_pd(3.12093766372244180303E2));
  rd = _mm256_fmadd_pd(rd, s2, _mm256_set1_pd(-7.69691943550460008604E2));

  __m256d res = _mm256_mul_pd(s, _mm256_div_pd(_mm256_mul_pd(s2, rn), rd));
  res = _mm256_fnmadd_pd(e, _mm256_set1_pd(2.121944400546905827679e-4), res);
  res = _mm256_add_pd(res, s);
  res = _mm256_fmadd_pd(e, _mm256_set1_pd(0.693359375), res);
  return res;
}

// log(1 + exp(x)) = max(x, 0) + log1p(exp(-|x|)), with log1p(w) evaluated
// as log(u) - ((u - 1) - w) / u for u = 1 + w.
inline __m256d softplus4(__m256d x) {
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  const __m256d neg_abs = _mm256_or_pd(x, sign_mask);
  const __m256d w = exp4(neg_abs);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d u = _mm256_add_pd(one, w);
  const __m256d corr = _mm256_div_pd(_mm256_sub_pd(_mm256_sub_pd(u, one), w), u);
  const __m256d l1p = _mm256_sub_pd(log4(u), corr);
  return _mm256_add_pd(_mm256_max_pd(x, _mm256_setzero_pd()), l1p);
}

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

inline double hmax(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_max_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_max_sd(s, _mm_unpackhi_pd(s, s)));
}

}  // namespace

void linear_predictor_avx2(const double* const* a, const double* const* b,
                           std::size_t p, const double* offset, double* out,
                           std::size_t len) {
  std::size_t t = 0;
  for (; t + 4 <= len; t += 4) {
    __m256d acc = offset ? _mm256_loadu_pd(offset + t) : _mm256_setzero_pd();
    for (std::size_t j = 0; j < p; ++j)
      acc = _mm256_fmadd_pd(_mm256_loadu_pd(a[j] + t), _mm256_loadu_pd(b[j] + t), acc);
    _mm256_storeu_pd(out + t, acc);
  }
  if (t < len) {
    const double* ta[16];
    const double* tb[16];
    if (p <= 16) {
      for (std::size_t j = 0; j < p; ++j) {
        ta[j] = a[j] + t;
        tb[j] = b[j] + t;
      }
      linear_predictor_scalar(ta, tb, p, offset ? offset + t : nullptr, out + t, len - t);
    } else {
      for (std::size_t s = t; s < len; ++s) {
        double acc = offset ? offset[s] : 0.0;
        for (std::size_t j = 0; j < p; ++j) acc += a[j][s] * b[j][s];
        out[s] = acc;
      }
    }
  }
}

double nb_kernel_sum_avx2(const double* y, const double* eta, std::size_t len, double r) {
  const double log_r = log_scalar(r);
  const __m256d vlog_r = _mm256_set1_pd(log_r);
  const __m256d vr = _mm256_set1_pd(r);
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t t = 0;
  for (; t + 8 <= len; t += 8) {
    const __m256d y0 = _mm256_loadu_pd(y + t);
    const __m256d y1 = _mm256_loadu_pd(y + t + 4);
    const __m256d p0 = _mm256_sub_pd(_mm256_loadu_pd(eta + t), vlog_r);
    const __m256d p1 = _mm256_sub_pd(_mm256_loadu_pd(eta + t + 4), vlog_r);
    acc0 = _mm256_fmadd_pd(y0, p0, acc0);
    acc1 = _mm256_fmadd_pd(y1, p1, acc1);
    acc0 = _mm256_fnmadd_pd(_mm256_add_pd(y0, vr), softplus4(p0), acc0);
    acc1 = _mm256_fnmadd_pd(_mm256_add_pd(y1, vr), softplus4(p1), acc1);
  }
  for (; t + 4 <= len; t += 4) {
    const __m256d y0 = _mm256_loadu_pd(y + t);
    const __m256d p0 = _mm256_sub_pd(_mm256_loadu_pd(eta + t), vlog_r);
    acc0 = _mm256_fmadd_pd(y0, p0, acc0);
    acc0 = _mm256_fnmadd_pd(_mm256_add_pd(y0, vr), softplus4(p0), acc0);
  }
  double total = hsum(_mm256_add_pd(acc0, acc1));
  if (t < len) total += nb_kernel_sum_scalar(y + t, eta + t, len - t, r);
  return total;
}

void poisson_kernel_avx2(double y, const double* eta, double* out, std::size_t len) {
  const __m256d vy = _mm256_set1_pd(y);
  std::size_t d = 0;
  for (; d + 4 <= len; d += 4) {
    const __m256d e = _mm256_loadu_pd(eta + d);
    _mm256_storeu_pd(out + d, _mm256_fmsub_pd(vy, e, exp4(e)));
  }
  if (d < len) poisson_kernel_scalar(y, eta + d, out + d, len - d);
}

double log_sum_exp_avx2(const double* x, std::size_t len) {
  if (len < 8) return log_sum_exp_scalar(x, len);
  __m256d vmax = _mm256_set1_pd(-__builtin_inf());
  std::size_t d = 0;
  for (; d + 4 <= len; d += 4) vmax = _mm256_max_pd(vmax, _mm256_loadu_pd(x + d));
  double mx = hmax(vmax);
  for (std::size_t s = d; s < len; ++s) mx = x[s] > mx ? x[s] : mx;
  if (!(mx > -__builtin_inf()) || !(mx < __builtin_inf())) return mx;
  const __m256d vm = _mm256_set1_pd(mx);
  __m256d acc = _mm256_setzero_pd();
  d = 0;
  for (; d + 4 <= len; d += 4) acc = _mm256_add_pd(acc, exp4(_mm256_sub_pd(_mm256_loadu_pd(x + d), vm)));
  double total = hsum(acc);
  if (d < len) {
    double tail[4] = {-__builtin_inf(), -__builtin_inf(), -__builtin_inf(), -__builtin_inf()};
    for (std::size_t s = d; s < len; ++s) tail[s - d] = x[s] - mx;
    // -inf lanes clamp to exp(-708), far below one ulp of the running total.
    const __m256d e = exp4(_mm256_loadu_pd(tail));
    double lanes[4];
    _mm256_storeu_pd(lanes, e);
    for (std::size_t s = d; s < len; ++s) total += lanes[s - d];
  }
  return mx + log_scalar(total);
}

void softplus_avx2(const double* x, double* out, std::size_t len) {
  std::size_t d = 0;
  for (; d + 4 <= len; d += 4) _mm256_storeu_pd(out + d, softplus4(_mm256_loadu_pd(x + d)));
  if (d < len) softplus_scalar(x + d, out + d, len - d);
}

}  // namespace mbps::kernels::detail
