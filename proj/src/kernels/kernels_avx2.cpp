// Compiled with -mavx2. Only reached through avx2_table(), which checks CPU support first.

#include <immintrin.h>

#include <algorithm>

#include "kernels_internal.hpp"

namespace tokentiming::kernels::avx2 {

namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

}  // namespace

double sum(const double* x, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
    acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(x + i + 4));
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += x[i];
  return s;
}

double residual(const double* q, const double* p, double* out, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  __m256d acc = zero;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d d = _mm256_max_pd(zero, _mm256_sub_pd(_mm256_loadu_pd(q + i), _mm256_loadu_pd(p + i)));
    _mm256_storeu_pd(out + i, d);
    acc = _mm256_add_pd(acc, d);
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    out[i] = std::max(0.0, q[i] - p[i]);
    s += out[i];
  }
  return s;
}

double overlap(const double* p, const double* q, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc = _mm256_add_pd(acc, _mm256_min_pd(_mm256_loadu_pd(p + i), _mm256_loadu_pd(q + i)));
  }
  double s = hsum(acc);
  for (; i < n; ++i) s += std::min(p[i], q[i]);
  return s;
}

void scale(double* x, std::size_t n, double factor) {
  const __m256d f = _mm256_set1_pd(factor);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), f));
  for (; i < n; ++i) x[i] *= factor;
}

void fill(double* x, std::size_t n, double value) {
  const __m256d v = _mm256_set1_pd(value);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, v);
  for (; i < n; ++i) x[i] = value;
}

void smooth(const std::uint32_t* counts, std::size_t n, double k, double inv_total, double* out) {
  const __m256d kk = _mm256_set1_pd(k);
  const __m256d inv = _mm256_set1_pd(inv_total);
  // Counts stay below 2^31, so the signed int32 -> double conversion is exact.
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m128i c = _mm_loadu_si128(reinterpret_cast<const __m128i*>(counts + i));
    __m256d v = _mm256_cvtepi32_pd(c);
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_add_pd(v, kk), inv));
  }
  for (; i < n; ++i) out[i] = (static_cast<double>(counts[i]) + k) * inv_total;
}

}  // namespace tokentiming::kernels::avx2
