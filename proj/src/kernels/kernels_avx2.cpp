#include <immintrin.h>

#include "tabi/kernels.hpp"

namespace tabi::kernels::avx2 {

namespace {

inline double finish(__m256d acc, std::size_t done, std::size_t n, const double* a,
                     const double* b) {
  alignas(32) double lane[4];
  _mm256_store_pd(lane, acc);
  for (std::size_t i = done; i < n; ++i) lane[i & 3] = lane[i & 3] + a[i] * b[i];
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

}  // namespace

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d p = _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_add_pd(acc, p);
  }
  return finish(acc, i, n, a, b);
}

double dot_mixed(const float* row, const double* q, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d r = _mm256_cvtps_pd(_mm_loadu_ps(row + i));
    acc = _mm256_add_pd(acc, _mm256_mul_pd(r, _mm256_loadu_pd(q + i)));
  }
  alignas(32) double lane[4];
  _mm256_store_pd(lane, acc);
  for (; i < n; ++i) lane[i & 3] = lane[i & 3] + static_cast<double>(row[i]) * q[i];
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

}  // namespace tabi::kernels::avx2
