#include <arm_neon.h>

#include "tabi/kernels.hpp"

// Lanes 0,1 live in lo and lanes 2,3 in hi so the reduction order matches the
// scalar reference.

namespace tabi::kernels::neon {

double dot(const double* a, const double* b, std::size_t n) {
  float64x2_t lo = vdupq_n_f64(0.0);
  float64x2_t hi = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    lo = vaddq_f64(lo, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    hi = vaddq_f64(hi, vmulq_f64(vld1q_f64(a + i + 2), vld1q_f64(b + i + 2)));
  }
  double lane[4];
  vst1q_f64(lane, lo);
  vst1q_f64(lane + 2, hi);
  for (; i < n; ++i) lane[i & 3] = lane[i & 3] + a[i] * b[i];
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

double dot_mixed(const float* row, const double* q, std::size_t n) {
  float64x2_t lo = vdupq_n_f64(0.0);
  float64x2_t hi = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t r = vld1q_f32(row + i);
    lo = vaddq_f64(lo, vmulq_f64(vcvt_f64_f32(vget_low_f32(r)), vld1q_f64(q + i)));
    hi = vaddq_f64(hi, vmulq_f64(vcvt_high_f64_f32(r), vld1q_f64(q + i + 2)));
  }
  double lane[4];
  vst1q_f64(lane, lo);
  vst1q_f64(lane + 2, hi);
  for (; i < n; ++i) lane[i & 3] = lane[i & 3] + static_cast<double>(row[i]) * q[i];
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vmulq_f64(va, vld1q_f64(x + i))));
  }
  for (; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

}  // namespace tabi::kernels::neon
