#include "tabi/kernels.hpp"

namespace tabi::kernels::scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double lane[4] = {0.0, 0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < n; ++i) {
    const double p = a[i] * b[i];
    lane[i & 3] = lane[i & 3] + p;
  }
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

double dot_mixed(const float* row, const double* q, std::size_t n) {
  double lane[4] = {0.0, 0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < n; ++i) {
    const double p = static_cast<double>(row[i]) * q[i];
    lane[i & 3] = lane[i & 3] + p;
  }
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

}  // namespace tabi::kernels::scalar
