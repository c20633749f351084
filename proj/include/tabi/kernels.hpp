#pragma once

// Inner-product kernels shared by the encoder, the losses and the index.
//
// Every backend accumulates into four lanes (element i goes to lane i % 4, in
// increasing i) and reduces them as (l0 + l1) + (l2 + l3), using separate
// multiply and add. Scalar and SIMD results are therefore bitwise identical,
// which keeps training and search deterministic across machines.

#include <cstddef>
#include <span>
#include <string_view>

namespace tabi::kernels {

enum class Backend { Scalar, Avx2, Neon };

std::string_view backend_name(Backend b);

/// True when the running CPU and this build both support `b`.
bool backend_supported(Backend b);

/// Backend picked at startup (best supported), unless overridden.
Backend active_backend();

/// Overrides dispatch; throws std::invalid_argument if unsupported.
void force_backend(Backend b);

double dot(std::span<const double> a, std::span<const double> b);

/// Inner product of a float32 row against a double query, accumulated in double.
double dot_mixed(std::span<const float> row, std::span<const double> q);

/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

/// out[r] = dot_mixed(rows[r*dim .. (r+1)*dim), q) for r in [0, count).
void row_scores(std::span<const float> rows, std::size_t dim, std::span<const double> q,
                std::span<double> out);

// Backend-specific entry points. Exposed for the equivalence tests.
namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
double dot_mixed(const float* row, const double* q, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace scalar

namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
double dot_mixed(const float* row, const double* q, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace avx2

namespace neon {
double dot(const double* a, const double* b, std::size_t n);
double dot_mixed(const float* row, const double* q, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace neon

}  // namespace tabi::kernels
