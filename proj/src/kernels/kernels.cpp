#include "tabi/kernels.hpp"

#include <atomic>
#include <cassert>
#include <stdexcept>
#include <string>

namespace tabi::kernels {

#if !defined(TABI_HAVE_AVX2)
namespace avx2 {
double dot(const double*, const double*, std::size_t) { throw std::logic_error("avx2 not built"); }
double dot_mixed(const float*, const double*, std::size_t) {
  throw std::logic_error("avx2 not built");
}
void axpy(double, const double*, double*, std::size_t) { throw std::logic_error("avx2 not built"); }
}  // namespace avx2
#endif

#if !defined(TABI_HAVE_NEON)
namespace neon {
double dot(const double*, const double*, std::size_t) { throw std::logic_error("neon not built"); }
double dot_mixed(const float*, const double*, std::size_t) {
  throw std::logic_error("neon not built");
}
void axpy(double, const double*, double*, std::size_t) { throw std::logic_error("neon not built"); }
}  // namespace neon
#endif

namespace {

struct Table {
  double (*dot)(const double*, const double*, std::size_t);
  double (*dot_mixed)(const float*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
};

constexpr Table kScalar{scalar::dot, scalar::dot_mixed, scalar::axpy};
constexpr Table kAvx2{avx2::dot, avx2::dot_mixed, avx2::axpy};
constexpr Table kNeon{neon::dot, neon::dot_mixed, neon::axpy};

const Table& table_for(Backend b) {
  switch (b) {
    case Backend::Avx2:
      return kAvx2;
    case Backend::Neon:
      return kNeon;
    case Backend::Scalar:
      break;
  }
  return kScalar;
}

Backend detect() {
  if (backend_supported(Backend::Avx2)) return Backend::Avx2;
  if (backend_supported(Backend::Neon)) return Backend::Neon;
  return Backend::Scalar;
}

std::atomic<Backend>& current() {
  static std::atomic<Backend> b{detect()};
  return b;
}

}  // namespace

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::Scalar:
      return "scalar";
    case Backend::Avx2:
      return "avx2";
    case Backend::Neon:
      return "neon";
  }
  return "unknown";
}

bool backend_supported(Backend b) {
  switch (b) {
    case Backend::Scalar:
      return true;
    case Backend::Avx2:
#if defined(TABI_HAVE_AVX2)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Backend::Neon:
#if defined(TABI_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Backend active_backend() { return current().load(std::memory_order_relaxed); }

void force_backend(Backend b) {
  if (!backend_supported(b)) {
    throw std::invalid_argument("kernel backend not supported: " + std::string(backend_name(b)));
  }
  current().store(b, std::memory_order_relaxed);
}

double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  return table_for(active_backend()).dot(a.data(), b.data(), a.size());
}

double dot_mixed(std::span<const float> row, std::span<const double> q) {
  assert(row.size() == q.size());
  return table_for(active_backend()).dot_mixed(row.data(), q.data(), row.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  table_for(active_backend()).axpy(alpha, x.data(), y.data(), x.size());
}

void row_scores(std::span<const float> rows, std::size_t dim, std::span<const double> q,
                std::span<double> out) {
  assert(q.size() == dim && rows.size() == out.size() * dim);
  const auto& t = table_for(active_backend());
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = t.dot_mixed(rows.data() + r * dim, q.data(), dim);
}

}  // namespace tabi::kernels
