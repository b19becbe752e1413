#include <algorithm>
#include <cmath>

#include "rembed/kernels.hpp"

namespace rembed::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sum_scalar(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale_scalar(const double* x, double a, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a * x[i];
}

void add_scalar_k(const double* a, const double* b, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

void sub_scalar_k(const double* a, const double* b, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] - b[i];
}

void mul_scalar_k(const double* a, const double* b, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

void gemm_acc_scalar(const double* a, const double* b, double* c, std::size_t m,
                     std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      axpy_scalar(a[i * k + p], b + p * n, c + i * n, n);
    }
  }
}

void gemm_nt_acc_scalar(const double* a, const double* b, double* c, std::size_t m,
                        std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      c[i * n + j] += dot_scalar(a + i * k, b + j * k, k);
    }
  }
}

void gemm_tn_acc_scalar(const double* a, const double* b, double* c, std::size_t m,
                        std::size_t k, std::size_t n) {
  // c rows are finished one at a time; b rows stay hot across the i loop.
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t i = 0; i < m; ++i) {
      axpy_scalar(a[i * k + p], b + i * n, c + p * n, n);
    }
  }
}

void bin_index_scalar(const double* x, std::size_t n, double lo, double inv_width,
                      std::uint32_t bins, std::uint32_t* out) {
  const double top = static_cast<double>(bins - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = std::floor((x[i] - lo) * inv_width);
    out[i] = static_cast<std::uint32_t>(std::min(top, std::max(0.0, t)));
  }
}

}  // namespace

const Backend& scalar_backend() {
  static const Backend b{
      "scalar",        dot_scalar,         sum_scalar,         axpy_scalar,
      scale_scalar,    add_scalar_k,       sub_scalar_k,       mul_scalar_k,
      gemm_acc_scalar, gemm_nt_acc_scalar, gemm_tn_acc_scalar, bin_index_scalar,
  };
  return b;
}

}  // namespace rembed::kernels
