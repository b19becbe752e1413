#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace rembed::kernels {

// Data-parallel float64 primitives behind the tensor math and the histogram
// binning. Every entry has a scalar reference implementation; on x86-64 with
// AVX2+FMA an equivalent vector variant is selected at runtime. The gemm_*
// kernels accumulate into c, so callers zero c first for a plain product.
struct Backend {
  const char* name;

  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // y = a * x
  void (*scale)(const double* x, double a, double* y, std::size_t n);
  void (*add)(const double* a, const double* b, double* y, std::size_t n);
  void (*sub)(const double* a, const double* b, double* y, std::size_t n);
  void (*mul)(const double* a, const double* b, double* y, std::size_t n);
  // c[m x n] += a[m x k] . b[k x n]
  void (*gemm_acc)(const double* a, const double* b, double* c, std::size_t m,
                   std::size_t k, std::size_t n);
  // c[m x n] += a[m x k] . b[n x k]^T
  void (*gemm_nt_acc)(const double* a, const double* b, double* c, std::size_t m,
                      std::size_t k, std::size_t n);
  // c[k x n] += a[m x k]^T . b[m x n]
  void (*gemm_tn_acc)(const double* a, const double* b, double* c, std::size_t m,
                      std::size_t k, std::size_t n);
  // out[i] = clamp(floor((x[i] - lo) * inv_width), 0, bins - 1)
  // Identical rounding in every backend, so results are bit-exact across them.
  void (*bin_index)(const double* x, std::size_t n, double lo, double inv_width,
                    std::uint32_t bins, std::uint32_t* out);
};

const Backend& scalar_backend();
const Backend* avx2_backend();  // nullptr when the CPU or build lacks AVX2+FMA

// Active backend: best available, overridable through set_backend() or the
// REMBED_KERNELS environment variable ("scalar" | "avx2").
const Backend& active();
void set_backend(const std::string& name);
std::vector<std::string> available_backends();

}  // namespace rembed::kernels
