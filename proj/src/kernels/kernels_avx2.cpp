#include "rembed/kernels.hpp"

#if defined(__x86_64__) && defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include <algorithm>
#include <cmath>

namespace rembed::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sum_avx2(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void scale_avx2(const double* x, double a, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) y[i] = a * x[i];
}

void add_avx2(const double* a, const double* b, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) y[i] = a[i] + b[i];
}

void sub_avx2(const double* a, const double* b, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) y[i] = a[i] - b[i];
}

void mul_avx2(const double* a, const double* b, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) y[i] = a[i] * b[i];
}

// i-k-j order, four rows of a at a time so each b row is loaded once per block.
void gemm_acc_avx2(const double* a, const double* b, double* c, std::size_t m,
                   std::size_t k, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    double* c0 = c + (i + 0) * n;
    double* c1 = c + (i + 1) * n;
    double* c2 = c + (i + 2) * n;
    double* c3 = c + (i + 3) * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      const __m256d a0 = _mm256_set1_pd(a[(i + 0) * k + p]);
      const __m256d a1 = _mm256_set1_pd(a[(i + 1) * k + p]);
      const __m256d a2 = _mm256_set1_pd(a[(i + 2) * k + p]);
      const __m256d a3 = _mm256_set1_pd(a[(i + 3) * k + p]);
      std::size_t j = 0;
      for (; j + 4 <= n; j += 4) {
        const __m256d bv = _mm256_loadu_pd(brow + j);
        _mm256_storeu_pd(c0 + j, _mm256_fmadd_pd(a0, bv, _mm256_loadu_pd(c0 + j)));
        _mm256_storeu_pd(c1 + j, _mm256_fmadd_pd(a1, bv, _mm256_loadu_pd(c1 + j)));
        _mm256_storeu_pd(c2 + j, _mm256_fmadd_pd(a2, bv, _mm256_loadu_pd(c2 + j)));
        _mm256_storeu_pd(c3 + j, _mm256_fmadd_pd(a3, bv, _mm256_loadu_pd(c3 + j)));
      }
      for (; j < n; ++j) {
        c0[j] += a[(i + 0) * k + p] * brow[j];
        c1[j] += a[(i + 1) * k + p] * brow[j];
        c2[j] += a[(i + 2) * k + p] * brow[j];
        c3[j] += a[(i + 3) * k + p] * brow[j];
      }
    }
  }
  for (; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      axpy_avx2(a[i * k + p], b + p * n, c + i * n, n);
    }
  }
}

void gemm_nt_acc_avx2(const double* a, const double* b, double* c, std::size_t m,
                      std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      c[i * n + j] += dot_avx2(a + i * k, b + j * k, k);
    }
  }
}

void gemm_tn_acc_avx2(const double* a, const double* b, double* c, std::size_t m,
                      std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    double* crow = c + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      axpy_avx2(a[i * k + p], b + i * n, crow, n);
    }
  }
}

// Same operation sequence as the scalar version (sub, mul, floor, clamp,
// truncate), so the indices match it bit for bit.
void bin_index_avx2(const double* x, std::size_t n, double lo, double inv_width,
                    std::uint32_t bins, std::uint32_t* out) {
  const __m256d vlo = _mm256_set1_pd(lo);
  const __m256d vinv = _mm256_set1_pd(inv_width);
  const __m256d vzero = _mm256_setzero_pd();
  const __m256d vtop = _mm256_set1_pd(static_cast<double>(bins - 1));
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d t = _mm256_mul_pd(_mm256_sub_pd(_mm256_loadu_pd(x + i), vlo), vinv);
    t = _mm256_floor_pd(t);
    t = _mm256_min_pd(vtop, _mm256_max_pd(vzero, t));
    const __m128i idx = _mm256_cvttpd_epi32(t);
    _mm_storeu_si128(reinterpret_cast<__m128i*>(out + i), idx);
  }
  const double top = static_cast<double>(bins - 1);
  for (; i < n; ++i) {
    const double t = std::floor((x[i] - lo) * inv_width);
    out[i] = static_cast<std::uint32_t>(std::min(top, std::max(0.0, t)));
  }
}

}  // namespace

const Backend* avx2_backend() {
  if (!__builtin_cpu_supports("avx2") || !__builtin_cpu_supports("fma")) return nullptr;
  static const Backend b{
      "avx2",        dot_avx2,         sum_avx2,         axpy_avx2,
      scale_avx2,    add_avx2,         sub_avx2,         mul_avx2,
      gemm_acc_avx2, gemm_nt_acc_avx2, gemm_tn_acc_avx2, bin_index_avx2,
  };
  return &b;
}

}  // namespace rembed::kernels

#else

namespace rembed::kernels {
const Backend* avx2_backend() { return nullptr; }
}  // namespace rembed::kernels

#endif
