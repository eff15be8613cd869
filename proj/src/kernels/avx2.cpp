#include <immintrin.h>

#include "lineage/kernels/kernels.hpp"

namespace lineage::kernels {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), s1);
  }
  for (; i + 4 <= n; i += 4) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
  }
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

// 4×8 register tile over C; the k loop streams one row of B per step.
void gemm_nn_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const double* a0 = a + (i + 0) * k;
    const double* a1 = a + (i + 1) * k;
    const double* a2 = a + (i + 2) * k;
    const double* a3 = a + (i + 3) * k;
    double* c0 = c + (i + 0) * n;
    double* c1 = c + (i + 1) * n;
    double* c2 = c + (i + 2) * n;
    double* c3 = c + (i + 3) * n;
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
      __m256d r00 = _mm256_loadu_pd(c0 + j), r01 = _mm256_loadu_pd(c0 + j + 4);
      __m256d r10 = _mm256_loadu_pd(c1 + j), r11 = _mm256_loadu_pd(c1 + j + 4);
      __m256d r20 = _mm256_loadu_pd(c2 + j), r21 = _mm256_loadu_pd(c2 + j + 4);
      __m256d r30 = _mm256_loadu_pd(c3 + j), r31 = _mm256_loadu_pd(c3 + j + 4);
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d b0 = _mm256_loadu_pd(b + p * n + j);
        const __m256d b1 = _mm256_loadu_pd(b + p * n + j + 4);
        __m256d s = _mm256_set1_pd(a0[p]);
        r00 = _mm256_fmadd_pd(s, b0, r00);
        r01 = _mm256_fmadd_pd(s, b1, r01);
        s = _mm256_set1_pd(a1[p]);
        r10 = _mm256_fmadd_pd(s, b0, r10);
        r11 = _mm256_fmadd_pd(s, b1, r11);
        s = _mm256_set1_pd(a2[p]);
        r20 = _mm256_fmadd_pd(s, b0, r20);
        r21 = _mm256_fmadd_pd(s, b1, r21);
        s = _mm256_set1_pd(a3[p]);
        r30 = _mm256_fmadd_pd(s, b0, r30);
        r31 = _mm256_fmadd_pd(s, b1, r31);
      }
      _mm256_storeu_pd(c0 + j, r00);
      _mm256_storeu_pd(c0 + j + 4, r01);
      _mm256_storeu_pd(c1 + j, r10);
      _mm256_storeu_pd(c1 + j + 4, r11);
      _mm256_storeu_pd(c2 + j, r20);
      _mm256_storeu_pd(c2 + j + 4, r21);
      _mm256_storeu_pd(c3 + j, r30);
      _mm256_storeu_pd(c3 + j + 4, r31);
    }
    for (; j + 4 <= n; j += 4) {
      __m256d r0 = _mm256_loadu_pd(c0 + j);
      __m256d r1 = _mm256_loadu_pd(c1 + j);
      __m256d r2 = _mm256_loadu_pd(c2 + j);
      __m256d r3 = _mm256_loadu_pd(c3 + j);
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d bv = _mm256_loadu_pd(b + p * n + j);
        r0 = _mm256_fmadd_pd(_mm256_set1_pd(a0[p]), bv, r0);
        r1 = _mm256_fmadd_pd(_mm256_set1_pd(a1[p]), bv, r1);
        r2 = _mm256_fmadd_pd(_mm256_set1_pd(a2[p]), bv, r2);
        r3 = _mm256_fmadd_pd(_mm256_set1_pd(a3[p]), bv, r3);
      }
      _mm256_storeu_pd(c0 + j, r0);
      _mm256_storeu_pd(c1 + j, r1);
      _mm256_storeu_pd(c2 + j, r2);
      _mm256_storeu_pd(c3 + j, r3);
    }
    for (; j < n; ++j) {
      double s0 = c0[j], s1 = c1[j], s2 = c2[j], s3 = c3[j];
      for (std::size_t p = 0; p < k; ++p) {
        const double bv = b[p * n + j];
        s0 += a0[p] * bv;
        s1 += a1[p] * bv;
        s2 += a2[p] * bv;
        s3 += a3[p] * bv;
      }
      c0[j] = s0;
      c1[j] = s1;
      c2[j] = s2;
      c3[j] = s3;
    }
  }
  for (; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) axpy_avx2(a[i * k + p], b + p * n, c + i * n, n);
  }
}

void gemm_nt_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const double* b0 = b + (j + 0) * k;
      const double* b1 = b + (j + 1) * k;
      const double* b2 = b + (j + 2) * k;
      const double* b3 = b + (j + 3) * k;
      __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
      __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
      std::size_t p = 0;
      for (; p + 4 <= k; p += 4) {
        const __m256d av = _mm256_loadu_pd(arow + p);
        s0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b0 + p), s0);
        s1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b1 + p), s1);
        s2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b2 + p), s2);
        s3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b3 + p), s3);
      }
      double t0 = hsum(s0), t1 = hsum(s1), t2 = hsum(s2), t3 = hsum(s3);
      for (; p < k; ++p) {
        t0 += arow[p] * b0[p];
        t1 += arow[p] * b1[p];
        t2 += arow[p] * b2[p];
        t3 += arow[p] * b3[p];
      }
      crow[j + 0] += t0;
      crow[j + 1] += t1;
      crow[j + 2] += t2;
      crow[j + 3] += t3;
    }
    for (; j < n; ++j) crow[j] += dot_avx2(arow, b + j * k, k);
  }
}

// Rows of C are updated with four rows of B at a time so each C chunk is
// loaded and stored once per four rank-1 updates.
void gemm_tn_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    std::size_t p = 0;
    for (; p + 4 <= k; p += 4) {
      const double* b0 = b + (p + 0) * n;
      const double* b1 = b + (p + 1) * n;
      const double* b2 = b + (p + 2) * n;
      const double* b3 = b + (p + 3) * n;
      const double a0 = a[(p + 0) * m + i];
      const double a1 = a[(p + 1) * m + i];
      const double a2 = a[(p + 2) * m + i];
      const double a3 = a[(p + 3) * m + i];
      const __m256d v0 = _mm256_set1_pd(a0), v1 = _mm256_set1_pd(a1);
      const __m256d v2 = _mm256_set1_pd(a2), v3 = _mm256_set1_pd(a3);
      std::size_t j = 0;
      for (; j + 4 <= n; j += 4) {
        __m256d r = _mm256_loadu_pd(crow + j);
        r = _mm256_fmadd_pd(v0, _mm256_loadu_pd(b0 + j), r);
        r = _mm256_fmadd_pd(v1, _mm256_loadu_pd(b1 + j), r);
        r = _mm256_fmadd_pd(v2, _mm256_loadu_pd(b2 + j), r);
        r = _mm256_fmadd_pd(v3, _mm256_loadu_pd(b3 + j), r);
        _mm256_storeu_pd(crow + j, r);
      }
      for (; j < n; ++j) crow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
    }
    for (; p < k; ++p) axpy_avx2(a[p * m + i], b + p * n, crow, n);
  }
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable table{Isa::avx2, dot_avx2, axpy_avx2,
                                 gemm_nn_avx2, gemm_nt_avx2, gemm_tn_avx2};
  return &table;
}

}  // namespace lineage::kernels
