// SPDX-License-Identifier: Apache-2.0
#include "kernels_internal.hpp"

#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
#define LFME_HAVE_AVX2_BUILD 1
#include <immintrin.h>
#else
#define LFME_HAVE_AVX2_BUILD 0
#endif

namespace lfme::kernels::detail {

#if LFME_HAVE_AVX2_BUILD
namespace {

#define LFME_AVX2 __attribute__((target("avx2,fma")))

LFME_AVX2 inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

LFME_AVX2 double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4),
                           _mm256_loadu_pd(b + i + 4), acc1);
  }
  if (i + 4 <= n) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    i += 4;
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

LFME_AVX2 void axpy_avx2(double alpha, const double* x, double* y,
                         std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vy = _mm256_loadu_pd(y + i);
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

LFME_AVX2 void gemv_avx2(const double* w, std::size_t rows, std::size_t cols,
                         const double* x, const double* bias, double* y) {
  for (std::size_t r = 0; r < rows; ++r)
    y[r] = bias[r] + dot_avx2(w + r * cols, x, cols);
}

LFME_AVX2 void gemv_t_acc_avx2(const double* w, std::size_t rows,
                               std::size_t cols, const double* g, double* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (g[r] == 0.0) continue;
    axpy_avx2(g[r], w + r * cols, out, cols);
  }
}

LFME_AVX2 void ger_acc_avx2(double* gm, std::size_t rows, std::size_t cols,
                            const double* g, const double* x) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (g[r] == 0.0) continue;
    axpy_avx2(g[r], x, gm + r * cols, cols);
  }
}

LFME_AVX2 void relu_avx2(double* x, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    // keep lanes where v > 0 (ordered, so NaN maps to 0 like the scalar path)
    const __m256d mask = _mm256_cmp_pd(v, zero, _CMP_GT_OQ);
    _mm256_storeu_pd(x + i, _mm256_and_pd(v, mask));
  }
  for (; i < n; ++i)
    if (!(x[i] > 0.0)) x[i] = 0.0;
}

LFME_AVX2 void relu_backward_avx2(const double* act, double* grad,
                                  std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(act + i), zero, _CMP_GT_OQ);
    _mm256_storeu_pd(grad + i, _mm256_and_pd(_mm256_loadu_pd(grad + i), mask));
  }
  for (; i < n; ++i)
    if (!(act[i] > 0.0)) grad[i] = 0.0;
}

LFME_AVX2 void sgd_momentum_avx2(double* theta, double* vel, const double* grad,
                                 std::size_t n, double lr, double mu,
                                 double wd) {
  const __m256d vlr = _mm256_set1_pd(lr);
  const __m256d vmu = _mm256_set1_pd(mu);
  const __m256d vwd = _mm256_set1_pd(wd);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d t = _mm256_loadu_pd(theta + i);
    const __m256d g = _mm256_fmadd_pd(vwd, t, _mm256_loadu_pd(grad + i));
    const __m256d v = _mm256_fmadd_pd(vmu, _mm256_loadu_pd(vel + i), g);
    _mm256_storeu_pd(vel + i, v);
    _mm256_storeu_pd(theta + i, _mm256_fnmadd_pd(vlr, v, t));
  }
  for (; i < n; ++i) {
    const double g = grad[i] + wd * theta[i];
    vel[i] = mu * vel[i] + g;
    theta[i] -= lr * vel[i];
  }
}

#undef LFME_AVX2

const KernelTable kAvx2Table{
    Backend::avx2,  dot_avx2,       axpy_avx2,
    gemv_avx2,      gemv_t_acc_avx2, ger_acc_avx2,
    relu_avx2,      relu_backward_avx2, sgd_momentum_avx2,
};

}  // namespace

const KernelTable* avx2_table_if_built() {
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    return &kAvx2Table;
  return nullptr;
}

#else

const KernelTable* avx2_table_if_built() { return nullptr; }

#endif

}  // namespace lfme::kernels::detail
