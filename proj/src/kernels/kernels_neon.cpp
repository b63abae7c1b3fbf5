// SPDX-License-Identifier: Apache-2.0
#include "kernels_internal.hpp"

#if defined(__aarch64__) && defined(__ARM_NEON)
#define LFME_HAVE_NEON_BUILD 1
#include <arm_neon.h>
#else
#define LFME_HAVE_NEON_BUILD 0
#endif

namespace lfme::kernels::detail {

#if LFME_HAVE_NEON_BUILD
namespace {

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void gemv_neon(const double* w, std::size_t rows, std::size_t cols,
               const double* x, const double* bias, double* y) {
  for (std::size_t r = 0; r < rows; ++r)
    y[r] = bias[r] + dot_neon(w + r * cols, x, cols);
}

void gemv_t_acc_neon(const double* w, std::size_t rows, std::size_t cols,
                     const double* g, double* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (g[r] == 0.0) continue;
    axpy_neon(g[r], w + r * cols, out, cols);
  }
}

void ger_acc_neon(double* gm, std::size_t rows, std::size_t cols,
                  const double* g, const double* x) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (g[r] == 0.0) continue;
    axpy_neon(g[r], x, gm + r * cols, cols);
  }
}

void relu_neon(double* x, std::size_t n) {
  const float64x2_t zero = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t v = vld1q_f64(x + i);
    const uint64x2_t mask = vcgtq_f64(v, zero);
    vst1q_f64(x + i, vreinterpretq_f64_u64(
                         vandq_u64(vreinterpretq_u64_f64(v), mask)));
  }
  for (; i < n; ++i)
    if (!(x[i] > 0.0)) x[i] = 0.0;
}

void relu_backward_neon(const double* act, double* grad, std::size_t n) {
  const float64x2_t zero = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const uint64x2_t mask = vcgtq_f64(vld1q_f64(act + i), zero);
    vst1q_f64(grad + i,
              vreinterpretq_f64_u64(vandq_u64(
                  vreinterpretq_u64_f64(vld1q_f64(grad + i)), mask)));
  }
  for (; i < n; ++i)
    if (!(act[i] > 0.0)) grad[i] = 0.0;
}

void sgd_momentum_neon(double* theta, double* vel, const double* grad,
                       std::size_t n, double lr, double mu, double wd) {
  const float64x2_t vlr = vdupq_n_f64(lr);
  const float64x2_t vmu = vdupq_n_f64(mu);
  const float64x2_t vwd = vdupq_n_f64(wd);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t t = vld1q_f64(theta + i);
    const float64x2_t g = vfmaq_f64(vld1q_f64(grad + i), vwd, t);
    const float64x2_t v = vfmaq_f64(g, vmu, vld1q_f64(vel + i));
    vst1q_f64(vel + i, v);
    vst1q_f64(theta + i, vfmsq_f64(t, vlr, v));
  }
  for (; i < n; ++i) {
    const double g = grad[i] + wd * theta[i];
    vel[i] = mu * vel[i] + g;
    theta[i] -= lr * vel[i];
  }
}

const KernelTable kNeonTable{
    Backend::neon,  dot_neon,       axpy_neon,
    gemv_neon,      gemv_t_acc_neon, ger_acc_neon,
    relu_neon,      relu_backward_neon, sgd_momentum_neon,
};

}  // namespace

const KernelTable* neon_table_if_built() { return &kNeonTable; }

#else

const KernelTable* neon_table_if_built() { return nullptr; }

#endif

}  // namespace lfme::kernels::detail
