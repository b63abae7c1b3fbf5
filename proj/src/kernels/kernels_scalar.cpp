// SPDX-License-Identifier: Apache-2.0
#include "kernels_internal.hpp"

namespace lfme::kernels::detail {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemv_scalar(const double* w, std::size_t rows, std::size_t cols,
                 const double* x, const double* bias, double* y) {
  for (std::size_t r = 0; r < rows; ++r)
    y[r] = bias[r] + dot_scalar(w + r * cols, x, cols);
}

void gemv_t_acc_scalar(const double* w, std::size_t rows, std::size_t cols,
                       const double* g, double* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (g[r] == 0.0) continue;
    axpy_scalar(g[r], w + r * cols, out, cols);
  }
}

void ger_acc_scalar(double* gm, std::size_t rows, std::size_t cols,
                    const double* g, const double* x) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (g[r] == 0.0) continue;
    axpy_scalar(g[r], x, gm + r * cols, cols);
  }
}

void relu_scalar(double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (!(x[i] > 0.0)) x[i] = 0.0;
}

void relu_backward_scalar(const double* act, double* grad, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (!(act[i] > 0.0)) grad[i] = 0.0;
}

void sgd_momentum_scalar(double* theta, double* vel, const double* grad,
                         std::size_t n, double lr, double mu, double wd) {
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i] + wd * theta[i];
    vel[i] = mu * vel[i] + g;
    theta[i] -= lr * vel[i];
  }
}

}  // namespace

const KernelTable kScalarTable{
    Backend::scalar,     dot_scalar,       axpy_scalar,
    gemv_scalar,         gemv_t_acc_scalar, ger_acc_scalar,
    relu_scalar,         relu_backward_scalar, sgd_momentum_scalar,
};

}  // namespace lfme::kernels::detail
