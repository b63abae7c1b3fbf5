// SPDX-License-Identifier: Apache-2.0
#pragma once

// Dense arithmetic kernels used by the network code. Every kernel has a
// scalar reference implementation; vectorized variants (AVX2+FMA on x86-64,
// NEON on AArch64) are selected at runtime and must agree with the scalar
// path to rounding.

#include <cstddef>
#include <span>
#include <string_view>

namespace lfme::kernels {

enum class Backend { scalar, avx2, neon };

std::string_view backend_name(Backend b);

// Raw kernel signatures. Matrices are row-major, `rows x cols`.
struct KernelTable {
  Backend backend;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y = W x + bias
  void (*gemv)(const double* w, std::size_t rows, std::size_t cols,
               const double* x, const double* bias, double* y);
  // out += W^T g
  void (*gemv_t_acc)(const double* w, std::size_t rows, std::size_t cols,
                     const double* g, double* out);
  // G += g x^T
  void (*ger_acc)(double* gm, std::size_t rows, std::size_t cols,
                  const double* g, const double* x);
  void (*relu)(double* x, std::size_t n);
  // grad[i] = act[i] > 0 ? grad[i] : 0
  void (*relu_backward)(const double* act, double* grad, std::size_t n);
  // vel = mu*vel + grad + wd*theta; theta -= lr*vel
  void (*sgd_momentum)(double* theta, double* vel, const double* grad,
                       std::size_t n, double lr, double mu, double wd);
};

const KernelTable& scalar_table();
// nullptr when the CPU or the build lacks the instruction set.
const KernelTable* avx2_table();
const KernelTable* neon_table();

// Best available backend, honoring LFME_KERNELS=scalar|avx2|neon when set.
Backend detect_backend();
bool backend_available(Backend b);
// Throws std::invalid_argument when the backend is unavailable.
void set_backend(Backend b);
Backend active_backend();
const KernelTable& active();

// Span front-ends over the active table.
double dot(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void gemv(std::span<const double> w, std::size_t rows, std::size_t cols,
          std::span<const double> x, std::span<const double> bias,
          std::span<double> y);
void gemv_t_acc(std::span<const double> w, std::size_t rows, std::size_t cols,
                std::span<const double> g, std::span<double> out);
void ger_acc(std::span<double> gm, std::size_t rows, std::size_t cols,
             std::span<const double> g, std::span<const double> x);
void relu(std::span<double> x);
void relu_backward(std::span<const double> act, std::span<double> grad);
void sgd_momentum(std::span<double> theta, std::span<double> vel,
                  std::span<const double> grad, double lr, double mu,
                  double wd);

}  // namespace lfme::kernels
