// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cassert>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "kernels_internal.hpp"

namespace lfme::kernels {
namespace {

const KernelTable* table_for(Backend b) {
  switch (b) {
    case Backend::scalar: return &detail::kScalarTable;
    case Backend::avx2: return detail::avx2_table_if_built();
    case Backend::neon: return detail::neon_table_if_built();
  }
  return nullptr;
}

const KernelTable* initial_table() {
  const KernelTable* t = table_for(detect_backend());
  return t ? t : &detail::kScalarTable;
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
    case Backend::neon: return "neon";
  }
  return "unknown";
}

const KernelTable& scalar_table() { return detail::kScalarTable; }
const KernelTable* avx2_table() { return detail::avx2_table_if_built(); }
const KernelTable* neon_table() { return detail::neon_table_if_built(); }

bool backend_available(Backend b) { return table_for(b) != nullptr; }

Backend detect_backend() {
  if (const char* env = std::getenv("LFME_KERNELS")) {
    const std::string want(env);
    for (Backend b : {Backend::scalar, Backend::avx2, Backend::neon})
      if (want == backend_name(b) && backend_available(b)) return b;
  }
  if (backend_available(Backend::avx2)) return Backend::avx2;
  if (backend_available(Backend::neon)) return Backend::neon;
  return Backend::scalar;
}

void set_backend(Backend b) {
  const KernelTable* t = table_for(b);
  if (!t)
    throw std::invalid_argument("kernel backend not available: " +
                                std::string(backend_name(b)));
  current().store(t);
}

Backend active_backend() { return current().load()->backend; }
const KernelTable& active() { return *current().load(); }

double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  return active().dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  active().axpy(alpha, x.data(), y.data(), x.size());
}

void gemv(std::span<const double> w, std::size_t rows, std::size_t cols,
          std::span<const double> x, std::span<const double> bias,
          std::span<double> y) {
  assert(w.size() == rows * cols && x.size() == cols);
  assert(bias.size() == rows && y.size() == rows);
  active().gemv(w.data(), rows, cols, x.data(), bias.data(), y.data());
}

void gemv_t_acc(std::span<const double> w, std::size_t rows, std::size_t cols,
                std::span<const double> g, std::span<double> out) {
  assert(w.size() == rows * cols && g.size() == rows && out.size() == cols);
  active().gemv_t_acc(w.data(), rows, cols, g.data(), out.data());
}

void ger_acc(std::span<double> gm, std::size_t rows, std::size_t cols,
             std::span<const double> g, std::span<const double> x) {
  assert(gm.size() == rows * cols && g.size() == rows && x.size() == cols);
  active().ger_acc(gm.data(), rows, cols, g.data(), x.data());
}

void relu(std::span<double> x) { active().relu(x.data(), x.size()); }

void relu_backward(std::span<const double> act, std::span<double> grad) {
  assert(act.size() == grad.size());
  active().relu_backward(act.data(), grad.data(), act.size());
}

void sgd_momentum(std::span<double> theta, std::span<double> vel,
                  std::span<const double> grad, double lr, double mu,
                  double wd) {
  assert(theta.size() == vel.size() && theta.size() == grad.size());
  active().sgd_momentum(theta.data(), vel.data(), grad.data(), theta.size(),
                        lr, mu, wd);
}

}  // namespace lfme::kernels
