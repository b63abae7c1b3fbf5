// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "lfme/kernels.hpp"

using namespace lfme::kernels;

namespace {

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

bool close(double a, double b, double tol = 1e-12) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

void require_close(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(close(a[i], b[i]));
}

std::vector<const KernelTable*> vector_tables() {
  std::vector<const KernelTable*> out;
  if (const auto* t = avx2_table()) out.push_back(t);
  if (const auto* t = neon_table()) out.push_back(t);
  return out;
}

// Lengths around every vector width, plus tails.
const std::size_t kLengths[] = {0, 1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 33, 64, 100, 257};

}  // namespace

TEST_CASE("scalar kernels against hand values") {
  const auto& t = scalar_table();
  const double a[] = {1, 2, 3};
  const double b[] = {4, -5, 6};
  CHECK(t.dot(a, b, 3) == 12.0);

  double y[] = {1, 1, 1};
  t.axpy(2.0, a, y, 3);
  CHECK(y[0] == 3.0);
  CHECK(y[2] == 7.0);

  // W = [[1,2,3],[4,5,6]]
  const double w[] = {1, 2, 3, 4, 5, 6};
  const double bias[] = {0.5, -1};
  double out[2];
  t.gemv(w, 2, 3, a, bias, out);
  CHECK(out[0] == 14.5);
  CHECK(out[1] == 31.0);

  const double g[] = {1, -1};
  double acc[] = {0, 0, 0};
  t.gemv_t_acc(w, 2, 3, g, acc);
  CHECK(acc[0] == -3.0);
  CHECK(acc[1] == -3.0);
  CHECK(acc[2] == -3.0);

  double gm[6] = {};
  t.ger_acc(gm, 2, 3, g, a);
  CHECK(gm[0] == 1.0);
  CHECK(gm[5] == -3.0);

  double r[] = {-1, 0, 2};
  t.relu(r, 3);
  CHECK(r[0] == 0.0);
  CHECK(r[2] == 2.0);
  double grad[] = {5, 5, 5};
  t.relu_backward(r, grad, 3);
  CHECK(grad[0] == 0.0);
  CHECK(grad[1] == 0.0);
  CHECK(grad[2] == 5.0);

  double theta[] = {1.0};
  double vel[] = {0.5};
  const double gr[] = {0.2};
  t.sgd_momentum(theta, vel, gr, 1, 0.1, 0.9, 0.01);
  // vel = 0.45 + 0.2 + 0.01 = 0.66
  CHECK(vel[0] == doctest::Approx(0.66).epsilon(1e-15));
  CHECK(theta[0] == doctest::Approx(1.0 - 0.066).epsilon(1e-15));
}

TEST_CASE("vector kernels match the scalar reference") {
  const auto tables = vector_tables();
  if (tables.empty()) {
    MESSAGE("no vector backend on this machine");
    return;
  }
  const auto& ref = scalar_table();
  std::mt19937_64 rng(7);
  for (const auto* t : tables) {
    CAPTURE(backend_name(t->backend));
    for (std::size_t n : kLengths) {
      CAPTURE(n);
      const auto a = random_vec(rng, n);
      const auto b = random_vec(rng, n);
      CHECK(close(t->dot(a.data(), b.data(), n), ref.dot(a.data(), b.data(), n), 1e-13));

      auto y1 = b, y2 = b;
      ref.axpy(-0.7, a.data(), y1.data(), n);
      t->axpy(-0.7, a.data(), y2.data(), n);
      require_close(y1, y2);

      auto r1 = a, r2 = a;
      ref.relu(r1.data(), n);
      t->relu(r2.data(), n);
      CHECK(r1 == r2);

      auto g1 = b, g2 = b;
      ref.relu_backward(r1.data(), g1.data(), n);
      t->relu_backward(r1.data(), g2.data(), n);
      CHECK(g1 == g2);

      auto th1 = a, th2 = a, v1 = b, v2 = b;
      const auto grad = random_vec(rng, n);
      ref.sgd_momentum(th1.data(), v1.data(), grad.data(), n, 0.05, 0.9, 5e-4);
      t->sgd_momentum(th2.data(), v2.data(), grad.data(), n, 0.05, 0.9, 5e-4);
      require_close(th1, th2);
      require_close(v1, v2);
    }
    for (std::size_t rows : {1, 3, 10}) {
      for (std::size_t cols : {1, 4, 7, 16, 19}) {
        CAPTURE(rows);
        CAPTURE(cols);
        const auto w = random_vec(rng, rows * cols);
        const auto x = random_vec(rng, cols);
        const auto bias = random_vec(rng, rows);
        std::vector<double> y1(rows), y2(rows);
        ref.gemv(w.data(), rows, cols, x.data(), bias.data(), y1.data());
        t->gemv(w.data(), rows, cols, x.data(), bias.data(), y2.data());
        require_close(y1, y2);

        auto g = random_vec(rng, rows);
        g[0] = 0.0;  // exercises the zero-row skip
        auto o1 = random_vec(rng, cols);
        auto o2 = o1;
        ref.gemv_t_acc(w.data(), rows, cols, g.data(), o1.data());
        t->gemv_t_acc(w.data(), rows, cols, g.data(), o2.data());
        require_close(o1, o2);

        auto m1 = w, m2 = w;
        ref.ger_acc(m1.data(), rows, cols, g.data(), x.data());
        t->ger_acc(m2.data(), rows, cols, g.data(), x.data());
        require_close(m1, m2);
      }
    }
  }
}

TEST_CASE("backend selection") {
  const Backend before = active_backend();
  CHECK(backend_available(Backend::scalar));
  set_backend(Backend::scalar);
  CHECK(active_backend() == Backend::scalar);
  CHECK(&active() == &scalar_table());
  if (!backend_available(Backend::neon)) CHECK_THROWS_AS(set_backend(Backend::neon), std::invalid_argument);
  set_backend(before);
  CHECK(active_backend() == before);
}

TEST_CASE("span front-ends route through the active table") {
  const std::vector<double> a{1, 2, 3, 4, 5};
  std::vector<double> y(5, 1.0);
  CHECK(dot(a, a) == 55.0);
  axpy(2.0, a, y);
  CHECK(y[4] == 11.0);
}
