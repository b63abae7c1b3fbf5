// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "lfme/schedules.hpp"

using namespace lfme;

TEST_CASE("expert weight branches") {
  CHECK(expert_weight(0.30, 0.60, 0.6) == 1.0);
  CHECK(expert_weight(0.48, 0.60, 0.6) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(expert_weight(0.70, 0.60, 0.6) == 0.0);
  CHECK(expert_weight(0.36, 0.60, 0.6) == 1.0);
  // Just above the switch, the formula branch is continuous with 1.
  CHECK(std::abs(expert_weight(0.36 + 1e-15, 0.60, 0.6) - 1.0) < 1e-12);
  CHECK(expert_weight(0.5, 0.0, 0.6) == 0.0);
  CHECK_THROWS_AS(expert_weight(0.5, 0.5, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(expert_weight(0.5, 0.5, 1.5), std::invalid_argument);
  // alpha = 1: ordinary distillation until the student reaches the expert.
  CHECK(expert_weight(0.59, 0.60, 1.0) == 1.0);
  CHECK(expert_weight(0.60, 0.60, 1.0) == 1.0);
  CHECK(expert_weight(0.61, 0.60, 1.0) == 0.0);
}

TEST_CASE("expert weight properties") {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 1000; ++t) {
    const double acc_e = 0.05 + 0.95 * u(rng);
    const double alpha = 0.05 + 0.95 * u(rng);
    double prev = 2.0;
    for (int k = 0; k <= 200; ++k) {
      const double w = expert_weight(k / 200.0, acc_e, alpha);
      CHECK((w >= 0.0 && w <= 1.0));
      CHECK(w <= prev);
      prev = w;
    }
    if (alpha < 1.0) {
      const double sw = alpha * acc_e;
      const double formula = (acc_e - sw) / (acc_e * (1.0 - alpha));
      CHECK(std::abs(formula - 1.0) < 1e-12);
      CHECK(expert_weight(sw, acc_e, alpha) == 1.0);
    }
  }
}

TEST_CASE("initial instance weight") {
  CHECK(initial_instance_weight(0.8, 5, 20) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(initial_instance_weight(0.37, 12.5, 12.5) == 0.37);
  CHECK(initial_instance_weight(0.0, 5, 20) == 0.0);
  CHECK_THROWS_AS(initial_instance_weight(0.5, 20, 5), std::invalid_argument);
  CHECK_THROWS_AS(initial_instance_weight(1.5, 5, 20), std::invalid_argument);
  CHECK_THROWS_AS(initial_instance_weight(0.5, 0, 20), std::invalid_argument);
}

TEST_CASE("schedule values") {
  CHECK(schedule_value(ScheduleKind::linear, 0.2, 6, 11) == doctest::Approx(0.6).epsilon(1e-15));
  for (auto k : {ScheduleKind::linear, ScheduleKind::convex, ScheduleKind::concave}) {
    CHECK(schedule_value(k, 0.3, 1, 10) == 0.3);
    CHECK(schedule_value(k, 0.3, 10, 10) == 1.0);
    CHECK(schedule_value(k, 0.3, 1, 1) == 1.0);
  }
  // Closed forms at the midpoint of an 11-epoch run (s = 0.5).
  CHECK(schedule_value(ScheduleKind::convex, 0.2, 6, 11) ==
        doctest::Approx(1.0 - 0.8 * std::cos(std::numbers::pi / 4.0)).epsilon(1e-14));
  CHECK(schedule_value(ScheduleKind::concave, 0.2, 6, 11) ==
        doctest::Approx(0.8 * std::log2(1.5) + 0.2).epsilon(1e-14));
  CHECK_THROWS_AS(schedule_value(ScheduleKind::linear, 0.2, 0, 5), std::invalid_argument);
  CHECK_THROWS_AS(schedule_value(ScheduleKind::linear, 0.2, 6, 5), std::invalid_argument);
  CHECK_THROWS_AS(parse_schedule_kind("cubic"), std::invalid_argument);
  CHECK(parse_schedule_kind("concave") == ScheduleKind::concave);
}

TEST_CASE("schedule properties on random triples") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const ScheduleKind kinds[] = {ScheduleKind::linear, ScheduleKind::convex, ScheduleKind::concave};
  for (int t = 0; t < 1000; ++t) {
    const double v1 = u(rng);
    const std::size_t E = 2 + rng() % 199;
    const auto kind = kinds[rng() % 3];
    CHECK(schedule_value(kind, v1, 1, E) == v1);
    CHECK(schedule_value(kind, v1, E, E) == 1.0);
    double prev = -1.0;
    for (std::size_t e = 1; e <= E; ++e) {
      const double v = schedule_value(kind, v1, e, E);
      CHECK((v >= 0.0 && v <= 1.0));
      CHECK(v >= prev);
      prev = v;
    }
  }
}

TEST_CASE("convex <= linear <= concave on a dense grid") {
  for (int i = 0; i < 100; ++i) {
    const double v1 = i / 100.0;
    for (std::size_t e = 1; e <= 101; ++e) {
      const double cv = schedule_value(ScheduleKind::convex, v1, e, 101);
      const double li = schedule_value(ScheduleKind::linear, v1, e, 101);
      const double cc = schedule_value(ScheduleKind::concave, v1, e, 101);
      CHECK(cv <= li + 1e-15);
      CHECK(li <= cc + 1e-15);
    }
  }
}

TEST_CASE("expert selector") {
  ExpertSelector sel({0.6, 0.0, 0.9}, 0.6);
  CHECK(sel.weights()[0] == 1.0);
  CHECK(sel.weights()[1] == 0.0);
  const std::vector<double> acc{0.48, 0.3, 0.2};
  sel.update(acc);
  CHECK(sel.weights()[0] == doctest::Approx(0.5));
  CHECK(sel.weights()[1] == 0.0);
  CHECK(sel.weights()[2] == 1.0);
  sel.update(acc);
  CHECK(sel.history().size() == 2);
  const std::vector<double> wrong{0.1};
  CHECK_THROWS_AS(sel.update(wrong), std::invalid_argument);

  ExpertSelector fixed({0.6, 0.7}, 0.6, 1.0);
  const std::vector<double> high{0.99, 0.99};
  fixed.update(high);
  CHECK(fixed.weights()[0] == 1.0);
  CHECK(fixed.weights()[1] == 1.0);
  CHECK_THROWS_AS(ExpertSelector({0.5}, 0.6, 1.5), std::invalid_argument);
}

TEST_CASE("instance curriculum keeps confidence order within a subset") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(50);
  for (auto& x : p) x = u(rng);
  std::vector<double> init;
  for (double x : p) init.push_back(initial_instance_weight(x, 5, 40));
  for (auto kind : {ScheduleKind::linear, ScheduleKind::convex, ScheduleKind::concave}) {
    const InstanceCurriculum cur(init, kind, 12);
    std::vector<double> prev(init.size(), -1.0);
    for (std::size_t e = 1; e <= 12; ++e) {
      const auto v = cur.weights_at(e);
      for (std::size_t i = 0; i < v.size(); ++i) {
        CHECK(v[i] >= prev[i]);
        for (std::size_t j = 0; j < v.size(); ++j)
          if (p[i] < p[j]) CHECK(v[i] <= v[j]);
      }
      prev = v;
    }
    for (double v : cur.weights_at(12)) CHECK(v == 1.0);
  }
  // Epoch-1 soft budget: sum of v over a subset <= count * N_min / N_l.
  double sum = 0.0;
  for (double v : init) sum += v;
  CHECK(sum <= 50.0 * 5.0 / 40.0);

  const auto uni = InstanceCurriculum::uniform(7, 3);
  for (double v : uni.weights_at(1)) CHECK(v == 1.0);
  CHECK_THROWS_AS(InstanceCurriculum({1.2}, ScheduleKind::linear, 3), std::invalid_argument);
}

TEST_CASE("confidences from expert logits") {
  Dataset ds(2);
  const std::vector<double> f{1.0, 0.0};
  for (int i = 0; i < 4; ++i) ds.add(i, Partition::train, i, f);  // classes 0..3, counts 1
  const CardinalitySplit split =
      split_by_thresholds(ClassDistribution({{0, 1}, {1, 1}, {2, 1}, {3, 1}}), {});
  // Expert with zero weights: uniform over 4 classes.
  const std::vector<DenseNet> flat{DenseNet({2, 4})};
  const std::vector<std::size_t> rows{0, 1, 2, 3};
  for (double c : compute_confidences(flat, split, ds, rows)) CHECK(c == doctest::Approx(0.25));

  // Saturated logit on class 2.
  DenseNet sharp({2, 4});
  sharp.layers()[0].weights[2 * 2 + 0] = 1000.0;
  const std::vector<DenseNet> sharp_v{sharp};
  const auto conf = compute_confidences(sharp_v, split, ds, rows);
  CHECK(conf[2] == doctest::Approx(1.0));
  CHECK(conf[0] < 1e-12);

  const std::vector<DenseNet> wrong{DenseNet({2, 3})};
  CHECK_THROWS_AS(compute_confidences(wrong, split, ds, rows), std::invalid_argument);
}
