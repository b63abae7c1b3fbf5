// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "lfme/imbalance.hpp"

using namespace lfme;

namespace {

ClassDistribution from_counts(const std::vector<std::int64_t>& counts) {
  std::vector<ClassCount> cc;
  for (std::size_t i = 0; i < counts.size(); ++i) cc.push_back({static_cast<ClassId>(i), counts[i]});
  return ClassDistribution(std::move(cc));
}

// Mean-absolute-difference form of the Gini coefficient.
double gini_brute(const std::vector<std::int64_t>& n) {
  double s = 0.0, total = 0.0;
  for (auto a : n) {
    total += static_cast<double>(a);
    for (auto b : n) s += std::abs(static_cast<double>(a - b));
  }
  return s / (2.0 * static_cast<double>(n.size()) * total);
}

double kl_brute(const std::vector<std::int64_t>& n) {
  const double total = std::accumulate(n.begin(), n.end(), 0.0);
  const double q = 1.0 / static_cast<double>(n.size());
  double s = 0.0;
  for (auto a : n) {
    const double p = static_cast<double>(a) / total;
    s += p * std::log(p / q);
  }
  return s;
}

double abs_brute(const std::vector<std::int64_t>& n) {
  const double total = std::accumulate(n.begin(), n.end(), 0.0);
  double s = 0.0;
  for (auto a : n) s += std::abs(1.0 / static_cast<double>(n.size()) - static_cast<double>(a) / total);
  return s;
}

std::vector<std::int64_t> random_counts(std::mt19937_64& rng, std::size_t max_c = 50) {
  std::uniform_int_distribution<std::size_t> cd(1, max_c);
  std::uniform_int_distribution<std::int64_t> nd(1, 2000);
  std::vector<std::int64_t> n(cd(rng));
  for (auto& x : n) x = nd(rng);
  return n;
}

}  // namespace

TEST_CASE("uniform distribution is exactly balanced") {
  const auto d = from_counts(std::vector<std::int64_t>(10, 100));
  const auto r = report(d);
  CHECK(r.ratio == 1.0);
  CHECK(r.kl == 0.0);
  CHECK(r.abs_dev == 0.0);
  CHECK(r.gini == 0.0);
  CHECK(report(from_counts({100, 100, 100})).ratio == 1.0);
}

TEST_CASE("hand distribution {2,2,4}") {
  const auto d = from_counts({2, 2, 4});
  CHECK(imbalance_ratio(d) == 2.0);
  // 0.5 ln 1.5 + 0.5 ln 0.75
  const double kl = 0.5 * std::log(1.5) + 0.5 * std::log(0.75);
  CHECK(imbalance_kl(d) == doctest::Approx(kl).epsilon(1e-14));
  CHECK(imbalance_kl(d) == doctest::Approx(0.058891).epsilon(1e-5));
  CHECK(std::abs(imbalance_abs(d) - 1.0 / 3.0) < 1e-12);
  CHECK(std::abs(gini(d) - 1.0 / 6.0) < 1e-12);
  CHECK(std::abs(gini(from_counts({1, 3})) - 0.25) < 1e-12);
}

TEST_CASE("entire-set imbalance ratio of a 5..1280 range") {
  CHECK(imbalance_ratio(from_counts({5, 1280})) == 256.0);
}

TEST_CASE("base-2 KL is the natural value over ln 2") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 200; ++t) {
    const auto d = from_counts(random_counts(rng));
    CHECK(imbalance_kl(d, LogBase::base2) ==
          doctest::Approx(imbalance_kl(d) / std::log(2.0)).epsilon(1e-12));
  }
}

TEST_CASE("metrics agree with brute-force definitions") {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 300; ++t) {
    const auto n = random_counts(rng);
    const auto d = from_counts(n);
    CHECK(std::abs(gini(d) - gini_brute(n)) < 1e-10);
    CHECK(std::abs(imbalance_kl(d) - kl_brute(n)) < 1e-10);
    CHECK(std::abs(imbalance_abs(d) - abs_brute(n)) < 1e-12);
    const auto [mn, mx] = std::minmax_element(n.begin(), n.end());
    CHECK(imbalance_ratio(d) == static_cast<double>(*mx) / static_cast<double>(*mn));
  }
}

TEST_CASE("scale and permutation invariance, bounds") {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 300; ++t) {
    auto n = random_counts(rng);
    const auto base = report(from_counts(n));

    auto scaled = n;
    for (auto& x : scaled) x *= 7;
    const auto rs = report(from_counts(scaled));
    CHECK(rs.ratio == base.ratio);
    CHECK(rs.kl == doctest::Approx(base.kl).epsilon(1e-12));
    CHECK(rs.abs_dev == doctest::Approx(base.abs_dev).epsilon(1e-12));
    CHECK(rs.gini == doctest::Approx(base.gini).epsilon(1e-12));

    std::shuffle(n.begin(), n.end(), rng);
    const auto rp = report(from_counts(n));
    CHECK(rp.ratio == base.ratio);
    CHECK(rp.kl == doctest::Approx(base.kl).epsilon(1e-12));
    CHECK(rp.abs_dev == doctest::Approx(base.abs_dev).epsilon(1e-12));
    CHECK(rp.gini == doctest::Approx(base.gini).epsilon(1e-12));

    CHECK(base.ratio >= 1.0);
    CHECK(base.kl >= 0.0);
    CHECK((base.gini >= 0.0 && base.gini < 1.0));
    CHECK((base.abs_dev >= 0.0 && base.abs_dev < 2.0));
    const bool uniform = std::all_of(n.begin(), n.end(), [&](auto x) { return x == n[0]; });
    CHECK((base.kl == 0.0) == uniform);
  }
}

TEST_CASE("threshold bands are half-open with the boundary in the lower band") {
  const auto d = from_counts({5, 20, 21, 50, 100, 101, 500});
  const auto s = split_by_thresholds(d, {20, 100});
  REQUIRE(s.size() == 3);
  CHECK(s.subsets[0].classes == std::vector<ClassId>{0, 1});
  CHECK(s.subsets[1].classes == std::vector<ClassId>{2, 3, 4});
  CHECK(s.subsets[2].classes == std::vector<ClassId>{5, 6});
  CHECK(s.subset_of(1) == 0);  // N = 20 -> few
  CHECK(s.subset_of(4) == 1);  // N = 100 -> medium
  CHECK(s.subset_of(6) == 2);
  CHECK(s.local_index(4) == 2);
  CHECK(s.subsets[0].avg_shot == 12.5);
  CHECK(s.min_avg_shot() == 12.5);
  CHECK_THROWS_AS(s.subset_of(99), std::out_of_range);
}

TEST_CASE("degenerate and empty bands") {
  const auto d = from_counts({5, 50, 500});
  const auto one = split_by_thresholds(d, {});
  REQUIRE(one.size() == 1);
  CHECK(one.subsets[0].classes.size() == 3);
  CHECK(one.subsets[0].avg_shot == doctest::Approx(555.0 / 3.0));

  try {
    split_by_thresholds(d, {10, 20});
    FAIL("expected an empty-band error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("medium") != std::string::npos);
  }
  CHECK_THROWS_AS(split_by_thresholds(d, {100, 50}), std::invalid_argument);
}

TEST_CASE("splits partition the classes") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 200; ++t) {
    const auto n = random_counts(rng);
    if (n.size() < 3) continue;
    const auto d = from_counts(n);
    CardinalitySplit s;
    try {
      s = split_by_thresholds(d, quantile_thresholds(d, {1.0 / 3.0, 2.0 / 3.0}));
    } catch (const std::invalid_argument&) {
      continue;  // tied counts can empty a band
    }
    std::int64_t total = 0;
    std::size_t classes = 0;
    for (std::size_t l = 0; l < s.size(); ++l) {
      for (auto c : s.subsets[l].classes) {
        CHECK(s.subset_of(c) == l);
        total += d.count_of(c);
      }
      classes += s.subsets[l].classes.size();
    }
    CHECK(classes == d.num_classes());
    CHECK(total == d.total());
  }
}

TEST_CASE("quantile thresholds follow sorted counts") {
  const auto d = from_counts({9, 1, 5, 3, 7, 2});
  // sorted: 1 2 3 5 7 9; k = round(q*6)
  CHECK(quantile_thresholds(d, {1.0 / 3.0, 2.0 / 3.0}) == std::vector<std::int64_t>{2, 5});
  CHECK(quantile_thresholds(d, {0.5}) == std::vector<std::int64_t>{3});
}

TEST_CASE("longtailness comparison rows") {
  const auto d = from_counts({5, 20, 21, 50, 100, 101, 500});
  const auto rows = longtailness_comparison(d, split_by_thresholds(d, {20, 100}));
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].name == "entire");
  CHECK(rows[1].name == "many");
  CHECK(rows[3].name == "few");
  CHECK(rows[1].metrics.ratio == doctest::Approx(500.0 / 101.0));

  const auto u = from_counts(std::vector<std::int64_t>(6, 40));
  for (const auto& r : longtailness_comparison(u, split_by_thresholds(u, {})))
    CHECK((r.metrics.ratio == 1.0 && r.metrics.kl == 0.0 && r.metrics.abs_dev == 0.0 &&
           r.metrics.gini == 0.0));

  const auto single = from_counts({3, 80});
  const auto srows = longtailness_comparison(single, split_by_thresholds(single, {10}));
  CHECK(srows[1].metrics.ratio == 1.0);
  CHECK(srows[1].metrics.gini == 0.0);
  CHECK(!format_comparison_table(rows).empty());
}

TEST_CASE("default Pareto distribution: every subset less long-tailed than the whole") {
  GeneratorSpec s;  // C = 100, 500..5, Pareto
  const auto counts = profile_counts(s);
  const auto d = from_counts(counts);
  const auto rows = longtailness_comparison(
      d, split_by_thresholds(d, quantile_thresholds(d, {1.0 / 3.0, 2.0 / 3.0})));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CAPTURE(rows[i].name);
    CHECK(rows[i].metrics.ratio < rows[0].metrics.ratio);
    CHECK(rows[i].metrics.kl < rows[0].metrics.kl);
    CHECK(rows[i].metrics.abs_dev < rows[0].metrics.abs_dev);
    CHECK(rows[i].metrics.gini < rows[0].metrics.gini);
  }
}

TEST_CASE("subset names") {
  CHECK(subset_names(1) == std::vector<std::string>{"all"});
  CHECK(subset_names(2) == std::vector<std::string>{"few", "many"});
  CHECK(subset_names(3) == std::vector<std::string>{"few", "medium", "many"});
  CHECK(subset_names(4).back() == "S4");
}
