// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "doctest.h"
#include "lfme/distribution.hpp"
#include "test_util.hpp"

using namespace lfme;

TEST_CASE("ClassDistribution invariants") {
  const ClassDistribution d({{3, 7}, {1, 2}, {9, 1}});
  CHECK(d.num_classes() == 3);
  CHECK(d.total() == 10);
  CHECK(d.count_of(1) == 2);
  CHECK(d.contains(9));
  CHECK_FALSE(d.contains(4));
  CHECK_THROWS_AS(d.count_of(4), std::out_of_range);
  CHECK(d.sorted_ids() == std::vector<ClassId>{1, 3, 9});

  const std::vector<ClassId> ids{9, 3};
  const auto sub = d.subset(ids);
  CHECK(sub.total() == 8);

  CHECK_THROWS_AS(ClassDistribution(std::vector<ClassCount>{}), ValidationError);
  CHECK_THROWS_AS(ClassDistribution(std::vector<ClassCount>{{0, 1}, {0, 2}}), ValidationError);
  CHECK_THROWS_AS(ClassDistribution(std::vector<ClassCount>{{0, 0}}), ValidationError);
  CHECK_THROWS_AS(ClassDistribution(std::vector<ClassCount>{{0, -3}}), ValidationError);
}

TEST_CASE("exponential profile endpoints and interpolation") {
  GeneratorSpec s;
  s.profile = Profile::exponential;
  s.num_classes = 2;
  s.max_count = 100;
  s.min_count = 1;
  CHECK(profile_counts(s) == std::vector<std::int64_t>{100, 1});
  s.num_classes = 3;
  // 100 * 0.01^(1/2) = 10
  CHECK(profile_counts(s) == std::vector<std::int64_t>{100, 10, 1});

  // Independent oracle: n_max * r^(i/(C-1)) rounded.
  s.num_classes = 30;
  s.max_count = 500;
  s.min_count = 5;
  const auto counts = profile_counts(s);
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double v = 500.0 * std::pow(0.01, static_cast<double>(i) / 29.0);
    CHECK(counts[i] == static_cast<std::int64_t>(std::llround(v)));
  }
  CHECK(std::abs(static_cast<double>(counts.front()) / counts.back() - 100.0) <= 100.0 / 5.0);
}

TEST_CASE("profiles are non-increasing and clipped") {
  for (Profile p : {Profile::exponential, Profile::pareto}) {
    for (std::size_t c : {2u, 5u, 37u, 100u}) {
      GeneratorSpec s;
      s.profile = p;
      s.num_classes = c;
      s.max_count = 1280;
      s.min_count = 5;
      const auto counts = profile_counts(s);
      REQUIRE(counts.size() == c);
      CHECK(counts.front() == 1280);
      CHECK(counts.back() == 5);
      for (std::size_t i = 1; i < c; ++i) CHECK(counts[i] <= counts[i - 1]);
      for (auto n : counts) CHECK((n >= 5 && n <= 1280));
    }
  }
}

TEST_CASE("pareto profile follows the rescaled power law") {
  GeneratorSpec s;
  s.num_classes = 10;
  s.max_count = 500;
  s.min_count = 5;
  s.pareto_power = 6.0;
  const auto counts = profile_counts(s);
  const double lo = std::pow(10.0, -1.0 / 6.0);
  for (std::size_t i = 0; i < 10; ++i) {
    const double raw = std::pow(static_cast<double>(i + 1), -1.0 / 6.0);
    const double v = 5.0 + (500.0 - 5.0) * (raw - lo) / (1.0 - lo);
    CHECK(counts[i] == static_cast<std::int64_t>(std::llround(v)));
  }
}

TEST_CASE("generator validation") {
  GeneratorSpec s;
  s.feature_dim = 0;
  CHECK_THROWS_AS(validate(s), std::invalid_argument);
  s = {};
  s.num_classes = 1;
  CHECK_THROWS_AS(validate(s), std::invalid_argument);
  s = {};
  s.min_count = 600;
  CHECK_THROWS_AS(validate(s), std::invalid_argument);
  s = {};
  s.latent_dim = 17;
  CHECK_THROWS_AS(validate(s), std::invalid_argument);
  CHECK_NOTHROW(validate(GeneratorSpec{}));
}

TEST_CASE("generated data matches its distribution and is balanced off-train") {
  GeneratorSpec s;
  s.num_classes = 12;
  s.profile = Profile::exponential;
  s.max_count = 80;
  s.min_count = 4;
  s.val_per_class = 6;
  s.test_per_class = 3;
  s.seed = 5;
  const auto gen = generate(s);
  const auto& ds = gen.dataset;
  CHECK(ds.dim() == 16);
  CHECK(ds.train_distribution() == gen.distribution);
  const auto counts = profile_counts(s);
  for (std::size_t c = 0; c < counts.size(); ++c)
    CHECK(gen.distribution.count_of(static_cast<ClassId>(c)) == counts[c]);

  std::map<ClassId, int> val, test;
  for (auto r : ds.rows(Partition::val)) ++val[ds.label(r)];
  for (auto r : ds.rows(Partition::test)) ++test[ds.label(r)];
  CHECK(val.size() == 12);
  for (auto& [c, n] : val) CHECK(n == 6);
  for (auto& [c, n] : test) CHECK(n == 3);

  std::set<std::int64_t> ids;
  for (std::size_t r = 0; r < ds.size(); ++r) ids.insert(ds.id(r));
  CHECK(ids.size() == ds.size());
}

TEST_CASE("class means sit at the requested separation") {
  GeneratorSpec s;
  s.num_classes = 4;
  s.max_count = 4000;
  s.min_count = 4000;
  s.feature_dim = 6;
  s.class_separation = 5.0;
  s.seed = 2;
  const auto gen = generate(s);
  const auto& ds = gen.dataset;
  for (ClassId c = 0; c < 4; ++c) {
    std::vector<double> mean(6, 0.0);
    std::size_t n = 0;
    for (auto r : ds.rows(Partition::train)) {
      if (ds.label(r) != c) continue;
      const auto f = ds.features(r);
      for (std::size_t k = 0; k < 6; ++k) mean[k] += f[k];
      ++n;
    }
    double norm = 0.0;
    for (auto& m : mean) norm += (m / n) * (m / n);
    // Sample mean error ~ sqrt(6/4000) ~ 0.04.
    CHECK(std::sqrt(norm) == doctest::Approx(5.0).epsilon(0.05));
  }
}

TEST_CASE("generation is deterministic in the seed") {
  GeneratorSpec s;
  s.num_classes = 8;
  s.seed = 11;
  const auto a = generate(s);
  const auto b = generate(s);
  CHECK(a.dataset == b.dataset);
  CHECK(format_dataset(a.dataset) == format_dataset(b.dataset));
  s.seed = 12;
  CHECK_FALSE(generate(s).dataset == a.dataset);
}

TEST_CASE("manifest parsing") {
  const auto d = parse_manifest("0,5\n1,1280\n");
  CHECK(d.num_classes() == 2);
  CHECK(d.count_of(0) == 5);
  CHECK(d.count_of(1) == 1280);
  CHECK(parse_manifest("class_id,count\n4,2\n") == ClassDistribution(std::vector<ClassCount>{{4, 2}}));

  try {
    parse_manifest("a,b\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 1);
  }
  try {
    parse_manifest("class_id,count\n0,1\n0;2\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(parse_manifest("0,5\n0,7\n"), ValidationError);
  CHECK_THROWS_AS(parse_manifest("0,0\n"), ValidationError);
  CHECK_THROWS_AS(parse_manifest("0,-2\n"), ValidationError);

  const ClassDistribution rt({{7, 3}, {2, 9}});
  CHECK(parse_manifest(format_manifest(rt)) == rt);
}

TEST_CASE("dataset file round trip and errors") {
  GeneratorSpec s;
  s.num_classes = 5;
  s.feature_dim = 3;
  s.seed = 3;
  const auto gen = generate(s);
  const auto text = format_dataset(gen.dataset);
  CHECK(parse_dataset(text) == gen.dataset);

  const auto dir = test_util::scratch_dir("distribution");
  save_dataset(gen.dataset, dir / "d.csv");
  CHECK(load_dataset(dir / "d.csv") == gen.dataset);

  CHECK_THROWS_AS(parse_dataset(""), FormatError);
  CHECK_THROWS_AS(parse_dataset("lfme-dataset v9 dim=3 rows=0\n"), FormatError);

  // Drop the last record.
  std::string truncated = text.substr(0, text.rfind('\n', text.size() - 2) + 1);
  CHECK_THROWS_AS(parse_dataset(truncated), FormatError);

  const std::string bad_dim =
      "lfme-dataset v1 dim=2 rows=2\ninstance_id,partition,label,f_0,f_1\n"
      "0,train,0,1.0,2.0\n1,train,0,1.0\n";
  CHECK_THROWS_AS(parse_dataset(bad_dim), ValidationError);
}

TEST_CASE("dataset rejects mismatched feature length") {
  Dataset ds(3);
  const std::vector<double> ok{1, 2, 3}, bad{1, 2};
  ds.add(0, Partition::train, 0, ok);
  CHECK_THROWS_AS(ds.add(1, Partition::train, 0, bad), ValidationError);
  CHECK(ds.size() == 1);
}

TEST_CASE("feature values round-trip exactly, subnormals included") {
  Dataset ds(6);
  const std::vector<double> f{0.1, -1e-300, 3.141592653589793, 1e300, 5e-324, 0.0};
  ds.add(0, Partition::train, 0, f);
  const Dataset back = parse_dataset(format_dataset(ds));
  REQUIRE(back.size() == 1);
  for (std::size_t k = 0; k < f.size(); ++k) CHECK(back.features(0)[k] == f[k]);
}
