// SPDX-License-Identifier: Apache-2.0
#include "lfme/imbalance.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

namespace lfme {

std::string_view log_base_name(LogBase b) {
  return b == LogBase::natural ? "natural" : "base2";
}

double imbalance_ratio(const ClassDistribution& dist) {
  const auto counts = dist.counts();
  const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  return static_cast<double>(*hi) / static_cast<double>(*lo);
}

double imbalance_kl(const ClassDistribution& dist, LogBase base) {
  const double n = static_cast<double>(dist.total());
  const auto c = static_cast<std::int64_t>(dist.num_classes());
  double kl = 0.0;
  for (const auto& e : dist.entries()) {
    const double p = static_cast<double>(e.count) / n;
    // p / (1/C) == count*C / N; exact integers keep the uniform case at zero.
    kl += p * std::log(static_cast<double>(e.count * c) / n);
  }
  // Rounding can leave a tiny negative residue for near-uniform inputs.
  kl = std::max(kl, 0.0);
  return base == LogBase::natural ? kl : kl / std::numbers::ln2;
}

double imbalance_abs(const ClassDistribution& dist) {
  const auto n = dist.total();
  const auto c = static_cast<std::int64_t>(dist.num_classes());
  // |1/C - N_i/N| == |N - C*N_i| / (C*N)
  std::int64_t num = 0;
  for (const auto& e : dist.entries()) num += std::abs(n - c * e.count);
  return static_cast<double>(num) /
         (static_cast<double>(c) * static_cast<double>(n));
}

double gini(const ClassDistribution& dist) {
  auto counts = dist.counts();
  std::sort(counts.begin(), counts.end());
  const auto c = static_cast<std::int64_t>(counts.size());
  // Integer accumulation keeps uniform inputs at exactly zero.
  std::int64_t num = 0;
  for (std::int64_t i = 1; i <= c; ++i) num += (2 * i - c - 1) * counts[i - 1];
  return static_cast<double>(num) /
         (static_cast<double>(c) * static_cast<double>(dist.total()));
}

ImbalanceReport report(const ClassDistribution& dist, LogBase base) {
  return {imbalance_ratio(dist), imbalance_kl(dist, base), base,
          imbalance_abs(dist), gini(dist)};
}

// ---------------------------------------------------------------------------

std::size_t CardinalitySplit::subset_of(ClassId id) const {
  for (std::size_t l = 0; l < subsets.size(); ++l)
    if (std::binary_search(subsets[l].classes.begin(), subsets[l].classes.end(), id))
      return l;
  throw std::out_of_range("class " + std::to_string(id) + " is in no subset");
}

std::size_t CardinalitySplit::local_index(ClassId id) const {
  const auto& cls = subsets[subset_of(id)].classes;
  return static_cast<std::size_t>(
      std::lower_bound(cls.begin(), cls.end(), id) - cls.begin());
}

double CardinalitySplit::min_avg_shot() const {
  double m = subsets.front().avg_shot;
  for (const auto& s : subsets) m = std::min(m, s.avg_shot);
  return m;
}

std::vector<std::string> subset_names(std::size_t num_subsets) {
  if (num_subsets == 1) return {"all"};
  if (num_subsets == 2) return {"few", "many"};
  if (num_subsets == 3) return {"few", "medium", "many"};
  std::vector<std::string> out;
  for (std::size_t l = 0; l < num_subsets; ++l) out.push_back("S" + std::to_string(l + 1));
  return out;
}

CardinalitySplit split_by_thresholds(const ClassDistribution& dist,
                                     const std::vector<std::int64_t>& thresholds) {
  for (std::size_t j = 1; j < thresholds.size(); ++j)
    if (thresholds[j] <= thresholds[j - 1])
      throw std::invalid_argument("split thresholds must be strictly increasing");

  CardinalitySplit split;
  split.thresholds = thresholds;
  split.subsets.resize(thresholds.size() + 1);
  for (const auto& e : dist.entries()) {
    const auto band = static_cast<std::size_t>(
        std::lower_bound(thresholds.begin(), thresholds.end(), e.count) -
        thresholds.begin());
    split.subsets[band].classes.push_back(e.class_id);
  }
  for (std::size_t l = 0; l < split.subsets.size(); ++l) {
    auto& s = split.subsets[l];
    if (s.classes.empty()) {
      std::string band;
      if (thresholds.empty())
        band = "all counts";
      else if (l == 0)
        band = "N <= " + std::to_string(thresholds[0]);
      else if (l == thresholds.size())
        band = "N > " + std::to_string(thresholds.back());
      else
        band = std::to_string(thresholds[l - 1]) + " < N <= " +
               std::to_string(thresholds[l]);
      throw std::invalid_argument("empty cardinality band '" +
                                  subset_names(split.subsets.size())[l] + "' (" + band + ")");
    }
    std::sort(s.classes.begin(), s.classes.end());
    double sum = 0.0;
    for (ClassId id : s.classes) sum += static_cast<double>(dist.count_of(id));
    s.avg_shot = sum / static_cast<double>(s.classes.size());
  }
  return split;
}

std::vector<std::int64_t> quantile_thresholds(const ClassDistribution& dist,
                                              const std::vector<double>& fractions) {
  auto counts = dist.counts();
  std::sort(counts.begin(), counts.end());
  const double c = static_cast<double>(counts.size());
  std::vector<std::int64_t> out;
  double prev = 0.0;
  for (double q : fractions) {
    if (!(q > prev && q < 1.0))
      throw std::invalid_argument("quantile fractions must increase within (0, 1)");
    prev = q;
    auto k = static_cast<std::size_t>(std::llround(q * c));
    k = std::clamp<std::size_t>(k, 1, counts.size());
    out.push_back(counts[k - 1]);
  }
  return out;
}

std::vector<ComparisonRow> longtailness_comparison(const ClassDistribution& dist,
                                                   const CardinalitySplit& split,
                                                   LogBase base) {
  std::vector<ComparisonRow> rows;
  rows.push_back({"entire", dist.num_classes(), report(dist, base)});
  const auto names = subset_names(split.size());
  for (std::size_t l = split.size(); l-- > 0;) {
    const auto sub = dist.subset(split.subsets[l].classes);
    rows.push_back({names[l], sub.num_classes(), report(sub, base)});
  }
  return rows;
}

std::string format_comparison_table(const std::vector<ComparisonRow>& rows) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-10s %7s %10s %8s %8s %8s\n", "subset", "classes",
                "I_Ratio", "I_KL", "I_Abs", "I_Gini");
  out += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-10s %7zu %10.3f %8.3f %8.3f %8.3f\n",
                  r.name.c_str(), r.num_classes, r.metrics.ratio, r.metrics.kl,
                  r.metrics.abs_dev, r.metrics.gini);
    out += buf;
  }
  return out;
}

}  // namespace lfme
