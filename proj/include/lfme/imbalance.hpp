// SPDX-License-Identifier: Apache-2.0
#pragma once

// Longtailness metrics over class-count distributions and the
// cardinality-adjacent class splitter.

#include <cstdint>
#include <string>
#include <vector>

#include "lfme/distribution.hpp"

namespace lfme {

enum class LogBase { natural, base2 };

std::string_view log_base_name(LogBase b);

struct ImbalanceReport {
  double ratio = 1.0;
  double kl = 0.0;
  LogBase kl_base = LogBase::natural;
  double abs_dev = 0.0;
  double gini = 0.0;
};

/// N_max / N_min.
double imbalance_ratio(const ClassDistribution& dist);
/// KL divergence from the uniform distribution over the same classes.
double imbalance_kl(const ClassDistribution& dist, LogBase base = LogBase::natural);
/// Sum over classes of |1/C - N_i/N|.
double imbalance_abs(const ClassDistribution& dist);
/// Gini coefficient over counts sorted ascending.
double gini(const ClassDistribution& dist);
ImbalanceReport report(const ClassDistribution& dist,
                       LogBase base = LogBase::natural);

/// One cardinality band. Classes are sorted by id.
struct ClassSubset {
  std::vector<ClassId> classes;
  /// Mean samples per class over the band.
  double avg_shot = 0.0;
};

/// Ordered from fewest-shot (index 0) to most-shot.
///
/// Bands are half-open with the boundary count assigned to the lower band:
/// N <= T_1 is subset 0, T_j < N <= T_{j+1} is subset j, N > T_{L-1} is the
/// last subset.
struct CardinalitySplit {
  std::vector<std::int64_t> thresholds;
  std::vector<ClassSubset> subsets;

  std::size_t size() const { return subsets.size(); }
  /// Index of the subset containing `id`; throws std::out_of_range.
  std::size_t subset_of(ClassId id) const;
  /// Position of `id` inside its subset's sorted class list.
  std::size_t local_index(ClassId id) const;
  /// Smallest avg_shot over all subsets.
  double min_avg_shot() const;
};

/// Throws std::invalid_argument for non-increasing thresholds and for any
/// empty band (naming it). An empty threshold list yields one subset.
CardinalitySplit split_by_thresholds(const ClassDistribution& dist,
                                     const std::vector<std::int64_t>& thresholds);

/// Thresholds placing roughly `fractions[j]` of the classes (sorted by
/// count) at or below T_j. Fractions must be strictly increasing in (0, 1).
std::vector<std::int64_t> quantile_thresholds(const ClassDistribution& dist,
                                              const std::vector<double>& fractions);

/// "few"/"medium"/"many" for three subsets, "few"/"many" for two, "all" for
/// one and "S1".."SL" otherwise.
std::vector<std::string> subset_names(std::size_t num_subsets);

struct ComparisonRow {
  std::string name;
  std::size_t num_classes = 0;
  ImbalanceReport metrics;
};

/// Entire-set row first, then one row per subset from most-shot to fewest.
std::vector<ComparisonRow> longtailness_comparison(const ClassDistribution& dist,
                                                   const CardinalitySplit& split,
                                                   LogBase base = LogBase::natural);

std::string format_comparison_table(const std::vector<ComparisonRow>& rows);

}  // namespace lfme
