// SPDX-License-Identifier: Apache-2.0
#pragma once

// Adaptive loss weights: per-expert distillation weights driven by the
// student/expert accuracy gap, and per-instance curriculum weights that
// grow from a confidence-derived start value to 1.

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "lfme/distribution.hpp"
#include "lfme/imbalance.hpp"
#include "lfme/neuralcore.hpp"

namespace lfme {

enum class ScheduleKind { linear, convex, concave };

std::string_view schedule_kind_name(ScheduleKind k);
/// Throws std::invalid_argument for unknown names.
ScheduleKind parse_schedule_kind(std::string_view s);

/// 1 while acc_student <= alpha * acc_expert, then
/// (acc_expert - acc_student) / (acc_expert (1 - alpha)) clamped to [0, 1].
/// A zero-accuracy expert gets weight 0. alpha must lie in (0, 1]; at
/// alpha == 1 the weight drops straight to 0 once the student is better.
double expert_weight(double acc_student, double acc_expert, double alpha);

/// p * avg_shot_min / avg_shot_subset. Throws std::invalid_argument when the
/// ratio exceeds 1 or p lies outside [0, 1].
double initial_instance_weight(double confidence, double avg_shot_min,
                               double avg_shot_subset);

/// Curriculum value at 1-based `epoch` of `total_epochs`, using progress
/// s = (epoch-1)/(total-1) (s = 1 for a single epoch):
///   linear   (1-v1) s + v1
///   convex   1 - (1-v1) cos(s pi/2)
///   concave  (1-v1) log2(1+s) + v1
/// Every kind starts at v1 and ends at 1.
double schedule_value(ScheduleKind kind, double v1, std::size_t epoch,
                      std::size_t total_epochs);

/// Per-expert distillation weights, updated once per epoch.
class ExpertSelector {
 public:
  /// `fixed_weight` pins every weight (ablations); otherwise weights start
  /// at 1.
  ExpertSelector(std::vector<double> expert_accuracy, double alpha,
                 std::optional<double> fixed_weight = std::nullopt);

  std::span<const double> weights() const { return weights_; }
  std::span<const double> expert_accuracy() const { return expert_acc_; }
  /// Recomputes every weight from the per-subset student accuracies and
  /// appends them to the history.
  void update(std::span<const double> student_accuracy);
  /// history()[epoch][expert], one row per update.
  const std::vector<std::vector<double>>& history() const { return history_; }

 private:
  std::vector<double> expert_acc_;
  double alpha_;
  std::optional<double> fixed_;
  std::vector<double> weights_;
  std::vector<std::vector<double>> history_;
};

/// Per-instance CE weights recomputed statelessly from the stored start
/// values.
class InstanceCurriculum {
 public:
  InstanceCurriculum(std::vector<double> initial, ScheduleKind kind,
                     std::size_t total_epochs);
  /// All ones, for runs without a curriculum.
  static InstanceCurriculum uniform(std::size_t n, std::size_t total_epochs);

  std::span<const double> initial() const { return initial_; }
  std::vector<double> weights_at(std::size_t epoch) const;

 private:
  std::vector<double> initial_;
  ScheduleKind kind_ = ScheduleKind::linear;
  std::size_t total_ = 1;
  bool uniform_ = false;
};

/// Temperature-1 softmax of the owning expert's logits at each row's label.
/// `experts[l]` classifies split.subsets[l].classes in sorted id order.
/// Throws std::out_of_range for a label outside every subset.
std::vector<double> compute_confidences(std::span<const DenseNet> experts,
                                        const CardinalitySplit& split,
                                        const Dataset& ds,
                                        std::span<const std::size_t> rows);

/// Start weights for `rows` given their confidences.
std::vector<double> initial_instance_weights(std::span<const double> confidences,
                                             const CardinalitySplit& split,
                                             const Dataset& ds,
                                             std::span<const std::size_t> rows);

}  // namespace lfme
