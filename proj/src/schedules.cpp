// SPDX-License-Identifier: Apache-2.0
#include "lfme/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace lfme {

std::string_view schedule_kind_name(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::linear: return "linear";
    case ScheduleKind::convex: return "convex";
    case ScheduleKind::concave: return "concave";
  }
  return "?";
}

ScheduleKind parse_schedule_kind(std::string_view s) {
  if (s == "linear") return ScheduleKind::linear;
  if (s == "convex") return ScheduleKind::convex;
  if (s == "concave") return ScheduleKind::concave;
  throw std::invalid_argument("unknown schedule kind '" + std::string(s) + "'");
}

double expert_weight(double acc_student, double acc_expert, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw std::invalid_argument("alpha must lie in (0, 1]");
  if (!(acc_expert > 0.0)) return 0.0;
  if (acc_student <= alpha * acc_expert) return 1.0;
  if (alpha == 1.0) return 0.0;
  const double w = (acc_expert - acc_student) / (acc_expert * (1.0 - alpha));
  return std::clamp(w, 0.0, 1.0);
}

double initial_instance_weight(double confidence, double avg_shot_min,
                               double avg_shot_subset) {
  if (!(confidence >= 0.0 && confidence <= 1.0))
    throw std::invalid_argument("confidence outside [0, 1]");
  if (!(avg_shot_min > 0.0 && avg_shot_subset > 0.0))
    throw std::invalid_argument("average shots must be positive");
  if (avg_shot_min > avg_shot_subset)
    throw std::invalid_argument("minimum average shot exceeds the subset's average shot");
  return confidence * (avg_shot_min / avg_shot_subset);
}

double schedule_value(ScheduleKind kind, double v1, std::size_t epoch,
                      std::size_t total_epochs) {
  if (total_epochs < 1) throw std::invalid_argument("total epochs must be at least 1");
  if (epoch < 1 || epoch > total_epochs)
    throw std::invalid_argument("epoch outside [1, total]");
  if (epoch == total_epochs) return 1.0;
  const double s = static_cast<double>(epoch - 1) / static_cast<double>(total_epochs - 1);
  double f = 0.0;
  switch (kind) {
    case ScheduleKind::linear: f = (1.0 - v1) * s + v1; break;
    case ScheduleKind::convex: f = 1.0 - (1.0 - v1) * std::cos(s * std::numbers::pi / 2.0); break;
    case ScheduleKind::concave: f = (1.0 - v1) * std::log2(1.0 + s) + v1; break;
  }
  if (epoch == 1) f = v1;
  return std::clamp(f, 0.0, 1.0);
}

// ---------------------------------------------------------------------------

ExpertSelector::ExpertSelector(std::vector<double> expert_accuracy, double alpha,
                               std::optional<double> fixed_weight)
    : expert_acc_(std::move(expert_accuracy)), alpha_(alpha), fixed_(fixed_weight) {
  if (!(alpha_ > 0.0 && alpha_ <= 1.0)) throw std::invalid_argument("alpha must lie in (0, 1]");
  if (fixed_ && !(*fixed_ >= 0.0 && *fixed_ <= 1.0))
    throw std::invalid_argument("fixed expert weight outside [0, 1]");
  weights_.assign(expert_acc_.size(), fixed_ ? *fixed_ : 1.0);
  for (std::size_t l = 0; l < expert_acc_.size(); ++l)
    if (!fixed_ && !(expert_acc_[l] > 0.0)) weights_[l] = 0.0;
}

void ExpertSelector::update(std::span<const double> student_accuracy) {
  if (student_accuracy.size() != expert_acc_.size())
    throw std::invalid_argument("one student accuracy per expert required");
  for (std::size_t l = 0; l < weights_.size(); ++l)
    weights_[l] = fixed_ ? *fixed_ : expert_weight(student_accuracy[l], expert_acc_[l], alpha_);
  history_.push_back(weights_);
}

InstanceCurriculum::InstanceCurriculum(std::vector<double> initial, ScheduleKind kind,
                                       std::size_t total_epochs)
    : initial_(std::move(initial)), kind_(kind), total_(total_epochs) {
  if (total_ < 1) throw std::invalid_argument("total epochs must be at least 1");
  for (double v : initial_)
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("initial weight outside [0, 1]");
}

InstanceCurriculum InstanceCurriculum::uniform(std::size_t n, std::size_t total_epochs) {
  InstanceCurriculum c(std::vector<double>(n, 1.0), ScheduleKind::linear, total_epochs);
  c.uniform_ = true;
  return c;
}

std::vector<double> InstanceCurriculum::weights_at(std::size_t epoch) const {
  std::vector<double> out(initial_.size(), 1.0);
  if (uniform_) return out;
  for (std::size_t i = 0; i < initial_.size(); ++i)
    out[i] = schedule_value(kind_, initial_[i], epoch, total_);
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> compute_confidences(std::span<const DenseNet> experts,
                                        const CardinalitySplit& split,
                                        const Dataset& ds,
                                        std::span<const std::size_t> rows) {
  if (experts.size() != split.size())
    throw std::invalid_argument("one expert per subset required");
  for (std::size_t l = 0; l < experts.size(); ++l)
    if (experts[l].output_dim() != split.subsets[l].classes.size())
      throw std::invalid_argument("expert " + std::to_string(l) +
                                  " output size does not match its subset");
  std::vector<double> out;
  out.reserve(rows.size());
  for (auto r : rows) {
    const ClassId y = ds.label(r);
    const std::size_t l = split.subset_of(y);
    const auto logits = experts[l].forward(ds.features(r));
    out.push_back(temperature_softmax(logits, 1.0)[split.local_index(y)]);
  }
  return out;
}

std::vector<double> initial_instance_weights(std::span<const double> confidences,
                                             const CardinalitySplit& split,
                                             const Dataset& ds,
                                             std::span<const std::size_t> rows) {
  if (confidences.size() != rows.size())
    throw std::invalid_argument("one confidence per row required");
  const double min_shot = split.min_avg_shot();
  std::vector<double> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& subset = split.subsets[split.subset_of(ds.label(rows[i]))];
    out[i] = initial_instance_weight(confidences[i], min_shot, subset.avg_shot);
  }
  return out;
}

}  // namespace lfme
