// SPDX-License-Identifier: Apache-2.0
#pragma once

// Expert training on cardinality subsets, plain baselines, and the
// multi-expert distillation student with self-paced expert weights and a
// per-instance curriculum.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lfme/distribution.hpp"
#include "lfme/imbalance.hpp"
#include "lfme/neuralcore.hpp"
#include "lfme/sampling.hpp"
#include "lfme/schedules.hpp"

namespace lfme {

struct TrainConfig {
  std::size_t epochs = 90;
  std::size_t batch_size = 256;
  double lr = 0.1;
  /// The rate is multiplied by lr_factor for every milestone m with epoch > m.
  std::vector<std::size_t> lr_milestones{40, 80};
  double lr_factor = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double temperature = 2.0;
  double alpha = 0.6;
  ScheduleKind schedule = ScheduleKind::linear;
  SamplerMode sampler = SamplerMode::class_balanced;
  /// When set, instance-random before this epoch and class-balanced after.
  std::optional<std::size_t> deferred_switch_epoch;
  /// Class-balanced batches per epoch; 0 means ceil(N / batch_size).
  std::size_t epoch_len = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden{64};
  bool kd_t2_scaling = false;
  /// Pins every expert weight (1.0 gives plain distillation).
  std::optional<double> fixed_expert_weight;
  /// Disables the curriculum (every instance weight is 1).
  bool uniform_instance_weight = false;
};

/// Throws std::invalid_argument for out-of-range values.
void validate(const TrainConfig& cfg);
double learning_rate_at(const TrainConfig& cfg, std::size_t epoch);
SamplerMode sampler_mode_at(const TrainConfig& cfg, std::size_t epoch);

/// Deterministic sub-seed derivation (splitmix64 of seed and stream).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

struct ExpertModel {
  /// Sorted class ids; output j of `net` is classes[j].
  std::vector<ClassId> classes;
  DenseNet net;
  /// Top-1 over the subset's val rows, |subset|-way argmax.
  double val_accuracy = 0.0;
};

struct ExpertBundle {
  CardinalitySplit split;
  std::vector<ExpertModel> experts;
  /// Train rows in storage order and their owning-expert confidences.
  std::vector<std::size_t> train_rows;
  std::vector<double> confidences;
};

/// Accuracy per subset plus the pooled accuracy.
struct SplitAccuracy {
  std::vector<double> subset;
  std::vector<std::size_t> counts;
  double all = 0.0;
  std::size_t total = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  SamplerMode sampler = SamplerMode::class_balanced;
  double loss_total = 0.0;
  double loss_ce = 0.0;
  /// Mean per-batch unweighted distillation term per expert.
  std::vector<double> loss_kd;
  /// Expert weights after this epoch's update (empty without experts).
  std::vector<double> expert_weights;
  /// Mean curriculum weight over each subset's train rows.
  std::vector<double> mean_instance_weight;
  SplitAccuracy val;
};

struct TrainReport {
  std::string model;
  std::vector<std::string> subset_names;
  std::vector<EpochRecord> epochs;
  SplitAccuracy final_val;
  SplitAccuracy final_test;
};

struct TrainResult {
  DenseNet net;
  TrainReport report;
};

/// Sorted ids of all classes in the split; student output i is ids[i].
std::vector<ClassId> student_classes(const CardinalitySplit& split);

/// Plain CE training of one subset's expert (labels remapped to the sorted
/// subset order). Throws std::invalid_argument for an empty subset or one
/// without val rows.
ExpertModel train_expert(const Dataset& ds, const CardinalitySplit& split,
                         std::size_t subset, const TrainConfig& cfg);

/// Trains one expert per subset (seeds derived from cfg.seed) and computes
/// train-row confidences.
ExpertBundle train_experts(const Dataset& ds, const CardinalitySplit& split,
                           const TrainConfig& cfg);

/// Rebuilds a bundle's confidences from already-trained experts.
ExpertBundle assemble_bundle(const Dataset& ds, CardinalitySplit split,
                             std::vector<ExpertModel> experts);

/// C-way model trained with plain CE under cfg's sampler.
TrainResult train_plain(const Dataset& ds, const CardinalitySplit& split,
                        const TrainConfig& cfg);

/// Distills the bundle's experts into a C-way student. Per epoch: curriculum
/// weights, batches with frozen expert logits for every instance and every
/// expert, then a val pass that updates each expert weight from the
/// student's accuracy on that expert's subset.
TrainResult train_student(const Dataset& ds, const ExpertBundle& bundle,
                          const TrainConfig& cfg);

/// Top-1 with full C-way argmax, reported per subset and pooled.
SplitAccuracy evaluate(const DenseNet& student, const Dataset& ds,
                       const CardinalitySplit& split, Partition part);

/// evaluate(...).subset[l] on the val partition; throws std::invalid_argument
/// when the subset has no val rows.
double student_subset_accuracy(const DenseNet& student, const Dataset& ds,
                               const CardinalitySplit& split, std::size_t subset);

/// |subset|-way accuracy of an expert over rows labeled in its classes.
double expert_accuracy(const ExpertModel& expert, const Dataset& ds, Partition part);

}  // namespace lfme
