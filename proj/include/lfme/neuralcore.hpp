// SPDX-License-Identifier: Apache-2.0
#pragma once

// Small rectifier MLP classifiers with exact analytic gradients for a
// weighted cross-entropy plus temperature-softmax distillation loss.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace lfme {

/// Row-major `out x in` weights and `out` biases.
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;
  std::vector<double> bias;
  bool operator==(const DenseLayer&) const = default;
};

/// Per-parameter arrays with the same shapes as a DenseNet.
struct GradientSet {
  std::vector<DenseLayer> layers;
  bool operator==(const GradientSet&) const = default;
};

class DenseNet {
 public:
  DenseNet() = default;
  /// All-zero parameters. `dims` = {input, hidden..., output}, at least two
  /// entries, all positive.
  explicit DenseNet(std::vector<std::size_t> dims);

  /// He-style uniform fan-in initialization, zero biases.
  static DenseNet initialized(std::vector<std::size_t> dims, std::uint64_t seed);

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t output_dim() const { return dims_.back(); }
  std::size_t num_params() const;

  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  /// Logits for one input. Throws std::invalid_argument on a dimension
  /// mismatch.
  std::vector<double> forward(std::span<const double> x) const;
  std::size_t predict(std::span<const double> x) const;

  bool operator==(const DenseNet&) const = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<DenseLayer> layers_;
};

GradientSet zeros_like(const DenseNet& net);

// --- losses --------------------------------------------------------------

/// softmax(z / T), max-shifted. Throws std::invalid_argument unless T > 0.
std::vector<double> temperature_softmax(std::span<const double> z, double temperature);
/// -log softmax(logits)[label]. Throws std::out_of_range for a bad label.
double ce_loss(std::span<const double> logits, std::size_t label);
/// Cross-entropy -sum_i tau(expert)_i log tau(student)_i at temperature T.
/// Throws std::invalid_argument on a length mismatch.
double kd_loss(std::span<const double> expert_logits,
               std::span<const double> student_slice, double temperature);
/// Shannon entropy (nats) of a probability vector.
double entropy(std::span<const double> p);

struct LossBreakdown {
  double weighted_ce = 0.0;
  /// Unweighted per-expert distillation terms (after optional T^2 scaling).
  std::vector<double> kd_per_expert;
  double total = 0.0;
};

/// A batch of inputs with student-space labels and per-instance CE weights.
struct Batch {
  std::span<const double> features;  ///< batch x input_dim, row-major
  std::span<const std::size_t> labels;
  std::span<const double> ce_weights;
  std::size_t size() const { return labels.size(); }
};

/// Frozen teacher outputs for one expert over a batch.
struct ExpertTargets {
  /// Student output indices of the expert's classes, in expert output order.
  std::span<const std::size_t> slice;
  std::span<const double> logits;  ///< batch x slice.size(), row-major
};

struct LossConfig {
  double temperature = 2.0;
  /// Multiply each distillation term by T^2.
  bool kd_t2_scaling = false;
};

/// Batch-mean loss
///   (1/B) sum_i v_i CE_i + sum_l w_l (1/B) sum_i KD_{l,i}
/// and its exact gradient, written into `grads` (reshaped as needed).
/// Throws std::invalid_argument on shape mismatches or weights outside [0,1].
LossBreakdown loss_and_gradients(const DenseNet& net, const Batch& batch,
                                 std::span<const ExpertTargets> experts,
                                 std::span<const double> expert_weights,
                                 const LossConfig& cfg, GradientSet& grads);

/// Same loss evaluated through forward() and the scalar loss functions only.
LossBreakdown evaluate_loss(const DenseNet& net, const Batch& batch,
                            std::span<const ExpertTargets> experts,
                            std::span<const double> expert_weights,
                            const LossConfig& cfg);

// --- optimizer -------------------------------------------------------------

struct SgdParams {
  double lr = 0.1;
  double momentum = 0.9;
  /// L2 decay added to weight gradients (biases are not decayed).
  double weight_decay = 5e-4;
};

struct SgdState {
  GradientSet velocity;
};

/// vel = momentum*vel + (g + wd*theta); theta -= lr*vel.
void sgd_step(DenseNet& net, const GradientSet& grads, const SgdParams& params,
              SgdState& state);

// --- gradient check --------------------------------------------------------

struct GradCheckConfig {
  std::size_t trials = 20;
  double tolerance = 1e-5;
  double step = 1e-5;
  std::uint64_t seed = 1;
  std::size_t max_input = 8;
  std::size_t max_hidden = 16;
  std::size_t max_classes = 10;
  std::size_t max_experts = 3;
  std::size_t max_batch = 5;
  /// Evaluate at all-zero parameters with identical batch rows.
  bool degenerate = false;
};

struct GradCheckReport {
  std::size_t trials = 0;
  std::size_t params_checked = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// Relative error used by the checker: |a - n| / max(|a|, |n|, 1e-3).
double gradient_rel_error(double analytic, double numeric);

/// Largest relative error between loss_and_gradients and central
/// differences of evaluate_loss over every parameter.
double max_gradient_error(const DenseNet& net, const Batch& batch,
                          std::span<const ExpertTargets> experts,
                          std::span<const double> expert_weights,
                          const LossConfig& cfg, double step,
                          std::size_t* params_checked = nullptr);

GradCheckReport grad_check(const GradCheckConfig& cfg);

// --- checkpoints -----------------------------------------------------------

std::string format_checkpoint(const DenseNet& net);
/// Throws FormatError on malformed input.
DenseNet parse_checkpoint(std::string_view text);
void save_checkpoint(const DenseNet& net, const std::filesystem::path& path);
DenseNet load_checkpoint(const std::filesystem::path& path);

}  // namespace lfme
