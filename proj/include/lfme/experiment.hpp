// SPDX-License-Identifier: Apache-2.0
#pragma once

// Run configuration files, stage-wise experiment execution, and the
// run-directory artifacts (checkpoints, report.json, trajectories.csv).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "lfme/distribution.hpp"
#include "lfme/imbalance.hpp"
#include "lfme/training.hpp"

namespace lfme {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing prerequisite artifacts for a stage.
class StageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SplitSpec {
  /// Used when non-empty; otherwise `quantiles` picks thresholds.
  std::vector<std::int64_t> thresholds;
  std::vector<double> quantiles{1.0 / 3.0, 2.0 / 3.0};
};

struct RunConfig {
  std::uint64_t seed = 1;
  GeneratorSpec data;
  SplitSpec split;
  TrainConfig experts;
  TrainConfig student;
  TrainConfig plain;
  std::string output = "runs/default";
};

/// Defaults: desk-scale data, experts on instance-random sampling, student
/// and plain baseline on class-balanced sampling.
RunConfig default_run_config();

/// Throws ConfigError for unknown keys or ill-typed values. Missing keys keep
/// their defaults. Seeds of every section are derived from "seed".
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
/// Fully resolved config (defaults filled in).
nlohmann::json to_json(const RunConfig& cfg);
/// Propagates cfg.seed into the data and training sections.
void apply_seed(RunConfig& cfg);
/// 16 hex digits of FNV-1a over the resolved config's canonical dump.
std::string config_hash(const RunConfig& cfg);

CardinalitySplit make_split(const ClassDistribution& dist, const SplitSpec& spec);

nlohmann::json to_json(const ImbalanceReport& r);
nlohmann::json to_json(const std::vector<ComparisonRow>& rows);
nlohmann::json to_json(const SplitAccuracy& acc, const std::vector<std::string>& names);
nlohmann::json to_json(const TrainReport& rep);
/// epoch, w_<subset>..., v_<subset>..., loss_total, loss_ce, kd_<subset>..., val_all
std::string trajectories_csv(const TrainReport& rep);

/// Run-directory paths.
struct RunPaths {
  std::filesystem::path root;
  std::filesystem::path config() const { return root / "config.json"; }
  std::filesystem::path dataset() const { return root / "dataset.csv"; }
  std::filesystem::path manifest() const { return root / "manifest.csv"; }
  std::filesystem::path experts_dir() const { return root / "experts"; }
  std::filesystem::path experts_index() const { return root / "experts" / "experts.json"; }
  std::filesystem::path expert_checkpoint(std::size_t l) const {
    return root / "experts" / ("expert_" + std::to_string(l) + ".ckpt");
  }
  std::filesystem::path student_checkpoint() const { return root / "student.ckpt"; }
  std::filesystem::path plain_checkpoint() const { return root / "plain.ckpt"; }
  std::filesystem::path report() const { return root / "report.json"; }
  std::filesystem::path trajectories() const { return root / "trajectories.csv"; }
};

/// Generates the dataset and writes config, dataset, manifest and the data
/// section of report.json.
struct PreparedData {
  Dataset dataset;
  ClassDistribution distribution;
  CardinalitySplit split;
};
PreparedData prepare_data(const RunConfig& cfg, const std::filesystem::path& run_dir);

/// Trains and saves experts under run_dir/experts.
ExpertBundle stage_experts(const RunConfig& cfg, const std::filesystem::path& run_dir);
/// Loads a dataset and experts saved by stage_experts; throws StageError
/// when they are missing.
std::pair<Dataset, ExpertBundle> load_expert_stage(const std::filesystem::path& experts_run);
/// Student distillation using the experts (and dataset) from `experts_run`.
TrainResult stage_student(const RunConfig& cfg, const std::filesystem::path& run_dir,
                          const std::filesystem::path& experts_run);
TrainResult stage_plain(const RunConfig& cfg, const std::filesystem::path& run_dir);

/// All stages into one run directory.
void run_experiment(const RunConfig& cfg, const std::filesystem::path& run_dir);

/// One row per trained model found in each run's report.json.
struct ReportRow {
  std::string label;
  std::vector<std::string> columns;  ///< subset names, most-shot first, then "all"
  std::vector<double> test_accuracy;
};
/// Throws StageError for missing or malformed report.json.
std::vector<ReportRow> collect_report_rows(const std::vector<std::filesystem::path>& runs);
/// Aligned text table; with `deltas`, appends differences against row 0.
std::string format_report_table(const std::vector<ReportRow>& rows, bool deltas);
std::string format_report_csv(const std::vector<ReportRow>& rows, bool deltas);

}  // namespace lfme
