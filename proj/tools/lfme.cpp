// SPDX-License-Identifier: Apache-2.0
// lfme: command-line front end for the long-tailed multi-expert lab.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lfme/experiment.hpp"
#include "lfme/kernels.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lfme;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::int64_t> parse_int_list(const std::string& s) {
  std::vector<std::int64_t> out;
  if (s.empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw UsageError("not an integer list: '" + s + "'");
    }
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw UsageError("not a number list: '" + s + "'");
    }
  }
  return out;
}

// Shared by the training commands.
struct RunOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void add_run_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--config", o.config, "Run config (JSON); defaults apply when omitted")
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out, "Run directory (overrides the config's output)");
  cmd->add_option("--seed", o.seed, "Override the config seed");
}

RunConfig resolve_config(const RunOptions& o) {
  RunConfig cfg = o.config.empty() ? default_run_config() : load_run_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  apply_seed(cfg);
  return cfg;
}

fs::path resolve_run_dir(const RunOptions& o, const RunConfig& cfg) {
  if (!o.out.empty()) return o.out;
  fs::path p = cfg.output;
  if (p.is_relative())
    if (const char* root = std::getenv("LFME_RUNS_ROOT"); root && *root) return fs::path(root) / p;
  return p;
}

void print_summary(const ClassDistribution& dist) {
  const auto counts = dist.counts();
  const auto [mn, mx] = std::minmax_element(counts.begin(), counts.end());
  std::printf("classes %zu  train %lld  max %lld  min %lld  ratio %.4g\n", dist.num_classes(),
              static_cast<long long>(dist.total()), static_cast<long long>(*mx),
              static_cast<long long>(*mn), imbalance_ratio(dist));
}

void print_split(const TrainReport& rep, const char* title) {
  std::printf("%s test:", title);
  for (std::size_t l = rep.subset_names.size(); l-- > 0;)
    std::printf(" %s %.4f", rep.subset_names[l].c_str(), rep.final_test.subset[l]);
  std::printf(" all %.4f\n", rep.final_test.all);
}

// ---------------------------------------------------------------------------

struct GenOptions {
  std::string config, out, manifest, profile;
  std::optional<std::size_t> classes, dim, latent;
  std::optional<std::int64_t> max_count, min_count;
  std::optional<double> imbalance, power, separation;
  std::optional<std::uint64_t> seed;
};

int cmd_gen_data(const GenOptions& o) {
  RunConfig cfg = o.config.empty() ? default_run_config() : load_run_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  apply_seed(cfg);
  GeneratorSpec& spec = cfg.data;
  if (o.classes) spec.num_classes = *o.classes;
  if (!o.profile.empty()) {
    if (o.profile == "exp" || o.profile == "exponential") spec.profile = Profile::exponential;
    else if (o.profile == "pareto") spec.profile = Profile::pareto;
    else throw UsageError("--profile must be exp or pareto");
  }
  if (o.max_count) spec.max_count = *o.max_count;
  if (o.min_count) spec.min_count = *o.min_count;
  if (o.imbalance) {
    if (!(*o.imbalance >= 1.0)) throw UsageError("--imbalance must be >= 1");
    spec.min_count = std::max<std::int64_t>(
        1, std::llround(static_cast<double>(spec.max_count) / *o.imbalance));
  }
  if (o.power) spec.pareto_power = *o.power;
  if (o.dim) spec.feature_dim = *o.dim;
  if (o.latent) spec.latent_dim = *o.latent;
  if (o.separation) spec.class_separation = *o.separation;

  const GeneratedData gen = generate(spec);
  const fs::path out = o.out;
  save_dataset(gen.dataset, out / "dataset.csv");
  save_manifest(gen.distribution, o.manifest.empty() ? out / "manifest.csv" : fs::path(o.manifest));
  print_summary(gen.distribution);
  std::printf("wrote %s\n", (out / "dataset.csv").string().c_str());
  return 0;
}

struct MetricsOptions {
  std::string manifest, dataset, thresholds, quantiles, log_base = "nat";
  bool json = false;
};

int cmd_metrics(const MetricsOptions& o) {
  if (o.manifest.empty() == o.dataset.empty())
    throw UsageError("give exactly one of --manifest or --dataset");
  if (!o.thresholds.empty() && !o.quantiles.empty())
    throw UsageError("--thresholds and --quantiles are exclusive");
  LogBase base;
  if (o.log_base == "nat" || o.log_base == "e") base = LogBase::natural;
  else if (o.log_base == "2") base = LogBase::base2;
  else throw UsageError("--log-base must be nat or 2");

  const ClassDistribution dist = o.manifest.empty()
                                     ? load_dataset(o.dataset).train_distribution()
                                     : load_manifest(o.manifest);
  std::vector<ComparisonRow> rows;
  std::vector<std::int64_t> thresholds;
  if (!o.thresholds.empty()) thresholds = parse_int_list(o.thresholds);
  else if (!o.quantiles.empty()) thresholds = quantile_thresholds(dist, parse_double_list(o.quantiles));

  if (!o.thresholds.empty() || !o.quantiles.empty()) {
    rows = longtailness_comparison(dist, split_by_thresholds(dist, thresholds), base);
  } else {
    rows.push_back({"entire", dist.num_classes(), report(dist, base)});
  }
  if (o.json) {
    json j;
    j["log_base"] = std::string(log_base_name(base));
    j["thresholds"] = thresholds;
    j["rows"] = to_json(rows);
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << format_comparison_table(rows);
  }
  return 0;
}

int cmd_train_experts(const RunOptions& o) {
  const RunConfig cfg = resolve_config(o);
  const fs::path dir = resolve_run_dir(o, cfg);
  const ExpertBundle bundle = stage_experts(cfg, dir);
  const auto names = subset_names(bundle.split.size());
  for (std::size_t l = 0; l < bundle.experts.size(); ++l)
    std::printf("expert %-6s classes %3zu  val %.4f\n", names[l].c_str(),
                bundle.experts[l].classes.size(), bundle.experts[l].val_accuracy);
  std::printf("run directory %s\n", dir.string().c_str());
  return 0;
}

int cmd_train_student(const RunOptions& o, const std::string& experts,
                      const std::vector<std::string>& ablate) {
  RunConfig cfg = resolve_config(o);
  for (const auto& a : ablate) {
    if (a == "no-spes") cfg.student.fixed_expert_weight = 1.0;
    else if (a == "no-curriculum") cfg.student.uniform_instance_weight = true;
    else throw UsageError("unknown ablation '" + a + "' (no-spes, no-curriculum)");
  }
  const fs::path dir = resolve_run_dir(o, cfg);
  const fs::path experts_run = experts.empty() ? dir : fs::path(experts);
  const TrainResult r = stage_student(cfg, dir, experts_run);
  print_split(r.report, "student");
  std::printf("run directory %s\n", dir.string().c_str());
  return 0;
}

int cmd_train_plain(const RunOptions& o) {
  const RunConfig cfg = resolve_config(o);
  const fs::path dir = resolve_run_dir(o, cfg);
  const TrainResult r = stage_plain(cfg, dir);
  print_split(r.report, "plain");
  std::printf("run directory %s\n", dir.string().c_str());
  return 0;
}

int cmd_run(const RunOptions& o) {
  const RunConfig cfg = resolve_config(o);
  const fs::path dir = resolve_run_dir(o, cfg);
  run_experiment(cfg, dir);
  std::cout << format_report_table(collect_report_rows({dir}), false);
  std::printf("run directory %s\n", dir.string().c_str());
  return 0;
}

void print_trajectory_summary(const fs::path& run) {
  const RunPaths paths{run};
  const json report = json::parse(read_text_file(paths.report()));
  if (!report.contains("student")) return;
  const auto& st = report["student"];
  const auto names = st.at("subsets").get<std::vector<std::string>>();
  const auto& w = st.at("epochs").at("expert_weights");
  if (w.empty()) return;
  std::printf("%s expert weights:", run.string().c_str());
  for (std::size_t l = 0; l < names.size(); ++l) {
    std::size_t departed = 0;
    for (std::size_t e = 0; e < w.size(); ++e)
      if (w[e][l].get<double>() < 1.0) {
        departed = e + 1;
        break;
      }
    std::printf(" %s final %.3f", names[l].c_str(), w.back()[l].get<double>());
    if (departed) std::printf(" (first below 1 at epoch %zu)", departed);
    else std::printf(" (never below 1)");
  }
  std::printf("\n");
}

int cmd_report(const std::string& run, const std::vector<std::string>& compare, bool csv) {
  std::vector<fs::path> runs{run};
  for (const auto& c : compare) runs.emplace_back(c);
  const auto rows = collect_report_rows(runs);
  const bool deltas = !compare.empty();
  if (csv) {
    std::cout << format_report_csv(rows, deltas);
    return 0;
  }
  std::cout << format_report_table(rows, deltas);
  for (const auto& r : runs) print_trajectory_summary(r);
  return 0;
}

int cmd_grad_check(std::size_t trials, std::uint64_t seed, bool as_json) {
  GradCheckConfig gc;
  gc.trials = trials;
  gc.seed = seed;
  const GradCheckReport rep = grad_check(gc);
  if (as_json) {
    json j{{"trials", rep.trials},
           {"params_checked", rep.params_checked},
           {"max_rel_error", rep.max_rel_error},
           {"tolerance", gc.tolerance},
           {"passed", rep.passed}};
    std::cout << j.dump(2) << "\n";
  } else {
    std::printf("trials %zu  params %zu  max relative error %.3e  %s\n", rep.trials,
                rep.params_checked, rep.max_rel_error, rep.passed ? "PASS" : "FAIL");
  }
  return rep.passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lfme: long-tailed classification with multiple experts"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string kernels;
  app.add_option("--kernels", kernels, "Kernel backend: scalar, avx2 or neon");

  GenOptions gen;
  auto* c_gen = app.add_subcommand("gen-data", "Generate a synthetic long-tailed dataset");
  c_gen->add_option("--config", gen.config, "Run config whose data section is used")
      ->check(CLI::ExistingFile);
  c_gen->add_option("--out", gen.out, "Output directory for dataset.csv and manifest.csv")
      ->required();
  c_gen->add_option("--manifest", gen.manifest, "Manifest path (default <out>/manifest.csv)");
  c_gen->add_option("--classes", gen.classes, "Number of classes");
  c_gen->add_option("--profile", gen.profile, "Count profile: exp or pareto");
  c_gen->add_option("--imbalance", gen.imbalance, "max/min count ratio (sets --min-count)");
  c_gen->add_option("--max-count", gen.max_count, "Largest class count");
  c_gen->add_option("--min-count", gen.min_count, "Smallest class count");
  c_gen->add_option("--power", gen.power, "Pareto profile exponent");
  c_gen->add_option("--dim", gen.dim, "Feature dimension");
  c_gen->add_option("--latent-dim", gen.latent, "Dimension of the class-mean subspace");
  c_gen->add_option("--separation", gen.separation, "Distance between class means");
  c_gen->add_option("--seed", gen.seed, "Generator seed");

  MetricsOptions met;
  auto* c_met = app.add_subcommand("metrics", "Imbalance metrics of a distribution and its subsets");
  c_met->add_option("--manifest", met.manifest, "Manifest (class_id,count)");
  c_met->add_option("--dataset", met.dataset, "Dataset file (train partition is used)");
  c_met->add_option("--thresholds", met.thresholds, "Comma-separated cardinality thresholds");
  c_met->add_option("--quantiles", met.quantiles, "Comma-separated class-fraction quantiles");
  c_met->add_option("--log-base", met.log_base, "KL log base: nat or 2");
  c_met->add_flag("--json", met.json, "Emit JSON");

  RunOptions o_exp, o_stu, o_pla, o_run;
  auto* c_exp = app.add_subcommand("train-experts", "Train one expert per cardinality subset");
  add_run_options(c_exp, o_exp);
  auto* c_stu = app.add_subcommand("train-student", "Distill the experts into a unified student");
  add_run_options(c_stu, o_stu);
  std::string experts_dir;
  std::vector<std::string> ablate;
  c_stu->add_option("--experts", experts_dir, "Run directory holding trained experts");
  c_stu->add_option("--ablate", ablate, "no-spes and/or no-curriculum")->delimiter(',');
  auto* c_pla = app.add_subcommand("train-plain", "Train the plain cross-entropy baseline");
  add_run_options(c_pla, o_pla);
  auto* c_run = app.add_subcommand("run", "Experts, student and plain baseline in one run directory");
  add_run_options(c_run, o_run);

  std::string rep_run;
  std::vector<std::string> rep_compare;
  bool rep_csv = false;
  auto* c_rep = app.add_subcommand("report", "Accuracy tables from run directories");
  c_rep->add_option("--run", rep_run, "Run directory")->required();
  c_rep->add_option("--compare", rep_compare, "Further run directories");
  c_rep->add_flag("--csv", rep_csv, "Emit CSV");

  std::size_t gc_trials = 20;
  std::uint64_t gc_seed = 1;
  bool gc_json = false;
  auto* c_gc = app.add_subcommand("grad-check", "Finite-difference check of the loss gradients");
  c_gc->add_option("--trials", gc_trials, "Random configurations");
  c_gc->add_option("--seed", gc_seed, "Seed");
  c_gc->add_flag("--json", gc_json, "Emit JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (!kernels.empty()) {
      if (kernels == "scalar") kernels::set_backend(kernels::Backend::scalar);
      else if (kernels == "avx2") kernels::set_backend(kernels::Backend::avx2);
      else if (kernels == "neon") kernels::set_backend(kernels::Backend::neon);
      else throw UsageError("--kernels must be scalar, avx2 or neon");
    }
    if (c_gen->parsed()) return cmd_gen_data(gen);
    if (c_met->parsed()) return cmd_metrics(met);
    if (c_exp->parsed()) return cmd_train_experts(o_exp);
    if (c_stu->parsed()) return cmd_train_student(o_stu, experts_dir, ablate);
    if (c_pla->parsed()) return cmd_train_plain(o_pla);
    if (c_run->parsed()) return cmd_run(o_run);
    if (c_rep->parsed()) return cmd_report(rep_run, rep_compare, rep_csv);
    if (c_gc->parsed()) return cmd_grad_check(gc_trials, gc_seed, gc_json);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "lfme: %s\n", e.what());
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "lfme: config: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "lfme: %s\n", e.what());
    return 1;
  }
  return 0;
}
