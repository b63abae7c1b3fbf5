// SPDX-License-Identifier: Apache-2.0
#include "lfme/experiment.hpp"

#include <cstdio>
#include <fstream>
#include <set>

namespace lfme {

using nlohmann::json;

RunConfig default_run_config() {
  RunConfig cfg;
  cfg.data.num_classes = 30;
  cfg.data.max_count = 500;
  cfg.data.min_count = 5;
  cfg.data.profile = Profile::exponential;
  cfg.data.feature_dim = 16;
  cfg.data.latent_dim = 0;
  cfg.data.class_separation = 3.0;
  cfg.data.val_per_class = 100;
  cfg.data.test_per_class = 100;

  TrainConfig base;
  base.epochs = 40;
  base.batch_size = 32;
  base.lr = 0.05;
  base.lr_milestones = {30};
  base.lr_factor = 0.1;
  base.hidden = {64};

  cfg.experts = base;
  cfg.experts.sampler = SamplerMode::instance_random;
  cfg.student = base;
  cfg.student.sampler = SamplerMode::class_balanced;
  cfg.plain = cfg.student;
  apply_seed(cfg);
  return cfg;
}

void apply_seed(RunConfig& cfg) {
  cfg.data.seed = cfg.seed;
  cfg.experts.seed = derive_seed(cfg.seed, 11);
  // Student and plain share init and sampler streams so arms stay paired.
  cfg.student.seed = derive_seed(cfg.seed, 12);
  cfg.plain.seed = cfg.student.seed;
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

template <class T>
T get_as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

std::uint64_t get_uint(const json& v, const std::string& key) {
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
    throw ConfigError("config key '" + key + "' must be a non-negative integer");
  return v.get<std::uint64_t>();
}

double get_double(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError("config key '" + key + "' must be a number");
  return v.get<double>();
}

void parse_data(const json& j, GeneratorSpec& d) {
  if (!j.is_object()) throw ConfigError("'data' must be an object");
  for (const auto& [key, v] : j.items()) {
    const std::string k = "data." + key;
    if (key == "classes") d.num_classes = get_uint(v, k);
    else if (key == "max_count") d.max_count = static_cast<std::int64_t>(get_uint(v, k));
    else if (key == "min_count") d.min_count = static_cast<std::int64_t>(get_uint(v, k));
    else if (key == "imbalance") {
      const double ratio = get_double(v, k);
      if (!(ratio >= 1.0)) throw ConfigError("data.imbalance must be >= 1");
      d.min_count = std::max<std::int64_t>(
          1, std::llround(static_cast<double>(d.max_count) / ratio));
    } else if (key == "profile") {
      const auto s = get_as<std::string>(v, k);
      if (s == "exponential" || s == "exp") d.profile = Profile::exponential;
      else if (s == "pareto") d.profile = Profile::pareto;
      else throw ConfigError("data.profile must be 'exponential' or 'pareto'");
    } else if (key == "pareto_power") d.pareto_power = get_double(v, k);
    else if (key == "feature_dim") d.feature_dim = get_uint(v, k);
    else if (key == "latent_dim") d.latent_dim = get_uint(v, k);
    else if (key == "separation") d.class_separation = get_double(v, k);
    else if (key == "val_per_class") d.val_per_class = static_cast<std::int64_t>(get_uint(v, k));
    else if (key == "test_per_class") d.test_per_class = static_cast<std::int64_t>(get_uint(v, k));
    else throw ConfigError("unknown config key '" + k + "'");
  }
}

void parse_train(const json& j, const std::string& section, TrainConfig& t) {
  if (!j.is_object()) throw ConfigError("'" + section + "' must be an object");
  for (const auto& [key, v] : j.items()) {
    const std::string k = section + "." + key;
    if (key == "epochs") t.epochs = get_uint(v, k);
    else if (key == "batch_size") t.batch_size = get_uint(v, k);
    else if (key == "lr") t.lr = get_double(v, k);
    else if (key == "lr_milestones") {
      if (!v.is_array()) throw ConfigError(k + " must be an array");
      t.lr_milestones.clear();
      for (const auto& m : v) t.lr_milestones.push_back(get_uint(m, k));
    } else if (key == "lr_factor") t.lr_factor = get_double(v, k);
    else if (key == "momentum") t.momentum = get_double(v, k);
    else if (key == "weight_decay") t.weight_decay = get_double(v, k);
    else if (key == "temperature") t.temperature = get_double(v, k);
    else if (key == "alpha") t.alpha = get_double(v, k);
    else if (key == "schedule") {
      try {
        t.schedule = parse_schedule_kind(get_as<std::string>(v, k));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(k + ": " + e.what());
      }
    } else if (key == "sampler") {
      try {
        t.sampler = parse_sampler_mode(get_as<std::string>(v, k));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(k + ": " + e.what());
      }
    } else if (key == "deferred_switch_epoch") {
      if (v.is_null()) t.deferred_switch_epoch.reset();
      else t.deferred_switch_epoch = get_uint(v, k);
    } else if (key == "epoch_len") t.epoch_len = get_uint(v, k);
    else if (key == "hidden") {
      if (!v.is_array()) throw ConfigError(k + " must be an array");
      t.hidden.clear();
      for (const auto& h : v) t.hidden.push_back(get_uint(h, k));
    } else if (key == "kd_t2_scaling") t.kd_t2_scaling = get_as<bool>(v, k);
    else if (key == "fixed_expert_weight") {
      if (v.is_null()) t.fixed_expert_weight.reset();
      else t.fixed_expert_weight = get_double(v, k);
    } else if (key == "uniform_instance_weight") t.uniform_instance_weight = get_as<bool>(v, k);
    else throw ConfigError("unknown config key '" + k + "'");
  }
  try {
    validate(t);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(section + ": " + e.what());
  }
}

json train_json(const TrainConfig& t) {
  json j;
  j["epochs"] = t.epochs;
  j["batch_size"] = t.batch_size;
  j["lr"] = t.lr;
  j["lr_milestones"] = t.lr_milestones;
  j["lr_factor"] = t.lr_factor;
  j["momentum"] = t.momentum;
  j["weight_decay"] = t.weight_decay;
  j["temperature"] = t.temperature;
  j["alpha"] = t.alpha;
  j["schedule"] = std::string(schedule_kind_name(t.schedule));
  j["sampler"] = std::string(sampler_mode_name(t.sampler));
  j["deferred_switch_epoch"] =
      t.deferred_switch_epoch ? json(*t.deferred_switch_epoch) : json(nullptr);
  j["epoch_len"] = t.epoch_len;
  j["hidden"] = t.hidden;
  j["kd_t2_scaling"] = t.kd_t2_scaling;
  j["fixed_expert_weight"] =
      t.fixed_expert_weight ? json(*t.fixed_expert_weight) : json(nullptr);
  j["uniform_instance_weight"] = t.uniform_instance_weight;
  return j;
}

}  // namespace

RunConfig parse_run_config(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig cfg = default_run_config();
  // Seed first so sections parse against the final seed.
  if (j.contains("seed")) cfg.seed = get_uint(j["seed"], "seed");
  for (const auto& [key, v] : j.items()) {
    if (key == "seed") continue;
    if (key == "data") parse_data(v, cfg.data);
    else if (key == "split") {
      if (!v.is_object()) throw ConfigError("'split' must be an object");
      for (const auto& [sk, sv] : v.items()) {
        if (sk == "thresholds") {
          cfg.split.thresholds.clear();
          for (const auto& t : sv) cfg.split.thresholds.push_back(static_cast<std::int64_t>(get_uint(t, "split.thresholds")));
        } else if (sk == "quantiles") {
          cfg.split.quantiles.clear();
          for (const auto& q : sv) cfg.split.quantiles.push_back(get_double(q, "split.quantiles"));
        } else {
          throw ConfigError("unknown config key 'split." + sk + "'");
        }
      }
    } else if (key == "experts") parse_train(v, "experts", cfg.experts);
    else if (key == "student") parse_train(v, "student", cfg.student);
    else if (key == "plain") parse_train(v, "plain", cfg.plain);
    else if (key == "output") cfg.output = get_as<std::string>(v, "output");
    else throw ConfigError("unknown config key '" + key + "'");
  }
  apply_seed(cfg);
  try {
    validate(cfg.data);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("data: ") + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

json to_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["output"] = cfg.output;
  json d;
  d["classes"] = cfg.data.num_classes;
  d["max_count"] = cfg.data.max_count;
  d["min_count"] = cfg.data.min_count;
  d["profile"] = cfg.data.profile == Profile::exponential ? "exponential" : "pareto";
  d["pareto_power"] = cfg.data.pareto_power;
  d["feature_dim"] = cfg.data.feature_dim;
  d["latent_dim"] = cfg.data.latent_dim;
  d["separation"] = cfg.data.class_separation;
  d["val_per_class"] = cfg.data.val_per_class;
  d["test_per_class"] = cfg.data.test_per_class;
  j["data"] = d;
  j["split"] = {{"thresholds", cfg.split.thresholds}, {"quantiles", cfg.split.quantiles}};
  j["experts"] = train_json(cfg.experts);
  j["student"] = train_json(cfg.student);
  j["plain"] = train_json(cfg.plain);
  return j;
}

std::string config_hash(const RunConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_json(cfg).dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

CardinalitySplit make_split(const ClassDistribution& dist, const SplitSpec& spec) {
  if (!spec.thresholds.empty()) return split_by_thresholds(dist, spec.thresholds);
  return split_by_thresholds(dist, quantile_thresholds(dist, spec.quantiles));
}

// ---------------------------------------------------------------------------
// Serialization

json to_json(const ImbalanceReport& r) {
  return {{"ratio", r.ratio},
          {"kl", r.kl},
          {"kl_base", std::string(log_base_name(r.kl_base))},
          {"abs_dev", r.abs_dev},
          {"gini", r.gini}};
}

json to_json(const std::vector<ComparisonRow>& rows) {
  json arr = json::array();
  for (const auto& row : rows) {
    json j = to_json(row.metrics);
    j["name"] = row.name;
    j["classes"] = row.num_classes;
    arr.push_back(j);
  }
  return arr;
}

json to_json(const SplitAccuracy& acc, const std::vector<std::string>& names) {
  json j;
  for (std::size_t l = 0; l < acc.subset.size(); ++l) {
    const std::string name = l < names.size() ? names[l] : "S" + std::to_string(l + 1);
    j[name] = acc.subset[l];
    j[name + "_count"] = acc.counts[l];
  }
  j["all"] = acc.all;
  j["all_count"] = acc.total;
  return j;
}

json to_json(const TrainReport& rep) {
  json j;
  j["model"] = rep.model;
  j["subsets"] = rep.subset_names;
  json ep;
  ep["epoch"] = json::array();
  ep["lr"] = json::array();
  ep["sampler"] = json::array();
  ep["loss_total"] = json::array();
  ep["loss_ce"] = json::array();
  ep["loss_kd"] = json::array();
  ep["expert_weights"] = json::array();
  ep["mean_instance_weight"] = json::array();
  ep["val_all"] = json::array();
  ep["val_subset"] = json::array();
  for (const auto& r : rep.epochs) {
    ep["epoch"].push_back(r.epoch);
    ep["lr"].push_back(r.lr);
    ep["sampler"].push_back(std::string(sampler_mode_name(r.sampler)));
    ep["loss_total"].push_back(r.loss_total);
    ep["loss_ce"].push_back(r.loss_ce);
    ep["loss_kd"].push_back(r.loss_kd);
    ep["expert_weights"].push_back(r.expert_weights);
    ep["mean_instance_weight"].push_back(r.mean_instance_weight);
    ep["val_all"].push_back(r.val.all);
    ep["val_subset"].push_back(r.val.subset);
  }
  j["epochs"] = ep;
  j["final_val"] = to_json(rep.final_val, rep.subset_names);
  j["final_test"] = to_json(rep.final_test, rep.subset_names);
  return j;
}

std::string trajectories_csv(const TrainReport& rep) {
  std::string out = "epoch";
  const bool has_w = !rep.epochs.empty() && !rep.epochs.front().expert_weights.empty();
  if (has_w)
    for (const auto& n : rep.subset_names) out += ",w_" + n;
  for (const auto& n : rep.subset_names) out += ",v_" + n;
  out += ",loss_total,loss_ce";
  if (has_w)
    for (const auto& n : rep.subset_names) out += ",kd_" + n;
  out += ",val_all\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, ",%.6g", v);
    out += buf;
  };
  for (const auto& r : rep.epochs) {
    out += std::to_string(r.epoch);
    for (double w : r.expert_weights) num(w);
    for (double v : r.mean_instance_weight) num(v);
    num(r.loss_total);
    num(r.loss_ce);
    for (double k : r.loss_kd) num(k);
    num(r.val.all);
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stages

namespace {

json read_report(const RunPaths& paths) {
  if (!std::filesystem::exists(paths.report())) return json::object();
  try {
    return json::parse(read_text_file(paths.report()));
  } catch (const json::parse_error&) {
    return json::object();
  }
}

void write_report(const RunPaths& paths, const RunConfig& cfg, json report) {
  report["format"] = "lfme-report v1";
  report["config_hash"] = config_hash(cfg);
  write_text_file(paths.report(), report.dump(2) + "\n");
}

void write_config(const RunPaths& paths, const RunConfig& cfg) {
  write_text_file(paths.config(), to_json(cfg).dump(2) + "\n");
}

json data_section(const PreparedData& data) {
  json j;
  j["num_classes"] = data.distribution.num_classes();
  j["train_total"] = data.distribution.total();
  j["thresholds"] = data.split.thresholds;
  const auto names = subset_names(data.split.size());
  json subsets = json::array();
  for (std::size_t l = 0; l < data.split.size(); ++l)
    subsets.push_back({{"name", names[l]},
                       {"classes", data.split.subsets[l].classes},
                       {"avg_shot", data.split.subsets[l].avg_shot}});
  j["subsets"] = subsets;
  j["metrics"] = to_json(longtailness_comparison(data.distribution, data.split));
  return j;
}

json experts_section(const ExpertBundle& bundle) {
  const auto names = subset_names(bundle.split.size());
  json arr = json::array();
  for (std::size_t l = 0; l < bundle.experts.size(); ++l)
    arr.push_back({{"name", names[l]},
                   {"classes", bundle.experts[l].classes},
                   {"val_accuracy", bundle.experts[l].val_accuracy}});
  return arr;
}

}  // namespace

PreparedData prepare_data(const RunConfig& cfg, const std::filesystem::path& run_dir) {
  const RunPaths paths{run_dir};
  auto gen = generate(cfg.data);
  PreparedData data{std::move(gen.dataset), std::move(gen.distribution), {}};
  data.split = make_split(data.distribution, cfg.split);
  std::filesystem::create_directories(run_dir);
  write_config(paths, cfg);
  save_dataset(data.dataset, paths.dataset());
  save_manifest(data.distribution, paths.manifest());
  json report = read_report(paths);
  report["data"] = data_section(data);
  write_report(paths, cfg, std::move(report));
  return data;
}

ExpertBundle stage_experts(const RunConfig& cfg, const std::filesystem::path& run_dir) {
  const RunPaths paths{run_dir};
  const PreparedData data = prepare_data(cfg, run_dir);
  ExpertBundle bundle = train_experts(data.dataset, data.split, cfg.experts);
  std::filesystem::create_directories(paths.experts_dir());
  json index;
  index["thresholds"] = bundle.split.thresholds;
  index["experts"] = experts_section(bundle);
  for (std::size_t l = 0; l < bundle.experts.size(); ++l)
    save_checkpoint(bundle.experts[l].net, paths.expert_checkpoint(l));
  write_text_file(paths.experts_index(), index.dump(2) + "\n");
  json report = read_report(paths);
  report["experts"] = experts_section(bundle);
  write_report(paths, cfg, std::move(report));
  return bundle;
}

std::pair<Dataset, ExpertBundle> load_expert_stage(const std::filesystem::path& experts_run) {
  const RunPaths paths{experts_run};
  if (!std::filesystem::exists(paths.experts_index()) ||
      !std::filesystem::exists(paths.dataset()))
    throw StageError("missing expert artifacts in '" + experts_run.string() +
                     "': run train-experts first");
  Dataset ds = load_dataset(paths.dataset());
  json index;
  try {
    index = json::parse(read_text_file(paths.experts_index()));
  } catch (const json::parse_error& e) {
    throw StageError("corrupt expert index: " + std::string(e.what()));
  }
  std::vector<std::int64_t> thresholds = index.at("thresholds").get<std::vector<std::int64_t>>();
  CardinalitySplit split = split_by_thresholds(ds.train_distribution(), thresholds);
  std::vector<ExpertModel> experts;
  for (std::size_t l = 0; l < split.size(); ++l) {
    if (!std::filesystem::exists(paths.expert_checkpoint(l)))
      throw StageError("missing expert checkpoint " + paths.expert_checkpoint(l).string() +
                       ": run train-experts first");
    ExpertModel e;
    e.classes = split.subsets[l].classes;
    e.net = load_checkpoint(paths.expert_checkpoint(l));
    e.val_accuracy = expert_accuracy(e, ds, Partition::val);
    experts.push_back(std::move(e));
  }
  ExpertBundle bundle = assemble_bundle(ds, std::move(split), std::move(experts));
  return {std::move(ds), std::move(bundle)};
}

TrainResult stage_student(const RunConfig& cfg, const std::filesystem::path& run_dir,
                          const std::filesystem::path& experts_run) {
  auto [ds, bundle] = load_expert_stage(experts_run);
  const RunPaths paths{run_dir};
  std::filesystem::create_directories(run_dir);
  write_config(paths, cfg);
  TrainResult result = train_student(ds, bundle, cfg.student);
  save_checkpoint(result.net, paths.student_checkpoint());
  write_text_file(paths.trajectories(), trajectories_csv(result.report));
  json report = read_report(paths);
  report["experts"] = experts_section(bundle);
  report["student"] = to_json(result.report);
  write_report(paths, cfg, std::move(report));
  return result;
}

TrainResult stage_plain(const RunConfig& cfg, const std::filesystem::path& run_dir) {
  const RunPaths paths{run_dir};
  const PreparedData data = prepare_data(cfg, run_dir);
  TrainResult result = train_plain(data.dataset, data.split, cfg.plain);
  save_checkpoint(result.net, paths.plain_checkpoint());
  json report = read_report(paths);
  report["plain"] = to_json(result.report);
  write_report(paths, cfg, std::move(report));
  return result;
}

void run_experiment(const RunConfig& cfg, const std::filesystem::path& run_dir) {
  auto stage = [](const char* name, auto&& f) {
    try {
      f();
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string(name) + " stage failed: " + e.what());
    }
  };
  std::filesystem::remove(RunPaths{run_dir}.report());
  stage("experts", [&] { stage_experts(cfg, run_dir); });
  stage("student", [&] { stage_student(cfg, run_dir, run_dir); });
  stage("plain", [&] { stage_plain(cfg, run_dir); });
}

// ---------------------------------------------------------------------------
// Reports

std::vector<ReportRow> collect_report_rows(const std::vector<std::filesystem::path>& runs) {
  std::vector<ReportRow> rows;
  for (const auto& run : runs) {
    const RunPaths paths{run};
    if (!std::filesystem::exists(paths.report()))
      throw StageError("no report.json in '" + run.string() + "'");
    json report;
    try {
      report = json::parse(read_text_file(paths.report()));
    } catch (const json::parse_error& e) {
      throw StageError("malformed report.json in '" + run.string() + "': " + e.what());
    }
    bool any = false;
    for (const char* model : {"plain", "student"}) {
      if (!report.contains(model)) continue;
      try {
        const auto& m = report.at(model);
        const auto names = m.at("subsets").get<std::vector<std::string>>();
        const auto& test = m.at("final_test");
        ReportRow row;
        row.label = run.filename().string() + "/" + model;
        if (row.label.front() == '/') row.label = run.string() + "/" + model;
        for (std::size_t l = names.size(); l-- > 0;) {
          row.columns.push_back(names[l]);
          row.test_accuracy.push_back(test.at(names[l]).get<double>());
        }
        row.columns.push_back("all");
        row.test_accuracy.push_back(test.at("all").get<double>());
        rows.push_back(std::move(row));
        any = true;
      } catch (const json::exception& e) {
        throw StageError("malformed report.json in '" + run.string() + "': " + e.what());
      }
    }
    if (!any) throw StageError("report.json in '" + run.string() + "' has no trained models");
  }
  return rows;
}

std::string format_report_table(const std::vector<ReportRow>& rows, bool deltas) {
  if (rows.empty()) return "";
  std::size_t label_w = 5;
  for (const auto& r : rows) label_w = std::max(label_w, r.label.size());
  std::string out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(label_w), "model");
  out += buf;
  for (const auto& c : rows.front().columns) {
    std::snprintf(buf, sizeof buf, " %8s", c.c_str());
    out += buf;
  }
  if (deltas)
    for (const auto& c : rows.front().columns) {
      std::snprintf(buf, sizeof buf, " %9s", ("d_" + c).c_str());
      out += buf;
    }
  out += "\n";
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(label_w), r.label.c_str());
    out += buf;
    for (double a : r.test_accuracy) {
      std::snprintf(buf, sizeof buf, " %8.2f", 100.0 * a);
      out += buf;
    }
    if (deltas)
      for (std::size_t c = 0; c < r.test_accuracy.size(); ++c) {
        const double base = c < rows.front().test_accuracy.size() ? rows.front().test_accuracy[c] : 0.0;
        std::snprintf(buf, sizeof buf, " %+9.2f", 100.0 * (r.test_accuracy[c] - base));
        out += buf;
      }
    out += "\n";
  }
  return out;
}

std::string format_report_csv(const std::vector<ReportRow>& rows, bool deltas) {
  if (rows.empty()) return "";
  std::string out = "model";
  for (const auto& c : rows.front().columns) out += "," + c;
  if (deltas)
    for (const auto& c : rows.front().columns) out += ",d_" + c;
  out += "\n";
  char buf[64];
  for (const auto& r : rows) {
    out += r.label;
    for (double a : r.test_accuracy) {
      std::snprintf(buf, sizeof buf, ",%.6f", a);
      out += buf;
    }
    if (deltas)
      for (std::size_t c = 0; c < r.test_accuracy.size(); ++c) {
        std::snprintf(buf, sizeof buf, ",%.6f", r.test_accuracy[c] - rows.front().test_accuracy[c]);
        out += buf;
      }
    out += "\n";
  }
  return out;
}

}  // namespace lfme
