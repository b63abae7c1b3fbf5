// SPDX-License-Identifier: Apache-2.0
#include "lfme/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace lfme {

void validate(const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw std::invalid_argument("epochs must be at least 1");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (!(cfg.lr_factor > 0.0)) throw std::invalid_argument("lr_factor must be positive");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0))
    throw std::invalid_argument("momentum must lie in [0, 1)");
  if (!(cfg.weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be >= 0");
  if (!(cfg.temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (!(cfg.alpha > 0.0 && cfg.alpha <= 1.0))
    throw std::invalid_argument("alpha must lie in (0, 1]");
  if (cfg.fixed_expert_weight &&
      !(*cfg.fixed_expert_weight >= 0.0 && *cfg.fixed_expert_weight <= 1.0))
    throw std::invalid_argument("fixed_expert_weight must lie in [0, 1]");
  for (auto h : cfg.hidden)
    if (h == 0) throw std::invalid_argument("hidden layer sizes must be positive");
}

double learning_rate_at(const TrainConfig& cfg, std::size_t epoch) {
  double lr = cfg.lr;
  for (auto m : cfg.lr_milestones)
    if (epoch > m) lr *= cfg.lr_factor;
  return lr;
}

SamplerMode sampler_mode_at(const TrainConfig& cfg, std::size_t epoch) {
  if (cfg.deferred_switch_epoch) return deferred_schedule(*cfg.deferred_switch_epoch, epoch);
  return cfg.sampler;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<ClassId> student_classes(const CardinalitySplit& split) {
  std::vector<ClassId> ids;
  for (const auto& s : split.subsets) ids.insert(ids.end(), s.classes.begin(), s.classes.end());
  std::sort(ids.begin(), ids.end());
  return ids;
}

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kSamplerStream = 2;
constexpr std::uint64_t kExpertStreamBase = 100;

std::size_t index_of(const std::vector<ClassId>& sorted, ClassId id) {
  auto it = std::lower_bound(sorted.begin(), sorted.end(), id);
  if (it == sorted.end() || *it != id)
    throw std::out_of_range("class " + std::to_string(id) + " not modeled");
  return static_cast<std::size_t>(it - sorted.begin());
}

std::vector<std::size_t> with_output(std::vector<std::size_t> dims,
                                     const std::vector<std::size_t>& hidden,
                                     std::size_t out) {
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  return dims;
}

// Training pool: rows plus their output-space targets.
struct Pool {
  std::vector<std::size_t> rows;
  std::vector<std::size_t> targets;
  std::vector<ClassId> labels;
};

// Optional distillation and curriculum state for the student.
struct StudentTerms {
  // Expert logits for every pool position, [expert][pos * m + j].
  std::vector<std::vector<double>> cached_logits;
  std::vector<std::vector<std::size_t>> slices;
  ExpertSelector selector;
  InstanceCurriculum curriculum;
  // Subset index of every pool position.
  std::vector<std::size_t> subset_of_pos;
};

struct EpochStats {
  double total = 0.0;
  double ce = 0.0;
  std::vector<double> kd;
  std::vector<double> mean_v;
};

template <class Hook>
DenseNet fit(const Dataset& ds, const Pool& pool, std::size_t out_dim,
             const TrainConfig& cfg, StudentTerms* terms, std::size_t num_subsets,
             Hook&& on_epoch_end) {
  validate(cfg);
  DenseNet net = DenseNet::initialized(with_output({ds.dim()}, cfg.hidden, out_dim),
                                       derive_seed(cfg.seed, kInitStream));
  BatchSampler sampler(pool.rows, pool.labels, cfg.batch_size,
                       derive_seed(cfg.seed, kSamplerStream));

  std::vector<std::size_t> pos_of_row(ds.size(), std::numeric_limits<std::size_t>::max());
  for (std::size_t p = 0; p < pool.rows.size(); ++p) pos_of_row[pool.rows[p]] = p;

  const std::size_t d = ds.dim();
  const std::size_t num_experts = terms ? terms->slices.size() : 0;
  const LossConfig loss_cfg{cfg.temperature, cfg.kd_t2_scaling};
  GradientSet grads = zeros_like(net);
  SgdState opt;
  std::vector<double> feats;
  std::vector<std::size_t> targets;
  std::vector<double> v_batch;
  std::vector<std::vector<double>> teacher(num_experts);
  std::vector<ExpertTargets> expert_targets(num_experts);
  std::vector<double> expert_w;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const SgdParams sgd{learning_rate_at(cfg, epoch), cfg.momentum, cfg.weight_decay};
    const SamplerMode mode = sampler_mode_at(cfg, epoch);
    const std::vector<double> v = terms ? terms->curriculum.weights_at(epoch)
                                        : std::vector<double>(pool.rows.size(), 1.0);
    if (terms) {
      const auto w = terms->selector.weights();
      expert_w.assign(w.begin(), w.end());
    }

    EpochStats stats;
    stats.kd.assign(num_experts, 0.0);
    const BatchList batches = sampler.epoch(mode, cfg.epoch_len);
    for (const auto& batch : batches) {
      const std::size_t b = batch.size();
      feats.resize(b * d);
      targets.resize(b);
      v_batch.resize(b);
      for (std::size_t i = 0; i < b; ++i) {
        const std::size_t row = batch[i];
        const std::size_t pos = pos_of_row[row];
        const auto x = ds.features(row);
        std::copy(x.begin(), x.end(), feats.begin() + static_cast<std::ptrdiff_t>(i * d));
        targets[i] = pool.targets[pos];
        v_batch[i] = v[pos];
      }
      for (std::size_t e = 0; e < num_experts; ++e) {
        const std::size_t m = terms->slices[e].size();
        teacher[e].resize(b * m);
        const auto& cache = terms->cached_logits[e];
        for (std::size_t i = 0; i < b; ++i) {
          const std::size_t pos = pos_of_row[batch[i]];
          std::copy_n(cache.begin() + static_cast<std::ptrdiff_t>(pos * m), m,
                      teacher[e].begin() + static_cast<std::ptrdiff_t>(i * m));
        }
        expert_targets[e] = {terms->slices[e], teacher[e]};
      }
      const Batch bt{feats, targets, v_batch};
      const auto loss = loss_and_gradients(net, bt, expert_targets, expert_w, loss_cfg, grads);
      sgd_step(net, grads, sgd, opt);
      stats.total += loss.total;
      stats.ce += loss.weighted_ce;
      for (std::size_t e = 0; e < num_experts; ++e) stats.kd[e] += loss.kd_per_expert[e];
    }
    const double nb = static_cast<double>(std::max<std::size_t>(1, batches.size()));
    stats.total /= nb;
    stats.ce /= nb;
    for (auto& k : stats.kd) k /= nb;

    stats.mean_v.assign(num_subsets, 0.0);
    if (terms) {
      std::vector<std::size_t> n(num_subsets, 0);
      for (std::size_t p = 0; p < v.size(); ++p) {
        stats.mean_v[terms->subset_of_pos[p]] += v[p];
        ++n[terms->subset_of_pos[p]];
      }
      for (std::size_t l = 0; l < num_subsets; ++l)
        if (n[l]) stats.mean_v[l] /= static_cast<double>(n[l]);
    } else {
      std::fill(stats.mean_v.begin(), stats.mean_v.end(), 1.0);
    }
    on_epoch_end(epoch, sgd.lr, mode, net, stats);
  }
  return net;
}

Pool student_pool(const Dataset& ds, const std::vector<ClassId>& classes) {
  Pool pool;
  pool.rows = ds.rows(Partition::train);
  for (auto r : pool.rows) {
    pool.labels.push_back(ds.label(r));
    pool.targets.push_back(index_of(classes, ds.label(r)));
  }
  if (pool.rows.empty()) throw std::invalid_argument("dataset has no train rows");
  return pool;
}

// Every subset needs val rows for the expert-weight updates, and every
// evaluated label must belong to the split.
void check_eval_coverage(const Dataset& ds, const CardinalitySplit& split) {
  std::vector<std::size_t> n(split.size(), 0);
  for (auto r : ds.rows(Partition::val)) ++n[split.subset_of(ds.label(r))];
  for (auto r : ds.rows(Partition::test)) (void)split.subset_of(ds.label(r));
  for (std::size_t l = 0; l < split.size(); ++l)
    if (n[l] == 0)
      throw std::invalid_argument("subset " + std::to_string(l) + " has no val rows");
}

TrainReport make_report(std::string model, const CardinalitySplit& split) {
  TrainReport rep;
  rep.model = std::move(model);
  rep.subset_names = subset_names(split.size());
  return rep;
}

}  // namespace

// ---------------------------------------------------------------------------

ExpertModel train_expert(const Dataset& ds, const CardinalitySplit& split,
                         std::size_t subset, const TrainConfig& cfg) {
  if (subset >= split.size()) throw std::invalid_argument("subset index out of range");
  ExpertModel expert;
  expert.classes = split.subsets[subset].classes;
  if (expert.classes.empty()) throw std::invalid_argument("cannot train an expert on an empty subset");

  Pool pool;
  for (auto r : ds.rows(Partition::train)) {
    const ClassId y = ds.label(r);
    if (!std::binary_search(expert.classes.begin(), expert.classes.end(), y)) continue;
    pool.rows.push_back(r);
    pool.labels.push_back(y);
    pool.targets.push_back(index_of(expert.classes, y));
  }
  if (pool.rows.empty())
    throw std::invalid_argument("subset " + std::to_string(subset) + " has no train rows");

  expert.net = fit(ds, pool, expert.classes.size(), cfg, nullptr, 0,
                   [](std::size_t, double, SamplerMode, const DenseNet&, const EpochStats&) {});
  expert.val_accuracy = expert_accuracy(expert, ds, Partition::val);
  return expert;
}

ExpertBundle train_experts(const Dataset& ds, const CardinalitySplit& split,
                           const TrainConfig& cfg) {
  std::vector<ExpertModel> experts;
  for (std::size_t l = 0; l < split.size(); ++l) {
    TrainConfig sub = cfg;
    sub.seed = derive_seed(cfg.seed, kExpertStreamBase + l);
    experts.push_back(train_expert(ds, split, l, sub));
  }
  return assemble_bundle(ds, split, std::move(experts));
}

ExpertBundle assemble_bundle(const Dataset& ds, CardinalitySplit split,
                             std::vector<ExpertModel> experts) {
  if (experts.size() != split.size())
    throw std::invalid_argument("one expert per subset required");
  for (std::size_t l = 0; l < experts.size(); ++l)
    if (experts[l].classes != split.subsets[l].classes)
      throw std::invalid_argument("expert " + std::to_string(l) +
                                  " was trained on a different split");
  ExpertBundle bundle;
  bundle.split = std::move(split);
  bundle.experts = std::move(experts);
  bundle.train_rows = ds.rows(Partition::train);
  std::vector<DenseNet> nets;
  for (const auto& e : bundle.experts) nets.push_back(e.net);
  bundle.confidences = compute_confidences(nets, bundle.split, ds, bundle.train_rows);
  return bundle;
}

TrainResult train_plain(const Dataset& ds, const CardinalitySplit& split,
                        const TrainConfig& cfg) {
  check_eval_coverage(ds, split);
  const auto classes = student_classes(split);
  const Pool pool = student_pool(ds, classes);
  TrainReport rep = make_report("plain", split);
  auto hook = [&](std::size_t epoch, double lr, SamplerMode mode, const DenseNet& net,
                  const EpochStats& stats) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.sampler = mode;
    rec.loss_total = stats.total;
    rec.loss_ce = stats.ce;
    rec.mean_instance_weight = stats.mean_v;
    rec.val = evaluate(net, ds, split, Partition::val);
    rep.epochs.push_back(std::move(rec));
  };
  TrainResult out;
  out.net = fit(ds, pool, classes.size(), cfg, nullptr, split.size(), hook);
  out.report = std::move(rep);
  out.report.final_val = evaluate(out.net, ds, split, Partition::val);
  out.report.final_test = evaluate(out.net, ds, split, Partition::test);
  return out;
}

TrainResult train_student(const Dataset& ds, const ExpertBundle& bundle,
                          const TrainConfig& cfg) {
  const auto& split = bundle.split;
  if (bundle.experts.size() != split.size())
    throw std::invalid_argument("expert bundle does not match its split");
  check_eval_coverage(ds, split);
  const auto classes = student_classes(split);
  const Pool pool = student_pool(ds, classes);
  if (bundle.train_rows != pool.rows || bundle.confidences.size() != pool.rows.size())
    throw std::invalid_argument("expert bundle was built for a different dataset");

  std::vector<double> expert_acc;
  for (const auto& e : bundle.experts) expert_acc.push_back(e.val_accuracy);

  InstanceCurriculum curriculum =
      cfg.uniform_instance_weight
          ? InstanceCurriculum::uniform(pool.rows.size(), cfg.epochs)
          : InstanceCurriculum(initial_instance_weights(bundle.confidences, split, ds, pool.rows),
                               cfg.schedule, cfg.epochs);
  StudentTerms terms{{}, {}, ExpertSelector(expert_acc, cfg.alpha, cfg.fixed_expert_weight),
                     std::move(curriculum), {}};
  for (std::size_t l = 0; l < split.size(); ++l) {
    const auto& ex = bundle.experts[l];
    std::vector<std::size_t> slice;
    for (ClassId id : ex.classes) slice.push_back(index_of(classes, id));
    const std::size_t m = slice.size();
    if (ex.net.output_dim() != m || ex.net.input_dim() != ds.dim())
      throw std::invalid_argument("expert " + std::to_string(l) + " has the wrong shape");
    // Experts are frozen, so their logits are computed once per row.
    std::vector<double> cache(pool.rows.size() * m);
    for (std::size_t p = 0; p < pool.rows.size(); ++p) {
      const auto z = ex.net.forward(ds.features(pool.rows[p]));
      std::copy(z.begin(), z.end(), cache.begin() + static_cast<std::ptrdiff_t>(p * m));
    }
    terms.slices.push_back(std::move(slice));
    terms.cached_logits.push_back(std::move(cache));
  }
  for (auto r : pool.rows) terms.subset_of_pos.push_back(split.subset_of(ds.label(r)));

  TrainReport rep = make_report("student", split);
  auto hook = [&](std::size_t epoch, double lr, SamplerMode mode, const DenseNet& net,
                  const EpochStats& stats) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.sampler = mode;
    rec.loss_total = stats.total;
    rec.loss_ce = stats.ce;
    rec.loss_kd = stats.kd;
    rec.mean_instance_weight = stats.mean_v;
    rec.val = evaluate(net, ds, split, Partition::val);
    terms.selector.update(rec.val.subset);
    const auto w = terms.selector.weights();
    rec.expert_weights.assign(w.begin(), w.end());
    rep.epochs.push_back(std::move(rec));
  };
  TrainResult out;
  out.net = fit(ds, pool, classes.size(), cfg, &terms, split.size(), hook);
  out.report = std::move(rep);
  out.report.final_val = evaluate(out.net, ds, split, Partition::val);
  out.report.final_test = evaluate(out.net, ds, split, Partition::test);
  return out;
}

// ---------------------------------------------------------------------------

SplitAccuracy evaluate(const DenseNet& student, const Dataset& ds,
                       const CardinalitySplit& split, Partition part) {
  const auto classes = student_classes(split);
  if (student.output_dim() != classes.size())
    throw std::invalid_argument("student has " + std::to_string(student.output_dim()) +
                                " outputs for " + std::to_string(classes.size()) + " classes");
  SplitAccuracy acc;
  acc.subset.assign(split.size(), 0.0);
  acc.counts.assign(split.size(), 0);
  std::vector<std::size_t> correct(split.size(), 0);
  for (auto r : ds.rows(part)) {
    const ClassId y = ds.label(r);
    const std::size_t l = split.subset_of(y);
    ++acc.counts[l];
    if (classes[student.predict(ds.features(r))] == y) ++correct[l];
  }
  std::size_t hits = 0;
  for (std::size_t l = 0; l < split.size(); ++l) {
    acc.total += acc.counts[l];
    hits += correct[l];
    if (acc.counts[l])
      acc.subset[l] = static_cast<double>(correct[l]) / static_cast<double>(acc.counts[l]);
  }
  if (acc.total) acc.all = static_cast<double>(hits) / static_cast<double>(acc.total);
  return acc;
}

double student_subset_accuracy(const DenseNet& student, const Dataset& ds,
                               const CardinalitySplit& split, std::size_t subset) {
  const auto acc = evaluate(student, ds, split, Partition::val);
  if (subset >= acc.counts.size()) throw std::invalid_argument("subset index out of range");
  if (acc.counts[subset] == 0)
    throw std::invalid_argument("subset " + std::to_string(subset) + " has no val rows");
  return acc.subset[subset];
}

double expert_accuracy(const ExpertModel& expert, const Dataset& ds, Partition part) {
  std::size_t n = 0;
  std::size_t hits = 0;
  for (auto r : ds.rows(part)) {
    const ClassId y = ds.label(r);
    if (!std::binary_search(expert.classes.begin(), expert.classes.end(), y)) continue;
    ++n;
    if (expert.classes[expert.net.predict(ds.features(r))] == y) ++hits;
  }
  if (n == 0)
    throw std::invalid_argument("no " + std::string(partition_name(part)) +
                                " rows for the expert's classes");
  return static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace lfme
