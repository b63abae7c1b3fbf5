// SPDX-License-Identifier: Apache-2.0
#include "lfme/sampling.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>
#include <string>

namespace lfme {

std::string_view sampler_mode_name(SamplerMode m) {
  return m == SamplerMode::instance_random ? "instance_random" : "class_balanced";
}

SamplerMode parse_sampler_mode(std::string_view s) {
  if (s == "instance" || s == "instance_random") return SamplerMode::instance_random;
  if (s == "class" || s == "class_balanced") return SamplerMode::class_balanced;
  throw std::invalid_argument("unknown sampler mode '" + std::string(s) + "'");
}

SamplerMode deferred_schedule(std::size_t switch_epoch, std::size_t epoch) {
  return epoch < switch_epoch ? SamplerMode::instance_random : SamplerMode::class_balanced;
}

BatchSampler::BatchSampler(std::vector<std::size_t> rows, std::vector<ClassId> labels,
                           std::size_t batch_size, std::uint64_t seed)
    : rows_(std::move(rows)), batch_size_(batch_size), rng_(seed) {
  if (rows_.empty()) throw std::invalid_argument("sampler needs at least one train instance");
  if (batch_size_ == 0) throw std::invalid_argument("batch_size must be at least 1");
  if (labels.size() != rows_.size())
    throw std::invalid_argument("one label per sampler row required");
  std::map<ClassId, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < rows_.size(); ++i) groups[labels[i]].push_back(rows_[i]);
  for (auto& [id, members] : groups) by_class_.push_back(std::move(members));
}

BatchSampler BatchSampler::for_train(const Dataset& ds, std::size_t batch_size,
                                     std::uint64_t seed) {
  std::vector<std::size_t> rows = ds.rows(Partition::train);
  std::vector<ClassId> labels;
  std::set<ClassId> train_classes;
  for (auto r : rows) {
    labels.push_back(ds.label(r));
    train_classes.insert(ds.label(r));
  }
  for (std::size_t r = 0; r < ds.size(); ++r)
    if (!train_classes.count(ds.label(r)))
      throw std::invalid_argument("class " + std::to_string(ds.label(r)) +
                                  " has no train instances");
  return BatchSampler(std::move(rows), std::move(labels), batch_size, seed);
}

std::size_t BatchSampler::default_epoch_len() const {
  return (rows_.size() + batch_size_ - 1) / batch_size_;
}

BatchList BatchSampler::instance_epoch() {
  std::vector<std::size_t> order = rows_;
  std::shuffle(order.begin(), order.end(), rng_);
  BatchList out;
  for (std::size_t start = 0; start < order.size(); start += batch_size_) {
    const std::size_t end = std::min(order.size(), start + batch_size_);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

BatchList BatchSampler::class_balanced_epoch(std::size_t epoch_len) {
  if (epoch_len == 0) epoch_len = default_epoch_len();
  std::uniform_int_distribution<std::size_t> pick_class(0, by_class_.size() - 1);
  BatchList out(epoch_len);
  for (auto& batch : out) {
    batch.reserve(batch_size_);
    for (std::size_t j = 0; j < batch_size_; ++j) {
      const auto& members = by_class_[pick_class(rng_)];
      std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
      batch.push_back(members[pick(rng_)]);
    }
  }
  return out;
}

BatchList BatchSampler::epoch(SamplerMode mode, std::size_t epoch_len) {
  return mode == SamplerMode::instance_random ? instance_epoch()
                                              : class_balanced_epoch(epoch_len);
}

BatchList instance_batches(const Dataset& ds, std::size_t batch_size, std::uint64_t seed) {
  return BatchSampler::for_train(ds, batch_size, seed).instance_epoch();
}

BatchList class_balanced_batches(const Dataset& ds, std::size_t batch_size,
                                 std::size_t epoch_len, std::uint64_t seed) {
  return BatchSampler::for_train(ds, batch_size, seed).class_balanced_epoch(epoch_len);
}

}  // namespace lfme
