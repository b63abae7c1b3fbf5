// SPDX-License-Identifier: Apache-2.0
#pragma once

// Seeded batch samplers over the train partition.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "lfme/distribution.hpp"

namespace lfme {

enum class SamplerMode { instance_random, class_balanced };

std::string_view sampler_mode_name(SamplerMode m);
/// Accepts "instance"/"instance_random" and "class"/"class_balanced".
SamplerMode parse_sampler_mode(std::string_view s);

/// Instance-random before `switch_epoch`, class-balanced at and after it.
/// Epochs are 1-based.
SamplerMode deferred_schedule(std::size_t switch_epoch, std::size_t epoch);

using BatchList = std::vector<std::vector<std::size_t>>;

/// Draws batches of row indices from a fixed pool of rows.
///
/// Instance-random epochs are a uniform shuffle of every row chunked into
/// batch_size pieces (the last may be short). Class-balanced epochs draw
/// each element by picking a class uniformly and then a row of that class
/// uniformly, with replacement; they contain epoch_len full batches.
/// The stream is a pure function of (seed, rows, labels, call sequence).
class BatchSampler {
 public:
  /// `rows` are dataset row indices; `labels[i]` is the class of rows[i].
  /// Throws std::invalid_argument for an empty pool or batch_size == 0.
  BatchSampler(std::vector<std::size_t> rows, std::vector<ClassId> labels,
               std::size_t batch_size, std::uint64_t seed);

  /// Train partition of `ds`.
  static BatchSampler for_train(const Dataset& ds, std::size_t batch_size,
                                std::uint64_t seed);

  BatchList instance_epoch();
  /// epoch_len == 0 means ceil(pool size / batch_size).
  BatchList class_balanced_epoch(std::size_t epoch_len = 0);
  BatchList epoch(SamplerMode mode, std::size_t epoch_len = 0);

  std::size_t pool_size() const { return rows_.size(); }
  std::size_t num_classes() const { return by_class_.size(); }
  std::size_t default_epoch_len() const;

 private:
  std::vector<std::size_t> rows_;
  std::vector<std::vector<std::size_t>> by_class_;
  std::size_t batch_size_;
  std::mt19937_64 rng_;
};

/// One-epoch convenience wrappers.
BatchList instance_batches(const Dataset& ds, std::size_t batch_size, std::uint64_t seed);
BatchList class_balanced_batches(const Dataset& ds, std::size_t batch_size,
                                 std::size_t epoch_len, std::uint64_t seed);

}  // namespace lfme
