// SPDX-License-Identifier: Apache-2.0
#pragma once

// Class-count distributions, labeled feature datasets, and the synthetic
// long-tailed generator.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lfme {

using ClassId = std::int64_t;

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ClassCount {
  ClassId class_id;
  std::int64_t count;
  bool operator==(const ClassCount&) const = default;
};

/// Per-class sample counts. Entries keep insertion order; ids are unique and
/// every count is at least one.
class ClassDistribution {
 public:
  ClassDistribution() = default;
  /// Throws ValidationError on an empty list, a duplicate id, or a count < 1.
  explicit ClassDistribution(std::vector<ClassCount> counts);

  std::span<const ClassCount> entries() const { return counts_; }
  std::size_t num_classes() const { return counts_.size(); }
  std::int64_t total() const { return total_; }
  bool contains(ClassId id) const;
  /// Throws std::out_of_range for unknown ids.
  std::int64_t count_of(ClassId id) const;
  std::vector<std::int64_t> counts() const;
  /// Class ids in ascending order; a model's output index i maps to ids()[i].
  std::vector<ClassId> sorted_ids() const;
  /// Restricts to the given ids (which must all be present).
  ClassDistribution subset(std::span<const ClassId> ids) const;

  bool operator==(const ClassDistribution&) const = default;

 private:
  std::vector<ClassCount> counts_;
  std::int64_t total_ = 0;
};

enum class Partition : std::uint8_t { train, val, test };

std::string_view partition_name(Partition p);
Partition parse_partition(std::string_view s);

/// Immutable labeled dataset; features are stored row-major.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::size_t dim) : dim_(dim) {}

  /// Throws ValidationError when the feature length differs from dim().
  void add(std::int64_t instance_id, Partition part, ClassId label,
           std::span<const double> features);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  std::int64_t id(std::size_t row) const { return ids_[row]; }
  Partition partition(std::size_t row) const { return parts_[row]; }
  ClassId label(std::size_t row) const { return labels_[row]; }
  std::span<const double> features(std::size_t row) const {
    return {features_.data() + row * dim_, dim_};
  }

  /// Row indices of one partition, in storage order.
  std::vector<std::size_t> rows(Partition p) const;
  /// Per-class counts of the train partition.
  ClassDistribution train_distribution() const;

  bool operator==(const Dataset&) const = default;

 private:
  std::size_t dim_ = 0;
  std::vector<std::int64_t> ids_;
  std::vector<Partition> parts_;
  std::vector<ClassId> labels_;
  std::vector<double> features_;
};

enum class Profile { exponential, pareto };

struct GeneratorSpec {
  std::size_t num_classes = 100;
  std::int64_t max_count = 500;
  std::int64_t min_count = 5;
  Profile profile = Profile::pareto;
  double pareto_power = 6.0;
  std::size_t feature_dim = 16;
  /// Dimension of the subspace holding the class means; 0 means feature_dim.
  std::size_t latent_dim = 0;
  double class_separation = 3.0;
  std::int64_t val_per_class = 20;
  std::int64_t test_per_class = 20;
  std::uint64_t seed = 0;
};

/// Throws std::invalid_argument for an inconsistent spec.
void validate(const GeneratorSpec& spec);

/// Train cardinality of every class, non-increasing in class index.
std::vector<std::int64_t> profile_counts(const GeneratorSpec& spec);

struct GeneratedData {
  Dataset dataset;
  ClassDistribution distribution;
};

/// Gaussian blobs (unit isotropic noise) around per-class means placed at
/// distance class_separation from the origin. Class c gets profile_counts[c]
/// train rows plus val_per_class/test_per_class balanced rows.
GeneratedData generate(const GeneratorSpec& spec);

/// `class_id,count` per line; optional `class_id,count` header line.
ClassDistribution parse_manifest(std::string_view text);
ClassDistribution load_manifest(const std::filesystem::path& path);
std::string format_manifest(const ClassDistribution& dist);
void save_manifest(const ClassDistribution& dist,
                   const std::filesystem::path& path);

std::string format_dataset(const Dataset& ds);
Dataset parse_dataset(std::string_view text);
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// Small file helpers shared by the IO code.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string format_double(double v);

}  // namespace lfme
