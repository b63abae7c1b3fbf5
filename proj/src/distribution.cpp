// SPDX-License-Identifier: Apache-2.0
#include "lfme/distribution.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_set>

namespace lfme {

// ---------------------------------------------------------------------------
// ClassDistribution

ClassDistribution::ClassDistribution(std::vector<ClassCount> counts)
    : counts_(std::move(counts)) {
  if (counts_.empty())
    throw ValidationError("class distribution must have at least one class");
  std::unordered_set<ClassId> seen;
  for (const auto& c : counts_) {
    if (c.count < 1)
      throw ValidationError("class " + std::to_string(c.class_id) +
                            " has non-positive count " +
                            std::to_string(c.count));
    if (!seen.insert(c.class_id).second)
      throw ValidationError("duplicate class id " + std::to_string(c.class_id));
    total_ += c.count;
  }
}

bool ClassDistribution::contains(ClassId id) const {
  return std::any_of(counts_.begin(), counts_.end(),
                     [id](const ClassCount& c) { return c.class_id == id; });
}

std::int64_t ClassDistribution::count_of(ClassId id) const {
  for (const auto& c : counts_)
    if (c.class_id == id) return c.count;
  throw std::out_of_range("unknown class id " + std::to_string(id));
}

std::vector<std::int64_t> ClassDistribution::counts() const {
  std::vector<std::int64_t> out;
  out.reserve(counts_.size());
  for (const auto& c : counts_) out.push_back(c.count);
  return out;
}

std::vector<ClassId> ClassDistribution::sorted_ids() const {
  std::vector<ClassId> ids;
  ids.reserve(counts_.size());
  for (const auto& c : counts_) ids.push_back(c.class_id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

ClassDistribution ClassDistribution::subset(std::span<const ClassId> ids) const {
  std::vector<ClassCount> out;
  out.reserve(ids.size());
  for (ClassId id : ids) out.push_back({id, count_of(id)});
  return ClassDistribution(std::move(out));
}

// ---------------------------------------------------------------------------
// Dataset

std::string_view partition_name(Partition p) {
  switch (p) {
    case Partition::train: return "train";
    case Partition::val: return "val";
    case Partition::test: return "test";
  }
  return "?";
}

Partition parse_partition(std::string_view s) {
  if (s == "train") return Partition::train;
  if (s == "val") return Partition::val;
  if (s == "test") return Partition::test;
  throw std::invalid_argument("unknown partition '" + std::string(s) + "'");
}

void Dataset::add(std::int64_t instance_id, Partition part, ClassId label,
                  std::span<const double> features) {
  if (features.size() != dim_)
    throw ValidationError("instance " + std::to_string(instance_id) + " has " +
                          std::to_string(features.size()) +
                          " features, expected " + std::to_string(dim_));
  ids_.push_back(instance_id);
  parts_.push_back(part);
  labels_.push_back(label);
  features_.insert(features_.end(), features.begin(), features.end());
}

std::vector<std::size_t> Dataset::rows(Partition p) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < parts_.size(); ++i)
    if (parts_[i] == p) out.push_back(i);
  return out;
}

ClassDistribution Dataset::train_distribution() const {
  std::vector<ClassCount> counts;
  for (std::size_t i = 0; i < size(); ++i) {
    if (parts_[i] != Partition::train) continue;
    auto it = std::find_if(counts.begin(), counts.end(), [&](const ClassCount& c) {
      return c.class_id == labels_[i];
    });
    if (it == counts.end())
      counts.push_back({labels_[i], 1});
    else
      ++it->count;
  }
  std::sort(counts.begin(), counts.end(),
            [](const ClassCount& a, const ClassCount& b) {
              return a.class_id < b.class_id;
            });
  return ClassDistribution(std::move(counts));
}

// ---------------------------------------------------------------------------
// Generator

void validate(const GeneratorSpec& spec) {
  if (spec.feature_dim < 1)
    throw std::invalid_argument("feature_dim must be at least 1");
  if (spec.num_classes < 2)
    throw std::invalid_argument("num_classes must be at least 2");
  if (spec.min_count < 1)
    throw std::invalid_argument("min_count must be at least 1");
  if (spec.min_count > spec.max_count)
    throw std::invalid_argument("min_count exceeds max_count");
  if (spec.latent_dim > spec.feature_dim)
    throw std::invalid_argument("latent_dim exceeds feature_dim");
  if (spec.profile == Profile::pareto && !(spec.pareto_power > 0.0))
    throw std::invalid_argument("pareto_power must be positive");
  if (!(spec.class_separation >= 0.0))
    throw std::invalid_argument("class_separation must be non-negative");
  if (spec.val_per_class < 0 || spec.test_per_class < 0)
    throw std::invalid_argument("val/test per-class counts must be >= 0");
}

std::vector<std::int64_t> profile_counts(const GeneratorSpec& spec) {
  validate(spec);
  const std::size_t c = spec.num_classes;
  const double hi = static_cast<double>(spec.max_count);
  const double lo = static_cast<double>(spec.min_count);
  std::vector<double> raw(c);
  for (std::size_t i = 0; i < c; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(c - 1);
    if (spec.profile == Profile::exponential) {
      raw[i] = hi * std::pow(lo / hi, t);
    } else {
      const double head = 1.0;
      const double tail = std::pow(static_cast<double>(c), -1.0 / spec.pareto_power);
      const double r = std::pow(static_cast<double>(i + 1), -1.0 / spec.pareto_power);
      raw[i] = lo + (hi - lo) * (r - tail) / (head - tail);
    }
  }
  std::vector<std::int64_t> out(c);
  for (std::size_t i = 0; i < c; ++i)
    out[i] = std::clamp<std::int64_t>(std::llround(raw[i]), spec.min_count,
                                      spec.max_count);
  return out;
}

namespace {

// Orthonormal k columns of a random d x k basis, stored as k vectors of length d.
std::vector<std::vector<double>> random_basis(std::size_t d, std::size_t k,
                                              std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> basis;
  while (basis.size() < k) {
    std::vector<double> v(d);
    for (auto& x : v) x = normal(rng);
    for (const auto& b : basis) {
      double proj = 0.0;
      for (std::size_t i = 0; i < d; ++i) proj += v[i] * b[i];
      for (std::size_t i = 0; i < d; ++i) v[i] -= proj * b[i];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-8) continue;
    for (auto& x : v) x /= norm;
    basis.push_back(std::move(v));
  }
  return basis;
}

}  // namespace

GeneratedData generate(const GeneratorSpec& spec) {
  const auto counts = profile_counts(spec);
  const std::size_t d = spec.feature_dim;
  const std::size_t k = spec.latent_dim == 0 ? d : spec.latent_dim;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<std::vector<double>> basis;
  if (k < d) basis = random_basis(d, k, rng);

  std::vector<std::vector<double>> means(spec.num_classes, std::vector<double>(d, 0.0));
  for (auto& mean : means) {
    std::vector<double> z(k);
    double norm = 0.0;
    do {
      norm = 0.0;
      for (auto& x : z) {
        x = normal(rng);
        norm += x * x;
      }
    } while (norm == 0.0);
    const double scale = spec.class_separation / std::sqrt(norm);
    if (basis.empty()) {
      for (std::size_t i = 0; i < d; ++i) mean[i] = z[i] * scale;
    } else {
      for (std::size_t j = 0; j < k; ++j)
        for (std::size_t i = 0; i < d; ++i) mean[i] += z[j] * scale * basis[j][i];
    }
  }

  Dataset ds(d);
  std::vector<double> x(d);
  std::int64_t next_id = 0;
  auto emit = [&](Partition part, std::size_t cls, std::int64_t n) {
    for (std::int64_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < d; ++i) x[i] = means[cls][i] + normal(rng);
      ds.add(next_id++, part, static_cast<ClassId>(cls), x);
    }
  };
  for (std::size_t c = 0; c < spec.num_classes; ++c) emit(Partition::train, c, counts[c]);
  for (std::size_t c = 0; c < spec.num_classes; ++c) emit(Partition::val, c, spec.val_per_class);
  for (std::size_t c = 0; c < spec.num_classes; ++c) emit(Partition::test, c, spec.test_per_class);

  std::vector<ClassCount> dist;
  for (std::size_t c = 0; c < spec.num_classes; ++c)
    dist.push_back({static_cast<ClassId>(c), counts[c]});
  return {std::move(ds), ClassDistribution(std::move(dist))};
}

// ---------------------------------------------------------------------------
// Text IO

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

// Splits into lines, tracking 1-based line numbers.
template <class F>
void for_each_line(std::string_view text, F&& f) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto pos = text.find('\n', start);
    if (pos == std::string_view::npos) pos = text.size();
    ++line_no;
    f(line_no, trim(text.substr(start, pos - start)));
    start = pos + 1;
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

ClassDistribution parse_manifest(std::string_view text) {
  std::vector<ClassCount> counts;
  std::unordered_set<ClassId> seen;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    if (line.empty()) return;
    if (line_no == 1 && line.substr(0, 3) == "\xEF\xBB\xBF") line.remove_prefix(3);
    const auto fields = split_fields(line);
    if (counts.empty() && seen.empty() && fields.size() == 2 &&
        fields[0] == "class_id" && fields[1] == "count")
      return;
    ClassCount c{};
    if (fields.size() != 2 || !parse_number(fields[0], c.class_id) ||
        !parse_number(fields[1], c.count))
      throw ParseError(line_no, "expected 'class_id,count', got '" +
                                    std::string(line) + "'");
    if (c.count < 1)
      throw ValidationError("line " + std::to_string(line_no) + ": class " +
                            std::to_string(c.class_id) +
                            " has non-positive count");
    if (!seen.insert(c.class_id).second)
      throw ValidationError("line " + std::to_string(line_no) +
                            ": duplicate class id " + std::to_string(c.class_id));
    counts.push_back(c);
  });
  return ClassDistribution(std::move(counts));
}

ClassDistribution load_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_text_file(path));
}

std::string format_manifest(const ClassDistribution& dist) {
  std::string out = "class_id,count\n";
  for (const auto& c : dist.entries())
    out += std::to_string(c.class_id) + "," + std::to_string(c.count) + "\n";
  return out;
}

void save_manifest(const ClassDistribution& dist,
                   const std::filesystem::path& path) {
  write_text_file(path, format_manifest(dist));
}

// Dataset file:
//   lfme-dataset v1 dim=<d> rows=<n>
//   instance_id,partition,label,f_0,...,f_{d-1}
//   <n records>
// Features use shortest round-trip decimal formatting.
namespace {
constexpr std::string_view kDatasetMagic = "lfme-dataset";
constexpr std::string_view kDatasetVersion = "v1";
}  // namespace

std::string format_dataset(const Dataset& ds) {
  std::string out;
  out.reserve(ds.size() * (ds.dim() * 22 + 24) + 64);
  out += std::string(kDatasetMagic) + " " + std::string(kDatasetVersion) +
         " dim=" + std::to_string(ds.dim()) + " rows=" + std::to_string(ds.size()) +
         "\n";
  out += "instance_id,partition,label";
  for (std::size_t i = 0; i < ds.dim(); ++i) out += ",f_" + std::to_string(i);
  out += "\n";
  for (std::size_t r = 0; r < ds.size(); ++r) {
    out += std::to_string(ds.id(r));
    out += ',';
    out += partition_name(ds.partition(r));
    out += ',';
    out += std::to_string(ds.label(r));
    for (double f : ds.features(r)) {
      out += ',';
      out += format_double(f);
    }
    out += '\n';
  }
  return out;
}

Dataset parse_dataset(std::string_view text) {
  std::size_t dim = 0;
  std::size_t expected_rows = 0;
  bool have_header = false;
  Dataset ds;
  std::vector<double> feats;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    if (line.empty()) return;
    if (!have_header) {
      std::istringstream hs{std::string(line)};
      std::string magic, version, dim_tok, rows_tok;
      hs >> magic >> version >> dim_tok >> rows_tok;
      if (magic != kDatasetMagic)
        throw FormatError("not an lfme dataset file (line " +
                          std::to_string(line_no) + ")");
      if (version != kDatasetVersion)
        throw FormatError("unsupported dataset version '" + version + "'");
      if (dim_tok.rfind("dim=", 0) != 0 || rows_tok.rfind("rows=", 0) != 0 ||
          !parse_number(std::string_view(dim_tok).substr(4), dim) ||
          !parse_number(std::string_view(rows_tok).substr(5), expected_rows) ||
          dim == 0)
        throw FormatError("malformed dataset header");
      ds = Dataset(dim);
      feats.resize(dim);
      have_header = true;
      return;
    }
    if (line.rfind("instance_id,", 0) == 0) return;
    const auto fields = split_fields(line);
    if (fields.size() != dim + 3)
      throw ValidationError("line " + std::to_string(line_no) + ": expected " +
                            std::to_string(dim) + " features, got " +
                            std::to_string(fields.size() < 3 ? 0 : fields.size() - 3));
    std::int64_t id = 0;
    ClassId label = 0;
    if (!parse_number(fields[0], id) || !parse_number(fields[2], label))
      throw ParseError(line_no, "bad instance id or label");
    Partition part;
    try {
      part = parse_partition(fields[1]);
    } catch (const std::invalid_argument& e) {
      throw ParseError(line_no, e.what());
    }
    for (std::size_t i = 0; i < dim; ++i)
      if (!parse_number(fields[3 + i], feats[i]))
        throw ParseError(line_no, "bad feature value '" +
                                      std::string(fields[3 + i]) + "'");
    ds.add(id, part, label, feats);
  });
  if (!have_header) throw FormatError("empty dataset file");
  if (ds.size() != expected_rows)
    throw FormatError("truncated dataset: header declares " +
                      std::to_string(expected_rows) + " rows, found " +
                      std::to_string(ds.size()));
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  write_text_file(path, format_dataset(ds));
}

Dataset load_dataset(const std::filesystem::path& path) {
  return parse_dataset(read_text_file(path));
}

}  // namespace lfme
