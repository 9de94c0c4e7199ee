// SPDX-License-Identifier: Apache-2.0
#include "elf/data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "elf/error.hpp"

namespace elf {

namespace {

constexpr std::uint32_t kDatasetVersion = 1;

}  // namespace

LongTailedDataset::LongTailedDataset(std::size_t classes, InputDims dims)
    : dims_(dims), counts_(classes, 0) {
  if (dims.size() == 0) throw ConfigError("dataset input dimensions must be positive");
}

void LongTailedDataset::add(std::span<const float> features, std::uint32_t label) {
  if (features.size() != dims_.size()) {
    throw DimensionError("example has " + std::to_string(features.size()) +
                         " features, dataset expects " + shape_str(dims_.shape()));
  }
  if (label >= counts_.size()) {
    throw ConfigError("label " + std::to_string(label) + " out of range for " +
                      std::to_string(counts_.size()) + " classes");
  }
  labels_.push_back(label);
  features_.insert(features_.end(), features.begin(), features.end());
  ++counts_[label];
}

void LongTailedDataset::reserve(std::size_t n) {
  labels_.reserve(n);
  features_.reserve(n * dims_.size());
}

std::span<const float> LongTailedDataset::features(std::size_t i) const {
  return std::span<const float>(features_).subspan(i * dims_.size(), dims_.size());
}

Tensor LongTailedDataset::example(std::size_t i) const {
  const std::size_t idx[] = {i};
  return batch(idx);
}

Tensor LongTailedDataset::batch(std::span<const std::size_t> indices) const {
  Shape shape{indices.size(), dims_.channels, dims_.height, dims_.width};
  Tensor out(shape);
  const std::size_t d = dims_.size();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    auto src = features(indices[b]);
    std::copy(src.begin(), src.end(), out.ptr() + b * d);
  }
  return out;
}

std::vector<std::size_t> LongTailedDataset::class_order() const {
  std::vector<std::size_t> order(counts_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return counts_[a] > counts_[b]; });
  return order;
}

double LongTailedDataset::imbalance_ratio() const {
  if (counts_.empty()) return 1.0;
  const auto [mn, mx] = std::minmax_element(counts_.begin(), counts_.end());
  if (*mn == 0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(*mx) / static_cast<double>(*mn);
}

bool LongTailedDataset::balanced() const {
  return std::adjacent_find(counts_.begin(), counts_.end(), std::not_equal_to<>()) == counts_.end();
}

std::vector<std::size_t> longtail_counts(std::size_t n, std::size_t classes, double ratio) {
  if (classes == 0) throw ConfigError("longtail: need at least one class");
  if (!(ratio >= 1.0) || !std::isfinite(ratio)) {
    throw ConfigError("longtail: imbalance ratio must be a finite value >= 1");
  }
  const double mu = classes == 1 ? 1.0 : std::pow(ratio, -1.0 / static_cast<double>(classes - 1));
  std::vector<std::size_t> counts(classes);
  for (std::size_t j = 0; j < classes; ++j) {
    const double v = static_cast<double>(n) * std::pow(mu, static_cast<double>(j));
    // Truncation, with a relative guard so that n/ratio evaluated as 49.999...
    // still yields 50.
    counts[j] = static_cast<std::size_t>(std::floor(v + 1e-9 * std::max(1.0, v)));
    if (counts[j] == 0) {
      throw ConfigError("longtail: class " + std::to_string(j) + " would keep 0 of " +
                        std::to_string(n) +
                        " examples; use a larger per-class count or a smaller imbalance ratio");
    }
  }
  return counts;
}

LongTailedDataset make_longtail(const LongTailedDataset& source, double ratio, std::uint64_t seed) {
  if (!source.balanced()) throw ConfigError("longtail: source dataset must be class-balanced");
  const std::size_t c = source.classes();
  const std::size_t n = c == 0 ? 0 : source.class_counts()[0];
  const auto counts = longtail_counts(n, c, ratio);

  std::vector<std::vector<std::size_t>> by_class(c);
  for (std::size_t i = 0; i < source.size(); ++i) by_class[source.label(i)].push_back(i);

  std::mt19937_64 rng(seed);
  LongTailedDataset out(c, source.dims());
  out.reserve(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
  for (std::size_t j = 0; j < c; ++j) {
    auto& pool = by_class[j];
    // Partial Fisher-Yates: the first counts[j] slots become a uniform sample.
    for (std::size_t i = 0; i < counts[j]; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    std::sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(counts[j]));
    for (std::size_t i = 0; i < counts[j]; ++i) {
      out.add(source.features(pool[i]), static_cast<std::uint32_t>(j));
    }
  }
  return out;
}

std::vector<std::vector<double>> draw_class_means(const GaussianTask& task) {
  if (task.classes == 0) throw ConfigError("synth: need at least one class");
  const std::size_t d = task.dims.size();
  const double min_dist = 4.0 * task.noise_sigma;
  std::mt19937_64 rng(task.mean_seed);
  std::normal_distribution<double> normal(0.0, task.mean_scale);

  std::vector<std::vector<double>> means;
  means.reserve(task.classes);
  for (std::size_t j = 0; j < task.classes; ++j) {
    bool placed = false;
    std::vector<double> cand(d);
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      for (auto& v : cand) v = normal(rng);
      placed = std::all_of(means.begin(), means.end(), [&](const std::vector<double>& m) {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) s += (m[i] - cand[i]) * (m[i] - cand[i]);
        return std::sqrt(s) >= min_dist;
      });
    }
    if (!placed) {
      throw ConfigError("synth: cannot place " + std::to_string(task.classes) +
                        " class means 4 sigma apart; lower noise_sigma or use fewer classes");
    }
    means.push_back(cand);
  }
  return means;
}

LongTailedDataset synth_gaussian(const GaussianTask& task, std::span<const std::size_t> counts,
                                 std::uint64_t seed) {
  if (counts.size() != task.classes) {
    throw ConfigError("synth: " + std::to_string(counts.size()) + " counts given for " +
                      std::to_string(task.classes) + " classes");
  }
  const auto means = draw_class_means(task);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  LongTailedDataset ds(task.classes, task.dims);
  ds.reserve(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
  std::vector<float> x(task.dims.size());
  for (std::size_t j = 0; j < task.classes; ++j) {
    for (std::size_t i = 0; i < counts[j]; ++i) {
      for (std::size_t e = 0; e < x.size(); ++e) {
        x[e] = static_cast<float>(means[j][e] + task.noise_sigma * noise(rng));
      }
      ds.add(x, static_cast<std::uint32_t>(j));
    }
  }
  return ds;
}

const char* split_name(Split s) {
  switch (s) {
    case Split::many: return "many";
    case Split::medium: return "medium";
    case Split::few: return "few";
  }
  return "?";
}

std::vector<std::size_t> SplitAssignment::classes_in(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < tags.size(); ++j) {
    if (tags[j] == s) out.push_back(j);
  }
  return out;
}

SplitAssignment split_classes(std::span<const std::size_t> counts, SplitThresholds thresholds) {
  SplitAssignment a;
  a.thresholds = thresholds;
  a.tags.reserve(counts.size());
  for (auto n : counts) {
    a.tags.push_back(n > thresholds.many_min ? Split::many
                     : n < thresholds.few_max ? Split::few
                                              : Split::medium);
  }
  return a;
}

SplitAssignment split_classes(const LongTailedDataset& ds, SplitThresholds thresholds) {
  return split_classes(ds.class_counts(), thresholds);
}

std::vector<std::uint8_t> encode_dataset(const LongTailedDataset& ds) {
  io::ByteWriter w;
  w.magic("ELFD");
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(ds.classes()));
  w.u32(ds.dims().channels);
  w.u32(ds.dims().height);
  w.u32(ds.dims().width);
  w.u32(static_cast<std::uint32_t>(ds.size()));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    w.u32(ds.label(i));
    auto f = ds.features(i);
    w.raw(f.data(), f.size() * sizeof(float));
  }
  return w.bytes();
}

LongTailedDataset decode_dataset(const std::vector<std::uint8_t>& bytes) {
  io::ByteReader r(bytes);
  r.expect_magic("ELFD");
  const auto version_at = r.offset();
  if (r.u32("version") != kDatasetVersion) throw FormatError("unsupported ELFD version", version_at);
  const auto classes_at = r.offset();
  const std::uint32_t classes = r.u32("class count");
  InputDims dims;
  dims.channels = r.u32("channels");
  dims.height = r.u32("height");
  dims.width = r.u32("width");
  if (classes == 0) throw FormatError("class count must be positive", classes_at);
  if (dims.size() == 0) throw FormatError("input dimensions must be positive", classes_at + 4);
  const std::uint32_t n = r.u32("example count");

  LongTailedDataset ds(classes, dims);
  ds.reserve(n);
  std::vector<float> x(dims.size());
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto label_at = r.offset();
    const std::uint32_t label = r.u32("label");
    if (label >= classes) {
      throw FormatError("label " + std::to_string(label) + " out of range", label_at);
    }
    r.raw(x.data(), x.size() * sizeof(float), "example payload");
    ds.add(x, label);
  }
  r.expect_end();
  return ds;
}

void save_dataset(const LongTailedDataset& ds, const std::string& path) {
  io::write_file(path, encode_dataset(ds));
}

LongTailedDataset load_dataset(const std::string& path) { return decode_dataset(io::read_file(path)); }

}  // namespace elf
