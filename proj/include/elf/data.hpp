// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "elf/tensor.hpp"

namespace elf {

struct InputDims {
  std::uint32_t channels = 1;
  std::uint32_t height = 1;
  std::uint32_t width = 1;

  std::size_t size() const { return std::size_t{channels} * height * width; }
  Shape shape() const { return {channels, height, width}; }
  friend bool operator==(const InputDims&, const InputDims&) = default;
};

/// Labelled examples with per-class counts. Features are stored as 32-bit
/// floats, which is also the on-disk precision, so save/load is lossless.
class LongTailedDataset {
 public:
  LongTailedDataset() = default;
  LongTailedDataset(std::size_t classes, InputDims dims);

  void add(std::span<const float> features, std::uint32_t label);
  void reserve(std::size_t n);

  std::size_t size() const { return labels_.size(); }
  std::size_t classes() const { return counts_.size(); }
  const InputDims& dims() const { return dims_; }

  std::uint32_t label(std::size_t i) const { return labels_[i]; }
  const std::vector<std::uint32_t>& labels() const { return labels_; }
  std::span<const float> features(std::size_t i) const;

  /// One example as a [1 x C x H x W] tensor.
  Tensor example(std::size_t i) const;
  /// The listed examples stacked into a [batch x C x H x W] tensor.
  Tensor batch(std::span<const std::size_t> indices) const;

  /// n_j per class index j.
  const std::vector<std::size_t>& class_counts() const { return counts_; }
  /// Class indices sorted by descending count (ties by index).
  std::vector<std::size_t> class_order() const;
  /// n_max / n_min over all classes; infinite when some class is empty.
  double imbalance_ratio() const;
  bool balanced() const;

  friend bool operator==(const LongTailedDataset&, const LongTailedDataset&) = default;

 private:
  InputDims dims_;
  std::vector<std::size_t> counts_;
  std::vector<std::uint32_t> labels_;
  std::vector<float> features_;
};

/// Per-class counts floor(n * mu^j), j = 0..c-1, with mu = ratio^(-1/(c-1)).
/// Throws ConfigError when a count would be zero or ratio < 1.
std::vector<std::size_t> longtail_counts(std::size_t n, std::size_t classes, double ratio);

/// Exponentially subsample a balanced dataset: class j keeps
/// longtail_counts(n, c, ratio)[j] examples drawn uniformly without replacement.
LongTailedDataset make_longtail(const LongTailedDataset& source, double ratio, std::uint64_t seed);

/// Gaussian class-conditional task: example = mean_j + N(0, sigma^2) per element.
struct GaussianTask {
  std::size_t classes = 10;
  InputDims dims{1, 5, 5};
  double noise_sigma = 1.0;
  double mean_scale = 1.0;  // class means are N(0, mean_scale^2) per element
  std::uint64_t mean_seed = 0;
};

/// Class means drawn once per mean_seed, every pair at L2 distance >= 4 sigma
/// (each mean is redrawn up to 1000 times).
std::vector<std::vector<double>> draw_class_means(const GaussianTask& task);

LongTailedDataset synth_gaussian(const GaussianTask& task, std::span<const std::size_t> counts,
                                 std::uint64_t seed);

enum class Split { many, medium, few };

const char* split_name(Split s);

struct SplitThresholds {
  std::size_t many_min = 100;  // Many: n_j > many_min
  std::size_t few_max = 20;    // Few:  n_j < few_max
};

struct SplitAssignment {
  std::vector<Split> tags;  // per class
  SplitThresholds thresholds;

  std::vector<std::size_t> classes_in(Split s) const;
};

SplitAssignment split_classes(std::span<const std::size_t> counts, SplitThresholds thresholds = {});
SplitAssignment split_classes(const LongTailedDataset& ds, SplitThresholds thresholds = {});

// "ELFD" v1 binary format.
void save_dataset(const LongTailedDataset& ds, const std::string& path);
LongTailedDataset load_dataset(const std::string& path);
std::vector<std::uint8_t> encode_dataset(const LongTailedDataset& ds);
LongTailedDataset decode_dataset(const std::vector<std::uint8_t>& bytes);

}  // namespace elf
