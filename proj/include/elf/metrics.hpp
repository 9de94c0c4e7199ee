// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "elf/data.hpp"
#include "elf/inference.hpp"
#include "elf/network.hpp"

namespace elf {

// ---- FLOPs ----

struct LayerFlops {
  std::string block;  // "segment2", "head1", ...
  std::string layer;  // parameter name, or the layer kind for parameter-free layers
  std::uint64_t flops = 0;
};

struct FlopTable {
  std::vector<LayerFlops> layers;
  std::vector<std::uint64_t> segment;
  std::vector<std::uint64_t> head;
  std::vector<std::uint64_t> per_exit_cumulative;  // segments 1..k + head k
  std::uint64_t baseline = 0;                      // every segment + the final head only
};

FlopTable flops_of(const MultiExitNetwork& net);

struct FlopsReport {
  std::vector<std::uint64_t> per_exit_cumulative_flops;
  double mean_flops_per_example = 0.0;
  double baseline = 0.0;
  double relative_to_baseline = 0.0;  // 100 * (mean / baseline - 1)
};

FlopsReport flops_report(const MultiExitNetwork& net, const std::vector<Prediction>& predictions);
double relative_flops(double mean, double baseline);

// ---- accuracy-FLOP family ----

struct CurvePoint {
  double s = 0.0;
  double top1 = 0.0;  // percent
  double mean_flops = 0.0;
  std::vector<std::size_t> exit_histogram;  // K counts
};

CurvePoint curve_point(double s, const std::vector<Prediction>& predictions,
                       const std::vector<std::uint32_t>& labels, std::size_t exits);

/// One point per threshold, with s applied uniformly to every exit.
std::vector<CurvePoint> accuracy_flop_curve(const MultiExitNetwork& net, const LongTailedDataset& eval,
                                            const std::vector<double>& s_grid, std::size_t threads = 1);

// ---- split accuracy ----

struct SplitAccuracy {
  std::array<std::optional<double>, 3> split;  // indexed by Split; absent when a split has no classes
  std::array<std::size_t, 3> classes{};
  double all = 0.0;

  std::optional<double> operator[](Split s) const { return split[static_cast<std::size_t>(s)]; }
};

/// Top-1 percentages over examples whose true class belongs to each split.
SplitAccuracy split_accuracy(const std::vector<std::size_t>& predictions,
                             const std::vector<std::uint32_t>& labels, const SplitAssignment& splits);

// ---- increasing-loss statistics ----

struct ExitGroupStats {
  std::size_t exit = 0;  // 1-based
  std::size_t count = 0;
  double mean_loss = 0.0;
};

struct LossStats {
  std::vector<ExitGroupStats> groups;  // one per exit, including empty ones
  bool strictly_increasing = true;     // over non-empty groups
};

/// Groups examples by the training-criterion exit index and averages their
/// total multi-exit loss per group.
LossStats per_exit_loss_stats(const MultiExitNetwork& net, const LongTailedDataset& data, const ExitLoss& loss,
                              const ClassWeights& weights, const ExitPolicy& policy);

// ---- confidence histograms ----

struct HistogramRow {
  std::string subset;
  double bin_lo = 0.0;
  double bin_hi = 0.0;
  double proportion = 0.0;
};

struct ClassSubset {
  std::string name;
  std::vector<std::size_t> classes;
};

/// Histogram of the final exit's probability for the true class, normalized
/// within each subset. Subsets without examples are omitted.
std::vector<HistogramRow> confidence_histogram(const MultiExitNetwork& net, const LongTailedDataset& data,
                                               const std::vector<ClassSubset>& subsets, std::size_t bins);

// ---- CSV ----

/// Floats with 6 significant digits.
std::string format_float(double v);

std::string curve_csv(const std::vector<CurvePoint>& points, std::size_t exits);
std::string splits_csv(const SplitAccuracy& acc);
std::string property1_csv(const LossStats& stats);
std::string histogram_csv(const std::vector<HistogramRow>& rows);

}  // namespace elf
