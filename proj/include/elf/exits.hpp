// SPDX-License-Identifier: Apache-2.0
//
// Early-exit decision rules and the aggregated multi-exit training loss.
// Exit indices are 1-based in traces and reports (exit 1 is the shallowest).
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "elf/losses.hpp"

namespace elf {

/// Per-exit thresholds on softmax confidences: t for training, s for inference.
struct ExitPolicy {
  std::vector<double> train_thresholds;
  std::vector<double> infer_thresholds;

  static ExitPolicy uniform(std::size_t exits, double t, double s);

  std::size_t exits() const { return train_thresholds.size(); }
  /// Throws ConfigError unless both vectors have `exits` entries in [0, 1].
  void validate(std::size_t exits) const;
};

struct ExitTrace {
  std::size_t exit_index = 0;               // k_e, 1-based
  std::vector<double> per_exit_confidence;  // max softmax probability at each evaluated exit
  std::vector<double> per_exit_loss;        // losses of exits 1..k_e (training only)
  double total_loss = 0.0;
  std::uint64_t flops = 0;                  // per_exit_cumulative_flops[k_e]
  std::uint64_t evaluated_flops = 0;        // every segment and head actually run
};

/// argmax(probs) == y and probs[y] > t (both strict on the confidence side).
bool train_exit_criterion(std::span<const double> probs, std::size_t y, double t);

/// max(probs) > s. The label is not consulted.
bool infer_exit_criterion(std::span<const double> probs, double s);

/// First index of the maximum (ties resolve to the lower class).
std::size_t argmax(std::span<const double> v);

/// Softmax of one logit row with max subtraction.
std::vector<double> softmax_probs(std::span<const double> logits);

struct ElfLossResult {
  double total_loss = 0.0;
  ExitTrace trace;
  std::vector<std::uint8_t> mask;         // 1 for exits 1..k_e
  std::vector<std::vector<double>> grads;  // dloss/dlogits per exit; zero where masked
};

/// Sum of exit losses from exit 1 through the first exit whose training
/// criterion fires (or through exit K when none fires).
ElfLossResult elf_loss(std::span<const std::span<const double>> per_exit_logits, std::size_t y,
                       const ExitLoss& loss, const ClassWeights& weights, const ExitPolicy& policy);

}  // namespace elf
