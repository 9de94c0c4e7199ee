// SPDX-License-Identifier: Apache-2.0
//
// Inference with early termination: segments and heads run in order and stop
// at the first exit whose inference criterion fires.
#pragma once

#include <cstdint>
#include <vector>

#include "elf/exits.hpp"
#include "elf/network.hpp"

namespace elf {

struct Prediction {
  std::size_t label = 0;
  std::vector<double> probs;  // softmax of the exit that produced the prediction
  ExitTrace trace;            // per_exit_confidence covers the heads actually run
};

/// Cost of reaching and evaluating exit k: segments 1..k plus head k.
std::vector<std::uint64_t> cumulative_exit_flops(const MultiExitNetwork& net);

/// Single example, shape [C x H x W] or [1 x C x H x W]. Heads whose threshold
/// is >= 1 cannot fire and are skipped (except the last).
Prediction predict(const Tensor& x, const MultiExitNetwork& net, const ExitPolicy& policy);

/// Batched form of predict: each stage only processes the examples that have
/// not exited yet. Results are bit-identical to calling predict per example.
std::vector<Prediction> predict_batch(const Tensor& x, const MultiExitNetwork& net, const ExitPolicy& policy);

/// Predicts every example of a dataset, in chunks, sharded over `threads`
/// workers with results merged in example order.
std::vector<Prediction> predict_dataset(const MultiExitNetwork& net, const LongTailedDataset& data,
                                        const ExitPolicy& policy, std::size_t threads = 1);

}  // namespace elf
