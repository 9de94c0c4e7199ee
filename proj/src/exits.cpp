// SPDX-License-Identifier: Apache-2.0
#include "elf/exits.hpp"

#include <algorithm>
#include <cmath>

#include "elf/error.hpp"

namespace elf {

ExitPolicy ExitPolicy::uniform(std::size_t exits, double t, double s) {
  return {std::vector<double>(exits, t), std::vector<double>(exits, s)};
}

void ExitPolicy::validate(std::size_t exits) const {
  if (exits == 0) throw ConfigError("exit policy: need at least one exit");
  if (train_thresholds.size() != exits || infer_thresholds.size() != exits) {
    throw ConfigError("exit policy: expected " + std::to_string(exits) + " thresholds, got " +
                      std::to_string(train_thresholds.size()) + " training and " +
                      std::to_string(infer_thresholds.size()) + " inference");
  }
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!std::all_of(train_thresholds.begin(), train_thresholds.end(), in_unit) ||
      !std::all_of(infer_thresholds.begin(), infer_thresholds.end(), in_unit)) {
    throw ConfigError("exit policy: thresholds must lie in [0, 1]");
  }
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

bool train_exit_criterion(std::span<const double> probs, std::size_t y, double t) {
  return argmax(probs) == y && probs[y] > t;
}

bool infer_exit_criterion(std::span<const double> probs, double s) {
  return *std::max_element(probs.begin(), probs.end()) > s;
}

std::vector<double> softmax_probs(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    p[j] = std::exp(logits[j] - mx);
    sum += p[j];
  }
  for (auto& v : p) v /= sum;
  return p;
}

ElfLossResult elf_loss(std::span<const std::span<const double>> per_exit_logits, std::size_t y,
                       const ExitLoss& loss, const ClassWeights& weights, const ExitPolicy& policy) {
  const std::size_t k_total = per_exit_logits.size();
  if (k_total == 0) throw ConfigError("elf loss: network has no exits");
  if (policy.exits() != k_total) {
    throw ConfigError("elf loss: policy has " + std::to_string(policy.exits()) + " exits, got " +
                      std::to_string(k_total) + " logit vectors");
  }

  ElfLossResult r;
  r.mask.assign(k_total, 0);
  r.grads.resize(k_total);
  r.trace.per_exit_confidence.reserve(k_total);
  r.trace.exit_index = k_total;

  bool exited = false;
  for (std::size_t k = 0; k < k_total; ++k) {
    const auto logits = per_exit_logits[k];
    const auto probs = softmax_probs(logits);
    r.trace.per_exit_confidence.push_back(*std::max_element(probs.begin(), probs.end()));
    r.grads[k].assign(logits.size(), 0.0);
    if (exited) continue;

    const double lk = loss(logits, y, weights, r.grads[k]);
    r.mask[k] = 1;
    r.trace.per_exit_loss.push_back(lk);
    r.total_loss += lk;
    if (train_exit_criterion(probs, y, policy.train_thresholds[k])) {
      r.trace.exit_index = k + 1;
      exited = true;
    }
  }
  r.trace.total_loss = r.total_loss;
  return r;
}

}  // namespace elf
