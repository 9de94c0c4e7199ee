// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace elf {

/// Per-class loss weights, mean-normalized so that sum(w) / c == 1.
struct ClassWeights {
  std::vector<double> w;
  std::optional<double> beta;  // absent for uniform weights

  static ClassWeights uniform(std::size_t classes);
  double operator[](std::size_t j) const { return w[j]; }
  std::size_t size() const { return w.size(); }
};

/// Effective-number weights (1 - beta) / (1 - beta^n_j), then mean-normalized.
ClassWeights effective_weights(std::span<const std::size_t> counts, double beta);

/// LDAM margins delta_j = C / n_j with C chosen so the largest margin is max_margin.
struct MarginVector {
  std::vector<double> delta;
  double c_const = 0.0;
};

MarginVector ldam_margins(std::span<const std::size_t> counts, double max_margin = 0.5);

/// Delayed reweighting: uniform weights before switch_epoch, target from it on.
struct DrwSchedule {
  std::size_t switch_epoch = 0;
  ClassWeights target;

  ClassWeights weights_at(std::size_t epoch) const;
};

ClassWeights drw_weights(const DrwSchedule& schedule, std::size_t epoch);

// Single-example losses on a logit vector. Each returns the loss and, when
// `grad` is non-empty, writes dloss/dlogits into it (same length as logits).

/// -w_y * log softmax(z)[y]
double weighted_ce(std::span<const double> logits, std::size_t y, const ClassWeights& w,
                   std::span<double> grad = {});

/// -w_y * (1 - p_y)^gamma * log p_y; gamma == 0 reduces to weighted_ce exactly.
double focal(std::span<const double> logits, std::size_t y, const ClassWeights& w, double gamma,
             std::span<double> grad = {});

/// weighted_ce on logits with z_y replaced by z_y - delta_y.
double ldam(std::span<const double> logits, std::size_t y, const ClassWeights& w,
            const MarginVector& margins, std::span<double> grad = {});

enum class LossKind { ce, focal, ldam };

std::string_view loss_name(LossKind k);
std::optional<LossKind> parse_loss(std::string_view name);

/// The loss applied independently at every exit.
struct ExitLoss {
  LossKind kind = LossKind::ce;
  double gamma = 0.5;
  MarginVector margins;  // used by ldam only

  double operator()(std::span<const double> logits, std::size_t y, const ClassWeights& w,
                    std::span<double> grad = {}) const;
};

}  // namespace elf
