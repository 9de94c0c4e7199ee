// SPDX-License-Identifier: Apache-2.0
#include "elf/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "elf/error.hpp"

namespace elf {

namespace {

void check_label(std::span<const double> logits, std::size_t y, const ClassWeights& w) {
  if (y >= logits.size()) {
    throw ConfigError("label " + std::to_string(y) + " out of range for " +
                      std::to_string(logits.size()) + " logits");
  }
  if (w.size() != logits.size()) {
    throw DimensionError("class weights have " + std::to_string(w.size()) + " entries, logits " +
                         std::to_string(logits.size()));
  }
}

struct LogSoftmax {
  double max;
  double sum;  // sum_j exp(z_j - max)
  double log_py;
};

LogSoftmax log_softmax_at(std::span<const double> z, std::size_t y) {
  const double mx = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - mx);
  return {mx, s, z[y] - mx - std::log(s)};
}

}  // namespace

ClassWeights ClassWeights::uniform(std::size_t classes) { return {std::vector<double>(classes, 1.0), {}}; }

ClassWeights effective_weights(std::span<const std::size_t> counts, double beta) {
  if (beta == 1.0) throw ConfigError("effective weights: beta = 1 makes (1-beta)/(1-beta^n) undefined");
  if (!(beta >= 0.0 && beta < 1.0)) throw ConfigError("effective weights: beta must lie in [0, 1)");
  if (counts.empty()) throw ConfigError("effective weights: no classes");
  ClassWeights out;
  out.beta = beta;
  out.w.reserve(counts.size());
  for (auto n : counts) {
    if (n == 0) throw ConfigError("effective weights: every class needs at least one example");
    out.w.push_back((1.0 - beta) / (1.0 - std::pow(beta, static_cast<double>(n))));
  }
  const double mean = std::accumulate(out.w.begin(), out.w.end(), 0.0) / static_cast<double>(counts.size());
  for (auto& v : out.w) v /= mean;
  return out;
}

MarginVector ldam_margins(std::span<const std::size_t> counts, double max_margin) {
  if (counts.empty()) throw ConfigError("ldam margins: no classes");
  const std::size_t n_min = *std::min_element(counts.begin(), counts.end());
  if (n_min == 0) throw ConfigError("ldam margins: every class needs at least one example");
  MarginVector m;
  m.c_const = max_margin * static_cast<double>(n_min);
  m.delta.reserve(counts.size());
  for (auto n : counts) m.delta.push_back(m.c_const / static_cast<double>(n));
  return m;
}

ClassWeights DrwSchedule::weights_at(std::size_t epoch) const {
  return epoch < switch_epoch ? ClassWeights::uniform(target.size()) : target;
}

ClassWeights drw_weights(const DrwSchedule& schedule, std::size_t epoch) {
  return schedule.weights_at(epoch);
}

double weighted_ce(std::span<const double> logits, std::size_t y, const ClassWeights& w,
                   std::span<double> grad) {
  check_label(logits, y, w);
  const LogSoftmax ls = log_softmax_at(logits, y);
  const double wy = w[y];
  if (!grad.empty()) {
    for (std::size_t j = 0; j < logits.size(); ++j) {
      const double p = std::exp(logits[j] - ls.max) / ls.sum;
      grad[j] = wy * (p - (j == y ? 1.0 : 0.0));
    }
  }
  return -wy * ls.log_py;
}

double focal(std::span<const double> logits, std::size_t y, const ClassWeights& w, double gamma,
             std::span<double> grad) {
  if (gamma < 0.0) throw ConfigError("focal: gamma must be non-negative");
  if (gamma == 0.0) return weighted_ce(logits, y, w, grad);
  check_label(logits, y, w);
  const LogSoftmax ls = log_softmax_at(logits, y);
  const double wy = w[y];

  // 1 - p_y as the sum of the other probabilities keeps precision near p_y = 1.
  double rest = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (j != y) rest += std::exp(logits[j] - ls.max) / ls.sum;
  }
  const double py = std::exp(ls.log_py);
  const double modulator = std::pow(rest, gamma);

  if (!grad.empty()) {
    if (rest <= 0.0) {
      std::fill(grad.begin(), grad.end(), 0.0);
    } else {
      // dL/dz_j = -w * [(1-p)^g - g p log(p) (1-p)^(g-1)] * (onehot_j - p_j)
      const double a = modulator - gamma * py * ls.log_py * std::pow(rest, gamma - 1.0);
      for (std::size_t j = 0; j < logits.size(); ++j) {
        const double d = j == y ? rest : -std::exp(logits[j] - ls.max) / ls.sum;
        grad[j] = -wy * a * d;
      }
    }
  }
  return -wy * modulator * ls.log_py;
}

double ldam(std::span<const double> logits, std::size_t y, const ClassWeights& w,
            const MarginVector& margins, std::span<double> grad) {
  check_label(logits, y, w);
  if (margins.delta.size() != logits.size()) {
    throw DimensionError("ldam: margin vector has " + std::to_string(margins.delta.size()) +
                         " entries, logits " + std::to_string(logits.size()));
  }
  std::vector<double> shifted(logits.begin(), logits.end());
  shifted[y] -= margins.delta[y];
  return weighted_ce(shifted, y, w, grad);
}

std::string_view loss_name(LossKind k) {
  switch (k) {
    case LossKind::ce: return "ce";
    case LossKind::focal: return "focal";
    case LossKind::ldam: return "ldam";
  }
  return "?";
}

std::optional<LossKind> parse_loss(std::string_view name) {
  for (auto k : {LossKind::ce, LossKind::focal, LossKind::ldam}) {
    if (loss_name(k) == name) return k;
  }
  return std::nullopt;
}

double ExitLoss::operator()(std::span<const double> logits, std::size_t y, const ClassWeights& w,
                            std::span<double> grad) const {
  switch (kind) {
    case LossKind::ce: return weighted_ce(logits, y, w, grad);
    case LossKind::focal: return focal(logits, y, w, gamma, grad);
    case LossKind::ldam: return ldam(logits, y, w, margins, grad);
  }
  return 0.0;
}

}  // namespace elf
