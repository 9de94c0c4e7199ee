// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "elf/error.hpp"
#include "elf/network.hpp"

namespace elf {

namespace {

// Orders examples by label, then feature bytes, so the visiting order depends
// only on dataset content. Exact duplicates keep their relative order, which
// cannot change the trajectory since they are interchangeable.
std::vector<std::size_t> canonical_order(const LongTailedDataset& data) {
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (data.label(a) != data.label(b)) return data.label(a) < data.label(b);
    const auto fa = data.features(a);
    const auto fb = data.features(b);
    return std::lexicographical_compare(fa.begin(), fa.end(), fb.begin(), fb.end());
  });
  return idx;
}

}  // namespace

std::vector<EpochLog> train(MultiExitNetwork& net, const LongTailedDataset& data,
                            const TrainConfig& config, const EpochCallback& on_epoch) {
  const std::size_t k_total = net.exits();
  const std::size_t c = net.classes();
  config.validate(k_total);
  if (data.classes() != c) {
    throw ConfigError("train: dataset has " + std::to_string(data.classes()) + " classes, network " +
                      std::to_string(c));
  }
  if (data.dims() != net.spec().input) {
    throw ConfigError("train: dataset input " + shape_str(data.dims().shape()) + " does not match network " +
                      shape_str(net.spec().input.shape()));
  }
  if (data.size() == 0) throw ConfigError("train: dataset is empty");

  const LossSetup setup = make_loss_setup(config.loss, data.class_counts());
  net.set_class_counts(data.class_counts());
  std::vector<std::size_t> order = canonical_order(data);
  std::mt19937_64 rng(config.seed);

  std::vector<EpochLog> logs;
  logs.reserve(config.epochs);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at(config, epoch);
    const ClassWeights weights = setup.schedule.weights_at(epoch);
    std::shuffle(order.begin(), order.end(), rng);

    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    log.per_exit_mean_loss.assign(k_total, 0.0);
    log.exit_histogram.assign(k_total, 0);
    std::vector<std::size_t> reached(k_total, 0);
    double loss_sum = 0.0;
    std::size_t correct = 0;

    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_no) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> ids(order.data() + start, end - start);
      const std::size_t bsz = ids.size();
      const Tensor x = data.batch(ids);

      const std::vector<Tensor> logits = net.forward_all(x);
      std::vector<Tensor> grads;
      grads.reserve(k_total);
      for (std::size_t k = 0; k < k_total; ++k) grads.emplace_back(Shape{bsz, c}, 0.0);

      const double scale = 1.0 / static_cast<double>(bsz);
      std::vector<std::span<const double>> rows(k_total);
      for (std::size_t b = 0; b < bsz; ++b) {
        const std::size_t y = data.label(ids[b]);
        for (std::size_t k = 0; k < k_total; ++k) rows[k] = logits[k].row(b);
        const ElfLossResult r = elf_loss(rows, y, setup.loss, weights, config.policy);
        if (!std::isfinite(r.total_loss)) {
          std::ostringstream msg;
          msg << "training diverged: non-finite loss at epoch " << epoch << ", batch " << batch_no
              << ", lr " << lr;
          throw NumericalError(msg.str());
        }
        loss_sum += r.total_loss;
        ++log.exit_histogram[r.trace.exit_index - 1];
        for (std::size_t k = 0; k < k_total; ++k) {
          if (!r.mask[k]) continue;
          ++reached[k];
          log.per_exit_mean_loss[k] += r.trace.per_exit_loss[k];
          auto g = grads[k].row(b);
          for (std::size_t j = 0; j < c; ++j) g[j] = r.grads[k][j] * scale;
        }
        if (argmax(rows[k_total - 1]) == y) ++correct;
      }

      net.zero_grad();
      net.backward_all(grads);
      sgd_step(net, lr, config.momentum, config.weight_decay);
    }

    const double n = static_cast<double>(data.size());
    log.mean_total_loss = loss_sum / n;
    for (std::size_t k = 0; k < k_total; ++k) {
      if (reached[k] > 0) log.per_exit_mean_loss[k] /= static_cast<double>(reached[k]);
    }
    log.train_top1 = 100.0 * static_cast<double>(correct) / n;
    if (on_epoch) on_epoch(log);
    logs.push_back(std::move(log));
  }
  return logs;
}

}  // namespace elf
