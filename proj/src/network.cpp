// SPDX-License-Identifier: Apache-2.0
#include "elf/network.hpp"

#include <cmath>
#include <random>

#include "elf/error.hpp"
#include "elf/kernels.hpp"

namespace elf {

// ---- Sequential ----

Tensor Sequential::forward(const Tensor& x) {
  Tensor h = x;
  for (auto& l : layers_) h = l->forward(h);
  return h;
}

Tensor Sequential::infer(const Tensor& x) const {
  Tensor h = x;
  for (const auto& l : layers_) h = l->infer(h);
  return h;
}

Tensor Sequential::backward(const Tensor& upstream) {
  Tensor g = upstream;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

Shape Sequential::output_shape(Shape input) const {
  for (const auto& l : layers_) input = l->output_shape(input);
  return input;
}

std::uint64_t Sequential::flops(Shape input) const {
  std::uint64_t total = 0;
  for (const auto& l : layers_) {
    total += l->flops(input);
    input = l->output_shape(input);
  }
  return total;
}

void Sequential::collect_params(std::vector<LayerParams*>& out) {
  for (auto& l : layers_) {
    if (auto* p = l->params()) out.push_back(p);
  }
}

// ---- MultiExitNetwork ----

namespace {

void he_init(LayerParams& p, std::size_t fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (auto& w : p.weights.data()) w = dist(rng);
  p.bias.fill(0.0);
}

}  // namespace

MultiExitNetwork::MultiExitNetwork(NetworkSpec spec) : spec_(std::move(spec)) {
  if (spec_.exits() == 0) throw ConfigError("network: need at least one exit");
  if (spec_.classes < 2) throw ConfigError("network: need at least two classes");
  if (spec_.input.size() == 0) throw ConfigError("network: input dimensions must be positive");
  for (auto w : spec_.widths) {
    if (w == 0) throw ConfigError("network: segment widths must be positive");
  }

  std::mt19937_64 rng(spec_.seed);
  Shape shape = spec_.input.shape();
  std::size_t in_ch = spec_.input.channels;
  for (std::size_t k = 0; k < spec_.exits(); ++k) {
    const std::size_t w = spec_.widths[k];
    const std::string seg = "segment" + std::to_string(k + 1);
    const std::string head = "head" + std::to_string(k + 1);

    Sequential s;
    auto c1 = std::make_unique<Conv2d>(seg + ".conv1", in_ch, w, ConvGeometry{3, k == 0 ? 1u : 2u, 1});
    auto c2 = std::make_unique<Conv2d>(seg + ".conv2", w, w, ConvGeometry{3, 1, 1});
    he_init(*c1->params(), in_ch * 9, rng);
    he_init(*c2->params(), w * 9, rng);
    s.add(std::move(c1));
    s.add(std::make_unique<Relu>());
    s.add(std::move(c2));
    s.add(std::make_unique<Relu>());

    Sequential h;
    auto h1 = std::make_unique<Conv2d>(head + ".conv1", w, w, ConvGeometry{3, 1, 1});
    auto h2 = std::make_unique<Conv2d>(head + ".conv2", w, w, ConvGeometry{3, 1, 1});
    auto fc = std::make_unique<Dense>(head + ".dense", w, spec_.classes);
    he_init(*h1->params(), w * 9, rng);
    he_init(*h2->params(), w * 9, rng);
    he_init(*fc->params(), w, rng);
    h.add(std::move(h1));
    h.add(std::make_unique<Relu>());
    h.add(std::move(h2));
    h.add(std::make_unique<Relu>());
    h.add(std::make_unique<AvgPool>());
    h.add(std::move(fc));

    try {
      segment_flops_.push_back(s.flops(shape));
      shape = s.output_shape(shape);
      head_flops_.push_back(h.flops(shape));
      h.output_shape(shape);
    } catch (const ConfigError& e) {
      throw ConfigError("network: input " + shape_str(spec_.input.shape()) +
                        " is incompatible with the stride plan at " + seg + ": " + e.what());
    }

    segments_.push_back(std::move(s));
    heads_.push_back(std::move(h));
    in_ch = w;
  }
}

std::vector<Tensor> MultiExitNetwork::forward_all(const Tensor& x) {
  std::vector<Tensor> logits;
  logits.reserve(exits());
  Tensor h = x;
  for (std::size_t k = 0; k < exits(); ++k) {
    h = segments_[k].forward(h);
    logits.push_back(heads_[k].forward(h));
  }
  return logits;
}

void MultiExitNetwork::backward_all(const std::vector<Tensor>& logit_grads) {
  if (logit_grads.size() != exits()) {
    throw DimensionError("backward: expected " + std::to_string(exits()) + " logit gradients");
  }
  auto all_zero = [](const Tensor& t) {
    for (double v : t.data()) {
      if (v != 0.0) return false;
    }
    return true;
  };
  // Gradient flowing into the output of segment k from everything downstream.
  Tensor downstream;
  for (std::size_t k = exits(); k-- > 0;) {
    Tensor g = std::move(downstream);
    downstream = Tensor();
    const Tensor& up = logit_grads[k];
    if (!up.empty() && !all_zero(up)) {
      Tensor from_head = heads_[k].backward(up);
      if (g.empty()) {
        g = std::move(from_head);
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += from_head[i];
      }
    }
    // Nothing reaches this segment: its parameters and everything above get no gradient.
    if (g.empty()) continue;
    downstream = segments_[k].backward(g);
  }
}

std::vector<LayerParams*> MultiExitNetwork::parameters() {
  std::vector<LayerParams*> out;
  for (auto& s : segments_) s.collect_params(out);
  for (auto& h : heads_) h.collect_params(out);
  return out;
}

std::vector<const LayerParams*> MultiExitNetwork::parameters() const {
  auto params = const_cast<MultiExitNetwork*>(this)->parameters();
  return {params.begin(), params.end()};
}

void MultiExitNetwork::set_class_counts(std::vector<std::size_t> counts) {
  if (!counts.empty() && counts.size() != classes()) {
    throw DimensionError("network: " + std::to_string(counts.size()) + " class counts for " +
                         std::to_string(classes()) + " classes");
  }
  class_counts_ = std::move(counts);
}

void MultiExitNetwork::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

MultiExitNetwork build_network(std::size_t classes, InputDims input, std::size_t exits,
                               std::vector<std::size_t> widths, std::uint64_t seed) {
  if (exits == 0) throw ConfigError("network: need at least one exit");
  if (widths.size() != exits) {
    throw ConfigError("network: " + std::to_string(widths.size()) + " widths given for " +
                      std::to_string(exits) + " exits");
  }
  return MultiExitNetwork(NetworkSpec{classes, input, std::move(widths), seed});
}

MultiExitNetwork build_network(const NetworkSpec& spec) { return MultiExitNetwork(spec); }

// ---- optimisation ----

void TrainConfig::validate(std::size_t exits) const {
  if (epochs == 0) throw ConfigError("train: epochs must be positive");
  if (batch_size == 0) throw ConfigError("train: batch size must be positive");
  if (warmup_epochs >= epochs) throw ConfigError("train: warmup epochs must be fewer than epochs");
  for (const auto& d : lr_decay) {
    if (d.epoch >= epochs) throw ConfigError("train: lr decay epoch beyond the last epoch");
  }
  if (!(lr > 0.0)) throw ConfigError("train: learning rate must be positive");
  if (momentum < 0.0 || weight_decay < 0.0) throw ConfigError("train: momentum and weight decay must be >= 0");
  policy.validate(exits);
}

double lr_at(const TrainConfig& config, std::size_t epoch) {
  if (epoch < config.warmup_epochs) {
    return config.lr * static_cast<double>(epoch + 1) / static_cast<double>(config.warmup_epochs);
  }
  double lr = config.lr;
  for (const auto& d : config.lr_decay) {
    if (epoch >= d.epoch) lr *= d.factor;
  }
  return lr;
}

void sgd_step(MultiExitNetwork& net, double lr, double momentum, double weight_decay) {
  const auto& k = simd::kernels();
  for (auto* p : net.parameters()) {
    k.sgd_update(p->weights.ptr(), p->momentum_weights.ptr(), p->grad_weights.ptr(),
                 p->weights.size(), lr, momentum, weight_decay);
    k.sgd_update(p->bias.ptr(), p->momentum_bias.ptr(), p->grad_bias.ptr(), p->bias.size(), lr,
                 momentum, weight_decay);
  }
}

LossSetup make_loss_setup(const LossConfig& config, std::span<const std::size_t> counts) {
  LossSetup s;
  s.loss.kind = config.kind;
  s.loss.gamma = config.gamma;
  if (config.kind == LossKind::ldam) s.loss.margins = ldam_margins(counts, config.max_margin);
  if (config.drw_epoch) {
    s.schedule.switch_epoch = *config.drw_epoch;
    s.schedule.target = effective_weights(counts, config.beta);
  } else {
    s.schedule.switch_epoch = 0;
    s.schedule.target = ClassWeights::uniform(counts.size());
  }
  return s;
}

}  // namespace elf
