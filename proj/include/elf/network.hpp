// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "elf/data.hpp"
#include "elf/exits.hpp"
#include "elf/layers.hpp"
#include "elf/losses.hpp"

namespace elf {

/// A chain of layers evaluated in order.
class Sequential {
 public:
  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

  Tensor forward(const Tensor& x);
  Tensor infer(const Tensor& x) const;
  Tensor backward(const Tensor& upstream);

  Shape output_shape(Shape input) const;
  std::uint64_t flops(Shape input) const;
  void collect_params(std::vector<LayerParams*>& out);

  std::size_t size() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_[i]; }
  const Layer& layer(std::size_t i) const { return *layers_[i]; }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

/// Architecture descriptor; enough to rebuild a network bit-for-bit.
struct NetworkSpec {
  std::size_t classes = 10;
  InputDims input{1, 5, 5};
  std::vector<std::size_t> widths{16, 32, 64};  // one backbone segment per exit
  std::uint64_t seed = 0;

  std::size_t exits() const { return widths.size(); }
  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Backbone segments 1..K, each followed by an exit head. Segment k is two 3x3
/// convs with relu (stride 2 on the first conv for k > 1); head k is two 3x3
/// convs at the segment's width with relu, global average pooling and a dense
/// classifier. Head K is the network's main classifier.
class MultiExitNetwork {
 public:
  explicit MultiExitNetwork(NetworkSpec spec);

  MultiExitNetwork(MultiExitNetwork&&) = default;
  MultiExitNetwork& operator=(MultiExitNetwork&&) = default;

  const NetworkSpec& spec() const { return spec_; }
  std::size_t exits() const { return spec_.exits(); }
  std::size_t classes() const { return spec_.classes; }

  /// Training forward through every segment and head; caches activations.
  /// Returns K logit tensors [batch x c].
  std::vector<Tensor> forward_all(const Tensor& x);
  /// Backpropagates per-exit logit gradients; an empty tensor means zero.
  void backward_all(const std::vector<Tensor>& logit_grads);

  Tensor infer_segment(std::size_t k, const Tensor& x) const { return segments_.at(k).infer(x); }
  Tensor infer_head(std::size_t k, const Tensor& h) const { return heads_.at(k).infer(h); }

  /// Per-example FLOPs of segment k / head k (0-based).
  std::uint64_t segment_flops(std::size_t k) const { return segment_flops_.at(k); }
  std::uint64_t head_flops(std::size_t k) const { return head_flops_.at(k); }

  /// Parameters in fixed declaration order (segments, then heads).
  std::vector<LayerParams*> parameters();
  std::vector<const LayerParams*> parameters() const;
  void zero_grad();

  Sequential& segment(std::size_t k) { return segments_.at(k); }
  Sequential& head(std::size_t k) { return heads_.at(k); }
  const Sequential& segment(std::size_t k) const { return segments_.at(k); }
  const Sequential& head(std::size_t k) const { return heads_.at(k); }

  /// Training-set class counts recorded by train(); empty until trained.
  const std::vector<std::size_t>& class_counts() const { return class_counts_; }
  void set_class_counts(std::vector<std::size_t> counts);

 private:
  NetworkSpec spec_;
  std::vector<std::size_t> class_counts_;
  std::vector<Sequential> segments_;
  std::vector<Sequential> heads_;
  std::vector<std::uint64_t> segment_flops_;
  std::vector<std::uint64_t> head_flops_;
};

/// He-initialized network; identical seeds give bit-identical parameters.
MultiExitNetwork build_network(std::size_t classes, InputDims input, std::size_t exits,
                               std::vector<std::size_t> widths, std::uint64_t seed);
MultiExitNetwork build_network(const NetworkSpec& spec);

// ---- optimisation ----

struct LrDecay {
  std::size_t epoch;
  double factor;
};

struct LossConfig {
  LossKind kind = LossKind::ce;
  double gamma = 0.5;
  double max_margin = 0.5;
  double beta = 0.9999;
  std::optional<std::size_t> drw_epoch;  // absent: uniform weights throughout
};

struct TrainConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 64;
  double lr = 0.1;
  std::vector<LrDecay> lr_decay;
  std::size_t warmup_epochs = 5;
  double weight_decay = 2e-4;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  LossConfig loss;
  ExitPolicy policy;

  void validate(std::size_t exits) const;
};

/// Linear warmup lr * (e + 1) / warmup for e < warmup, then lr times every
/// decay factor whose epoch is <= e.
double lr_at(const TrainConfig& config, std::size_t epoch);

/// v = momentum * v + grad + weight_decay * w; w -= lr * v, for every parameter.
void sgd_step(MultiExitNetwork& net, double lr, double momentum, double weight_decay);

/// Exit loss and reweighting schedule for a training set's class counts.
struct LossSetup {
  ExitLoss loss;
  DrwSchedule schedule;
};

LossSetup make_loss_setup(const LossConfig& config, std::span<const std::size_t> counts);

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double mean_total_loss = 0.0;
  std::vector<double> per_exit_mean_loss;       // over examples that reached the exit
  std::vector<std::size_t> exit_histogram;      // training exit index counts
  double train_top1 = 0.0;                      // final-exit accuracy, percent
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Seeded SGD training with the multi-exit loss. The example visiting order is
/// a seeded shuffle of a canonical (content-sorted) ordering, so it does not
/// depend on how the dataset happens to be stored.
std::vector<EpochLog> train(MultiExitNetwork& net, const LongTailedDataset& data,
                            const TrainConfig& config, const EpochCallback& on_epoch = {});

// ---- checkpoints ("ELFC" v1) ----

std::vector<std::uint8_t> encode_checkpoint(const MultiExitNetwork& net);
MultiExitNetwork decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const MultiExitNetwork& net, const std::string& path);
MultiExitNetwork load_checkpoint(const std::string& path);
/// Loads parameters into an existing network; a mismatch names the tensor.
void load_checkpoint_into(MultiExitNetwork& net, const std::string& path);

}  // namespace elf
