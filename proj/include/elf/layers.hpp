// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

#include "elf/tensor.hpp"

namespace elf {

/// Trainable weights and bias with gradient accumulators and momentum buffers
/// of identical shapes.
struct LayerParams {
  LayerParams() = default;
  LayerParams(std::string name, Shape weight_shape, Shape bias_shape);

  std::string name;
  Tensor weights;
  Tensor bias;
  Tensor grad_weights;
  Tensor grad_bias;
  Tensor momentum_weights;
  Tensor momentum_bias;

  void zero_grad();
  std::size_t count() const { return weights.size() + bias.size(); }
};

struct ConvGeometry {
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 1;

  /// Output extent for an input extent; throws ConfigError when not integral.
  std::size_t output_extent(std::size_t input) const;
};

// Stateless forward maps. Shapes: dense [batch x m] -> [batch x n] with
// weights [m x n]; conv [batch x Cin x H x W] -> [batch x Cout x H' x W'] with
// weights [Cout x Cin x k x k].
Tensor dense_forward(const Tensor& input, const LayerParams& params);
Tensor conv2d_forward(const Tensor& input, const LayerParams& params, const ConvGeometry& geom);
Tensor relu(const Tensor& input);
Tensor avg_pool(const Tensor& input);

/// Row-wise softmax over [batch x c] with max subtraction.
Tensor softmax(const Tensor& logits);

/// A differentiable layer. `forward` caches what `backward` needs; `infer` is
/// const and may be called concurrently. `backward` returns the input gradient
/// and adds parameter gradients into the accumulators.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string_view kind() const = 0;
  virtual Tensor forward(const Tensor& input) = 0;
  virtual Tensor infer(const Tensor& input) const = 0;
  virtual Tensor backward(const Tensor& upstream) = 0;

  /// Output shape for a per-example input shape (no batch dimension).
  virtual Shape output_shape(const Shape& input) const = 0;
  /// Per-example FLOPs (one multiply-accumulate = 2) for a per-example input shape.
  virtual std::uint64_t flops(const Shape& input) const = 0;

  virtual LayerParams* params() { return nullptr; }
  const LayerParams* params() const { return const_cast<Layer*>(this)->params(); }
};

class Dense final : public Layer {
 public:
  Dense(std::string name, std::size_t in_features, std::size_t out_features);

  std::string_view kind() const override { return "dense"; }
  Tensor forward(const Tensor& input) override;
  Tensor infer(const Tensor& input) const override;
  Tensor backward(const Tensor& upstream) override;
  Shape output_shape(const Shape& input) const override;
  std::uint64_t flops(const Shape& input) const override;
  LayerParams* params() override { return &params_; }

 private:
  LayerParams params_;
  Tensor input_;
  bool cached_ = false;
};

class Conv2d final : public Layer {
 public:
  Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels, ConvGeometry geom);

  std::string_view kind() const override { return "conv2d"; }
  Tensor forward(const Tensor& input) override;
  Tensor infer(const Tensor& input) const override;
  Tensor backward(const Tensor& upstream) override;
  Shape output_shape(const Shape& input) const override;
  std::uint64_t flops(const Shape& input) const override;
  LayerParams* params() override { return &params_; }

  const ConvGeometry& geometry() const { return geom_; }

 private:
  LayerParams params_;
  ConvGeometry geom_;
  Shape input_shape_;
  std::vector<double> cols_;  // [Cin*k*k x batch*H'*W'] from the last forward
  bool cached_ = false;
};

class Relu final : public Layer {
 public:
  std::string_view kind() const override { return "relu"; }
  Tensor forward(const Tensor& input) override;
  Tensor infer(const Tensor& input) const override { return relu(input); }
  Tensor backward(const Tensor& upstream) override;
  Shape output_shape(const Shape& input) const override { return input; }
  std::uint64_t flops(const Shape&) const override { return 0; }

 private:
  Tensor input_;
  bool cached_ = false;
};

/// Global spatial average: [batch x C x H x W] -> [batch x C].
class AvgPool final : public Layer {
 public:
  std::string_view kind() const override { return "avg_pool"; }
  Tensor forward(const Tensor& input) override;
  Tensor infer(const Tensor& input) const override { return avg_pool(input); }
  Tensor backward(const Tensor& upstream) override;
  Shape output_shape(const Shape& input) const override;
  std::uint64_t flops(const Shape&) const override { return 0; }

 private:
  Shape input_shape_;
  bool cached_ = false;
};

}  // namespace elf
