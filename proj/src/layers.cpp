// SPDX-License-Identifier: Apache-2.0
#include "elf/layers.hpp"

#include <algorithm>
#include <cmath>

#include "elf/error.hpp"
#include "elf/kernels.hpp"

namespace elf {

namespace {

// dst[cols x rows] = src[rows x cols]^T
void transpose(const double* src, std::size_t rows, std::size_t cols, double* dst) {
  constexpr std::size_t kB = 32;
  for (std::size_t i0 = 0; i0 < rows; i0 += kB) {
    const std::size_t i1 = std::min(rows, i0 + kB);
    for (std::size_t j0 = 0; j0 < cols; j0 += kB) {
      const std::size_t j1 = std::min(cols, j0 + kB);
      for (std::size_t i = i0; i < i1; ++i) {
        for (std::size_t j = j0; j < j1; ++j) dst[j * rows + i] = src[i * cols + j];
      }
    }
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* context) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(context) + ": expected rank " + std::to_string(rank) +
                         " input, got " + shape_str(t.shape()));
  }
}

struct ConvDims {
  std::size_t batch, cin, h, w, cout, ho, wo;
};

ConvDims conv_dims(const Tensor& input, const LayerParams& params, const ConvGeometry& g) {
  require_rank(input, 4, "conv2d");
  const Shape& ws = params.weights.shape();
  if (ws[2] != g.kernel || ws[3] != g.kernel) {
    throw ConfigError("conv2d: kernel " + shape_str(ws) + " does not match geometry size " +
                      std::to_string(g.kernel));
  }
  if (input.dim(1) != ws[1]) {
    throw DimensionError("conv2d: input " + shape_str(input.shape()) +
                         " does not match kernel " + shape_str(ws));
  }
  return {input.dim(0), input.dim(1), input.dim(2), input.dim(3), ws[0],
          g.output_extent(input.dim(2)), g.output_extent(input.dim(3))};
}

// Patch-major columns: cols[(n,oh,ow) x (c,kh,kw)] gathered from the
// zero-padded input. This layout lets forward and both backward products run
// as plain GEMMs without transposing the (large) column matrix.
void im2col(const double* in, const ConvDims& d, const ConvGeometry& g, double* cols) {
  const std::size_t k = g.kernel, rows = d.cin * k * k;
  const auto h = static_cast<std::ptrdiff_t>(d.h), w = static_cast<std::ptrdiff_t>(d.w);
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t oh = 0; oh < d.ho; ++oh) {
      for (std::size_t ow = 0; ow < d.wo; ++ow) {
        double* dst = cols + ((n * d.ho + oh) * d.wo + ow) * rows;
        const auto ih0 = static_cast<std::ptrdiff_t>(oh * g.stride) - static_cast<std::ptrdiff_t>(g.pad);
        const auto iw0 = static_cast<std::ptrdiff_t>(ow * g.stride) - static_cast<std::ptrdiff_t>(g.pad);
        for (std::size_t c = 0; c < d.cin; ++c) {
          const double* src = in + (n * d.cin + c) * d.h * d.w;
          for (std::size_t kh = 0; kh < k; ++kh) {
            const auto ih = ih0 + static_cast<std::ptrdiff_t>(kh);
            if (ih < 0 || ih >= h) {
              std::fill(dst, dst + k, 0.0);
              dst += k;
              continue;
            }
            const double* line = src + ih * w;
            for (std::size_t kw = 0; kw < k; ++kw) {
              const auto iw = iw0 + static_cast<std::ptrdiff_t>(kw);
              *dst++ = (iw < 0 || iw >= w) ? 0.0 : line[iw];
            }
          }
        }
      }
    }
  }
}

// Scatter-add of patch-major column gradients back onto the input gradient.
void col2im(const double* cols, const ConvDims& d, const ConvGeometry& g, double* in) {
  const std::size_t k = g.kernel, rows = d.cin * k * k;
  const auto h = static_cast<std::ptrdiff_t>(d.h), w = static_cast<std::ptrdiff_t>(d.w);
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t oh = 0; oh < d.ho; ++oh) {
      for (std::size_t ow = 0; ow < d.wo; ++ow) {
        const double* src = cols + ((n * d.ho + oh) * d.wo + ow) * rows;
        const auto ih0 = static_cast<std::ptrdiff_t>(oh * g.stride) - static_cast<std::ptrdiff_t>(g.pad);
        const auto iw0 = static_cast<std::ptrdiff_t>(ow * g.stride) - static_cast<std::ptrdiff_t>(g.pad);
        for (std::size_t c = 0; c < d.cin; ++c) {
          double* dst = in + (n * d.cin + c) * d.h * d.w;
          for (std::size_t kh = 0; kh < k; ++kh, src += k) {
            const auto ih = ih0 + static_cast<std::ptrdiff_t>(kh);
            if (ih < 0 || ih >= h) continue;
            double* line = dst + ih * w;
            for (std::size_t kw = 0; kw < k; ++kw) {
              const auto iw = iw0 + static_cast<std::ptrdiff_t>(kw);
              if (iw >= 0 && iw < w) line[iw] += src[kw];
            }
          }
        }
      }
    }
  }
}

Tensor conv_apply(const Tensor& input, const LayerParams& params, const ConvGeometry& g,
                  std::vector<double>& cols) {
  const ConvDims d = conv_dims(input, params, g);
  const std::size_t plane = d.ho * d.wo, np = d.batch * plane, rows = d.cin * g.kernel * g.kernel;
  cols.resize(np * rows);
  im2col(input.ptr(), d, g, cols.data());
  std::vector<double> weights_t(rows * d.cout);
  transpose(params.weights.ptr(), d.cout, rows, weights_t.data());
  std::vector<double> out_mat(np * d.cout);  // [(n,oh,ow) x cout]
  simd::kernels().gemm(np, d.cout, rows, cols.data(), rows, weights_t.data(), d.cout,
                       out_mat.data(), d.cout, false);
  Tensor out({d.batch, d.cout, d.ho, d.wo});
  double* o = out.ptr();
  for (std::size_t n = 0; n < d.batch; ++n) {
    const double* src = out_mat.data() + n * plane * d.cout;
    for (std::size_t co = 0; co < d.cout; ++co) {
      double* dst = o + (n * d.cout + co) * plane;
      const double b = params.bias[co];
      for (std::size_t p = 0; p < plane; ++p) dst[p] = src[p * d.cout + co] + b;
    }
  }
  return out;
}

}  // namespace

LayerParams::LayerParams(std::string name_, Shape weight_shape, Shape bias_shape)
    : name(std::move(name_)),
      weights(weight_shape),
      bias(bias_shape),
      grad_weights(weight_shape),
      grad_bias(bias_shape),
      momentum_weights(weight_shape),
      momentum_bias(bias_shape) {}

void LayerParams::zero_grad() {
  grad_weights.fill(0.0);
  grad_bias.fill(0.0);
}

std::size_t ConvGeometry::output_extent(std::size_t input) const {
  const std::size_t padded = input + 2 * pad;
  if (stride == 0 || padded < kernel || (padded - kernel) % stride != 0) {
    throw ConfigError("conv2d: input extent " + std::to_string(input) + " with kernel " +
                      std::to_string(kernel) + ", stride " + std::to_string(stride) + ", pad " +
                      std::to_string(pad) + " gives a non-integral output size");
  }
  return (padded - kernel) / stride + 1;
}

Tensor dense_forward(const Tensor& input, const LayerParams& params) {
  require_rank(input, 2, "dense");
  const std::size_t batch = input.dim(0), m = params.weights.dim(0), n = params.weights.dim(1);
  if (input.dim(1) != m) {
    throw DimensionError("dense: input " + shape_str(input.shape()) + " does not match weights " +
                         shape_str(params.weights.shape()));
  }
  Tensor out({batch, n});
  simd::kernels().gemm(batch, n, m, input.ptr(), m, params.weights.ptr(), n, out.ptr(), n, false);
  for (std::size_t b = 0; b < batch; ++b) {
    auto row = out.row(b);
    for (std::size_t j = 0; j < n; ++j) row[j] += params.bias[j];
  }
  return out;
}

Tensor conv2d_forward(const Tensor& input, const LayerParams& params, const ConvGeometry& geom) {
  std::vector<double> cols;
  return conv_apply(input, params, geom, cols);
}

Tensor relu(const Tensor& input) {
  Tensor out(input.shape());
  simd::kernels().relu(input.ptr(), out.ptr(), input.size());
  return out;
}

Tensor avg_pool(const Tensor& input) {
  require_rank(input, 4, "avg_pool");
  const std::size_t batch = input.dim(0), ch = input.dim(1), plane = input.dim(2) * input.dim(3);
  Tensor out({batch, ch});
  for (std::size_t i = 0; i < batch * ch; ++i) {
    const double* src = input.ptr() + i * plane;
    double s = 0.0;
    for (std::size_t p = 0; p < plane; ++p) s += src[p];
    out[i] = s / static_cast<double>(plane);
  }
  return out;
}

Tensor softmax(const Tensor& logits) {
  require_rank(logits, 2, "softmax");
  Tensor out(logits.shape());
  for (std::size_t b = 0; b < logits.dim(0); ++b) {
    auto z = logits.row(b);
    auto p = out.row(b);
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
      p[j] = std::exp(z[j] - mx);
      sum += p[j];
    }
    for (auto& v : p) v /= sum;
  }
  return out;
}

// ---- Dense ----

Dense::Dense(std::string name, std::size_t in_features, std::size_t out_features)
    : params_(std::move(name), {in_features, out_features}, {out_features}) {}

Tensor Dense::forward(const Tensor& input) {
  Tensor out = dense_forward(input, params_);
  input_ = input;
  cached_ = true;
  return out;
}

Tensor Dense::infer(const Tensor& input) const { return dense_forward(input, params_); }

Tensor Dense::backward(const Tensor& upstream) {
  if (!cached_) throw StateError("dense '" + params_.name + "': backward called before forward");
  const std::size_t batch = input_.dim(0), m = params_.weights.dim(0), n = params_.weights.dim(1);
  require_same_shape(upstream.shape(), Shape{batch, n}, "dense backward");
  const auto& k = simd::kernels();

  std::vector<double> input_t(m * batch);
  transpose(input_.ptr(), batch, m, input_t.data());
  k.gemm(m, n, batch, input_t.data(), batch, upstream.ptr(), n, params_.grad_weights.ptr(), n, true);
  for (std::size_t b = 0; b < batch; ++b) {
    auto row = upstream.row(b);
    for (std::size_t j = 0; j < n; ++j) params_.grad_bias[j] += row[j];
  }

  std::vector<double> weights_t(n * m);
  transpose(params_.weights.ptr(), m, n, weights_t.data());
  Tensor grad_in({batch, m});
  k.gemm(batch, m, n, upstream.ptr(), n, weights_t.data(), m, grad_in.ptr(), m, false);
  return grad_in;
}

Shape Dense::output_shape(const Shape& input) const {
  if (input.size() != 1 || input[0] != params_.weights.dim(0)) {
    throw DimensionError("dense: input " + shape_str(input) + " does not match weights " +
                         shape_str(params_.weights.shape()));
  }
  return {params_.weights.dim(1)};
}

std::uint64_t Dense::flops(const Shape&) const {
  return 2ull * params_.weights.dim(0) * params_.weights.dim(1);
}

// ---- Conv2d ----

Conv2d::Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels,
               ConvGeometry geom)
    : params_(std::move(name), {out_channels, in_channels, geom.kernel, geom.kernel},
              {out_channels}),
      geom_(geom) {}

Tensor Conv2d::forward(const Tensor& input) {
  Tensor out = conv_apply(input, params_, geom_, cols_);
  input_shape_ = input.shape();
  cached_ = true;
  return out;
}

Tensor Conv2d::infer(const Tensor& input) const {
  std::vector<double> cols;
  return conv_apply(input, params_, geom_, cols);
}

Tensor Conv2d::backward(const Tensor& upstream) {
  if (!cached_) throw StateError("conv2d '" + params_.name + "': backward called before forward");
  const ConvDims d{input_shape_[0], input_shape_[1], input_shape_[2], input_shape_[3],
                   params_.weights.dim(0), geom_.output_extent(input_shape_[2]),
                   geom_.output_extent(input_shape_[3])};
  require_same_shape(upstream.shape(), Shape{d.batch, d.cout, d.ho, d.wo}, "conv2d backward");
  const std::size_t plane = d.ho * d.wo, np = d.batch * plane,
                    rows = d.cin * geom_.kernel * geom_.kernel;
  const auto& k = simd::kernels();

  // Upstream as [cout x (n,p)] for the weight gradient and [(n,p) x cout] for
  // the column gradient.
  std::vector<double> up_mat(d.cout * np);
  std::vector<double> up_t(np * d.cout);
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t co = 0; co < d.cout; ++co) {
      const double* src = upstream.ptr() + (n * d.cout + co) * plane;
      std::copy(src, src + plane, up_mat.data() + co * np + n * plane);
      for (std::size_t p = 0; p < plane; ++p) up_t[(n * plane + p) * d.cout + co] = src[p];
    }
  }
  for (std::size_t co = 0; co < d.cout; ++co) {
    const double* src = up_mat.data() + co * np;
    double s = 0.0;
    for (std::size_t p = 0; p < np; ++p) s += src[p];
    params_.grad_bias[co] += s;
  }

  k.gemm(d.cout, rows, np, up_mat.data(), np, cols_.data(), rows, params_.grad_weights.ptr(), rows,
         true);
  std::vector<double> grad_cols(np * rows);
  k.gemm(np, rows, d.cout, up_t.data(), d.cout, params_.weights.ptr(), rows, grad_cols.data(), rows,
         false);

  Tensor grad_in(input_shape_);
  col2im(grad_cols.data(), d, geom_, grad_in.ptr());
  return grad_in;
}

Shape Conv2d::output_shape(const Shape& input) const {
  if (input.size() != 3 || input[0] != params_.weights.dim(1)) {
    throw DimensionError("conv2d: input " + shape_str(input) + " does not match kernel " +
                         shape_str(params_.weights.shape()));
  }
  return {params_.weights.dim(0), geom_.output_extent(input[1]), geom_.output_extent(input[2])};
}

std::uint64_t Conv2d::flops(const Shape& input) const {
  const Shape out = output_shape(input);
  return 2ull * geom_.kernel * geom_.kernel * params_.weights.dim(1) * params_.weights.dim(0) *
         out[1] * out[2];
}

// ---- Relu ----

Tensor Relu::forward(const Tensor& input) {
  input_ = input;
  cached_ = true;
  return relu(input);
}

Tensor Relu::backward(const Tensor& upstream) {
  if (!cached_) throw StateError("relu: backward called before forward");
  require_same_shape(upstream.shape(), input_.shape(), "relu backward");
  Tensor grad(input_.shape());
  simd::kernels().relu_backward(input_.ptr(), upstream.ptr(), grad.ptr(), grad.size());
  return grad;
}

// ---- AvgPool ----

Tensor AvgPool::forward(const Tensor& input) {
  Tensor out = avg_pool(input);
  input_shape_ = input.shape();
  cached_ = true;
  return out;
}

Tensor AvgPool::backward(const Tensor& upstream) {
  if (!cached_) throw StateError("avg_pool: backward called before forward");
  const std::size_t batch = input_shape_[0], ch = input_shape_[1];
  const std::size_t plane = input_shape_[2] * input_shape_[3];
  require_same_shape(upstream.shape(), Shape{batch, ch}, "avg_pool backward");
  Tensor grad(input_shape_);
  for (std::size_t i = 0; i < batch * ch; ++i) {
    const double g = upstream[i] / static_cast<double>(plane);
    std::fill(grad.ptr() + i * plane, grad.ptr() + (i + 1) * plane, g);
  }
  return grad;
}

Shape AvgPool::output_shape(const Shape& input) const {
  if (input.size() != 3) throw DimensionError("avg_pool: expected [C x H x W], got " + shape_str(input));
  return {input[0]};
}

}  // namespace elf
