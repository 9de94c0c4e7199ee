// SPDX-License-Identifier: Apache-2.0
#include "elf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>

#include "elf/error.hpp"

namespace elf {

namespace {

constexpr std::uint32_t kTensorVersion = 1;

void check_dims(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have rank >= 1");
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  }
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_dims(shape_);
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  check_dims(shape_);
  if (data_.size() != shape_size(shape_)) {
    throw DimensionError("tensor of shape " + shape_str(shape_) + " needs " +
                         std::to_string(shape_size(shape_)) + " values, got " +
                         std::to_string(data_.size()));
  }
}

Tensor::Tensor(std::initializer_list<std::size_t> shape, std::initializer_list<double> values)
    : Tensor(Shape(shape), std::vector<double>(values)) {}

std::span<double> Tensor::row(std::size_t b) {
  const std::size_t stride = data_.size() / shape_.at(0);
  return std::span<double>(data_).subspan(b * stride, stride);
}

std::span<const double> Tensor::row(std::size_t b) const {
  const std::size_t stride = data_.size() / shape_.at(0);
  return std::span<const double>(data_).subspan(b * stride, stride);
}

void Tensor::reshape(Shape shape) {
  check_dims(shape);
  if (shape_size(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  shape_ = std::move(shape);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void require_same_shape(const Shape& a, const Shape& b, const char* context) {
  if (a != b) {
    throw DimensionError(std::string(context) + ": shape mismatch " + shape_str(a) + " vs " +
                         shape_str(b));
  }
}

void write_tensor(io::ByteWriter& out, const Tensor& t) {
  out.magic("ELFT");
  out.u32(kTensorVersion);
  out.u32(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) out.u32(static_cast<std::uint32_t>(d));
  out.raw(t.ptr(), t.size() * sizeof(double));
}

Tensor read_tensor(io::ByteReader& in) {
  in.expect_magic("ELFT");
  const auto version_at = in.offset();
  if (in.u32("tensor version") != kTensorVersion) {
    throw FormatError("unsupported tensor version", version_at);
  }
  const auto rank_at = in.offset();
  const std::uint32_t rank = in.u32("tensor rank");
  if (rank == 0 || rank > 8) throw FormatError("invalid tensor rank", rank_at);
  Shape shape(rank);
  for (auto& d : shape) {
    const auto at = in.offset();
    d = in.u32("tensor dimension");
    if (d == 0) throw FormatError("zero tensor dimension", at);
  }
  std::vector<double> values(shape_size(shape));
  in.raw(values.data(), values.size() * sizeof(double), "tensor payload");
  return Tensor(std::move(shape), std::move(values));
}

namespace io {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  if (f.bad()) throw IoError("read failed: " + path);
  return bytes;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path);
}

}  // namespace io

}  // namespace elf
