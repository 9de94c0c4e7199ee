// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "elf/binary_io.hpp"

namespace elf {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_size(const Shape& shape);

/// Dense row-major tensor of doubles. The batch, when present, is the leading
/// dimension. Every dimension is positive and `size() == product(shape())`.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);
  Tensor(std::initializer_list<std::size_t> shape, std::initializer_list<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* ptr() { return data_.data(); }
  const double* ptr() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Row `b` of a tensor viewed as [dim(0) x rest].
  std::span<double> row(std::size_t b);
  std::span<const double> row(std::size_t b) const;

  void reshape(Shape shape);
  void fill(double v);
  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Throws DimensionError naming both shapes unless `a == b`.
void require_same_shape(const Shape& a, const Shape& b, const char* context);

// "ELFT" v1: rank, dims as u32, payload as little-endian f64.
void write_tensor(io::ByteWriter& out, const Tensor& t);
Tensor read_tensor(io::ByteReader& in);

}  // namespace elf
