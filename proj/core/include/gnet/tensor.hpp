// SPDX-FileCopyrightText: © 2026 The GraftedNet Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gnet {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_volume(const Shape& shape);

// Raised for any shape, extent or divisibility mismatch. `axis` names the
// offending dimension ("channels", "height", "groups", ...).
class DimensionError : public std::invalid_argument {
 public:
  DimensionError(std::string op, std::string axis, const std::string& detail);

  const std::string& op() const noexcept { return op_; }
  const std::string& axis() const noexcept { return axis_; }

 private:
  std::string op_;
  std::string axis_;
};

/// Dense row-major n-dimensional array. Activations use N×C×H×W, conv
/// kernels O×(C/g)×KH×KW. A default-constructed tensor is empty (rank 0,
/// no storage); every constructed tensor has extents >= 1.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
    check_extents();
    data_.assign(shape_volume(shape_), fill);
  }

  BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents();
    if (data_.size() != shape_volume(shape_)) {
      throw DimensionError("tensor", "volume",
                           "data length " + std::to_string(data_.size()) + " does not match shape " +
                               shape_to_string(shape_));
    }
  }

  static BasicTensor zeros(Shape shape) { return BasicTensor(std::move(shape), T(0)); }
  static BasicTensor zeros_like(const BasicTensor& other) { return BasicTensor(other.shape_, T(0)); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  // N×C×H×W element access.
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  // Row-major matrix access for rank-2 tensors.
  T& at(std::size_t r, std::size_t c) noexcept { return data_[r * shape_[1] + c]; }
  const T& at(std::size_t r, std::size_t c) const noexcept { return data_[r * shape_[1] + c]; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  BasicTensor reshaped(Shape shape) const& {
    BasicTensor out = *this;
    return std::move(out).reshaped(std::move(shape));
  }
  BasicTensor reshaped(Shape shape) && {
    if (shape_volume(shape) != data_.size()) {
      throw DimensionError("reshape", "volume",
                           shape_to_string(shape_) + " cannot be viewed as " + shape_to_string(shape));
    }
    shape_ = std::move(shape);
    check_extents();
    return std::move(*this);
  }

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  BasicTensor& operator+=(const BasicTensor& other) {
    require_same_shape(other, "add");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

  void require_same_shape(const BasicTensor& other, const char* op) const {
    if (shape_ != other.shape_) {
      throw DimensionError(op, "shape", shape_to_string(shape_) + " vs " + shape_to_string(other.shape_));
    }
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_extents() const {
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (shape_[i] == 0) {
        throw DimensionError("tensor", "axis " + std::to_string(i), "extent must be >= 1 in " + shape_to_string(shape_));
      }
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

// Requires an N×C×H×W tensor; throws DimensionError naming `op` otherwise.
template <typename T>
void require_rank4(const BasicTensor<T>& t, const char* op) {
  if (t.rank() != 4) {
    throw DimensionError(op, "rank", "expected N×C×H×W, got " + shape_to_string(t.shape()));
  }
}

}  // namespace gnet
