// Copyright Contributors to the glr Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "glr/error.hpp"

namespace glr {

using Shape = std::vector<int>;

std::string to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major tensor, last dimension fastest.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape dims, T fill = T(0)) : dims_(std::move(dims)), data_(shape_numel(dims_), fill) {}
  Tensor(Shape dims, std::vector<T> data) : dims_(std::move(dims)), data_(std::move(data)) {
    if (data_.size() != shape_numel(dims_)) {
      throw ShapeError("tensor data size " + std::to_string(data_.size()) + " does not match shape " +
                       to_string(dims_));
    }
  }

  const Shape& dims() const { return dims_; }
  int dim(std::size_t i) const { return dims_.at(i); }
  std::size_t rank() const { return dims_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(int i0, int i1, int i2, int i3) { return data_[offset(i0, i1, i2, i3)]; }
  const T& at(int i0, int i1, int i2, int i3) const { return data_[offset(i0, i1, i2, i3)]; }

  std::size_t offset(int i0, int i1, int i2, int i3) const {
    return ((static_cast<std::size_t>(i0) * dims_[1] + i1) * dims_[2] + i2) * dims_[3] + i3;
  }

  /// Row-major offset of a full index of any rank.
  std::size_t offset(std::initializer_list<int> index) const {
    if (index.size() != dims_.size()) throw ShapeError("index rank does not match " + to_string(dims_));
    std::size_t o = 0;
    std::size_t k = 0;
    for (int i : index) o = o * dims_[k++] + i;
    return o;
  }

  /// Same data, new dims. Throws ShapeError when the element counts differ.
  void reshape(Shape dims) {
    if (shape_numel(dims) != data_.size()) {
      throw ShapeError("cannot view " + to_string(dims_) + " as " + to_string(dims));
    }
    dims_ = std::move(dims);
  }

  Tensor reshaped(Shape dims) const {
    Tensor out = *this;
    out.reshape(std::move(dims));
    return out;
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(dims_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape dims_;
  std::vector<T> data_;
};

inline std::string to_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + to_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

inline void require_shape(const Shape& got, const Shape& want, const std::string& what) {
  if (got != want) throw ShapeError(what + ": expected shape " + to_string(want) + ", got " + to_string(got));
}

}  // namespace glr
