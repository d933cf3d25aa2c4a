#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "phenotag/errors.hpp"

namespace phenotag {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

// Dense row-major tensor of rank 0, 1 or 2.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : shape_{0} {}
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
    check_rank();
  }
  Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), data_(std::move(values)) {
    check_rank();
    if (data_.size() != shape_size(shape_)) {
      throw ShapeError("tensor of shape " + shape_string(shape_) + " given " + std::to_string(data_.size()) +
                       " values");
    }
  }

  static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }
  static Tensor vector(std::vector<T> values) {
    const auto n = values.size();
    return Tensor(Shape{n}, std::move(values));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Rank-2 view: rank 0 and 1 are treated as a single row.
  std::size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
  std::size_t cols() const { return rank() == 0 ? 1 : shape_.back(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  std::span<T> row(std::size_t r) { return std::span<T>(data_).subspan(r * cols(), cols()); }
  std::span<const T> row(std::size_t r) const { return std::span<const T>(data_).subspan(r * cols(), cols()); }

  T item() const {
    if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape_));
    return data_[0];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size()) {
      throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

 private:
  void check_rank() const {
    if (shape_.size() > 2) throw ShapeError("rank > 2 not supported: " + shape_string(shape_));
  }

  Shape shape_;
  std::vector<T> data_;
};

}  // namespace phenotag
