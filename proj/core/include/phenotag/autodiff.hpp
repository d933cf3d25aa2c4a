#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "phenotag/tensor.hpp"

namespace phenotag {

// Tape-free reverse-mode differentiation: every op result keeps shared
// pointers to its inputs plus a closure that pushes its gradient back.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
  bool requires_grad = false;

  Tensor<T>& grad_buffer() {
    if (grad.size() != value.size() || grad.shape() != value.shape()) grad = Tensor<T>::zeros(value.shape());
    return grad;
  }
  bool has_grad() const { return grad.size() == value.size() && grad.shape() == value.shape(); }
};

template <typename T>
class Var {
 public:
  Var() = default;
  // Constant (no gradient).
  explicit Var(Tensor<T> value);
  // Leaf that accumulates gradients, e.g. a model parameter.
  static Var leaf(Tensor<T> value);
  static Var from_node(std::shared_ptr<Node<T>> node) {
    Var v;
    v.node_ = std::move(node);
    return v;
  }

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  Tensor<T>& grad_buffer() { return node_->grad_buffer(); }
  bool has_grad() const { return node_->has_grad(); }
  void zero_grad() { node_->grad = Tensor<T>(); }
  bool requires_grad() const { return node_->requires_grad; }
  const Shape& shape() const { return node_->value.shape(); }
  const std::shared_ptr<Node<T>>& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
  static bool active();

 private:
  bool previous_;
};

// Accumulates d(loss)/d(leaf) into every reachable leaf and releases the
// recorded graph. loss must hold exactly one element.
template <typename T>
void backward(const Var<T>& loss);

// Contiguous row range inside a packed [tokens, features] matrix.
struct Segment {
  std::size_t offset;
  std::size_t length;
};

namespace ops {

template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
// a[n, m] + bias[m] broadcast over rows.
template <typename T> Var<T> add_bias(const Var<T>& a, const Var<T>& bias);
// scale * a + shift
template <typename T> Var<T> affine(const Var<T>& a, double scale, double shift = 0.0);
template <typename T> Var<T> relu(const Var<T>& a);
template <typename T> Var<T> sigmoid(const Var<T>& a);
template <typename T> Var<T> log(const Var<T>& a);
template <typename T> Var<T> log_sigmoid(const Var<T>& a);
template <typename T> Var<T> clamp(const Var<T>& a, double lo, double hi);
// Along the last axis; the row maximum is subtracted before exponentiation.
template <typename T> Var<T> softmax(const Var<T>& a);
template <typename T> Var<T> log_softmax(const Var<T>& a);
template <typename T> Var<T> embedding(const Var<T>& table, std::span<const std::int32_t> ids);
template <typename T> Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps = 1e-5);
// Rank-2 reductions; axis 0 collapses rows, axis 1 collapses columns.
template <typename T> Var<T> mean_axis(const Var<T>& a, int axis);
template <typename T> Var<T> max_axis(const Var<T>& a, int axis);
// Per-segment reductions over rows: [tokens, d] -> [segments, d].
template <typename T> Var<T> segment_mean(const Var<T>& a, std::span<const Segment> segments);
template <typename T> Var<T> segment_max(const Var<T>& a, std::span<const Segment> segments);
template <typename T> Var<T> concat(const Var<T>& a, const Var<T>& b, int axis);
// Row-wise Euclidean distance of two [n, d] matrices -> [n].
template <typename T> Var<T> euclidean_distance(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> rowwise_dot(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sum(const Var<T>& a);
template <typename T> Var<T> mean(const Var<T>& a);
template <typename T> Var<T> gather_rows(const Var<T>& a, std::span<const std::size_t> rows);
// out[i] = a[i, cols[i]]
template <typename T> Var<T> pick(const Var<T>& a, std::span<const std::size_t> cols);
template <typename T> Var<T> reshape(const Var<T>& a, Shape shape);
// Multi-head scaled dot-product self-attention restricted to each segment.
template <typename T>
Var<T> segment_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, std::span<const Segment> segments,
                         std::size_t heads);

}  // namespace ops
}  // namespace phenotag
