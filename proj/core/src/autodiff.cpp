#include "phenotag/autodiff.hpp"

#include <cmath>
#include <limits>
#include <unordered_set>

namespace phenotag {
namespace {

thread_local bool g_no_grad = false;

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<NodePtr<T>> inputs, std::function<void(Node<T>&)> fn) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  bool needs = false;
  if (!g_no_grad) {
    for (const auto& in : inputs) needs = needs || in->requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(fn);
  }
  return Var<T>::from_node(std::move(node));
}

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

void require_rank2(const char* op, const Shape& s) {
  if (s.size() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(s));
}

// C[n,m] += A[n,k] * B[k,m]
template <typename T>
void gemm_nn(std::size_t n, std::size_t k, std::size_t m, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < n; ++i) {
    T* crow = c + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      if (av == T(0)) continue;
      const T* brow = b + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[n,m] += A[n,k] * B[m,k]^T
template <typename T>
void gemm_nt(std::size_t n, std::size_t k, std::size_t m, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < n; ++i) {
    const T* arow = a + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const T* brow = b + j * k;
      T s = 0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      c[i * m + j] += s;
    }
  }
}

// C[n,m] += A[k,n]^T * B[k,m]
template <typename T>
void gemm_tn(std::size_t n, std::size_t k, std::size_t m, const T* a, const T* b, T* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const T* brow = b + p * m;
    for (std::size_t i = 0; i < n; ++i) {
      const T av = a[p * n + i];
      if (av == T(0)) continue;
      T* crow = c + i * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= 0) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_no_grad) { g_no_grad = true; }
NoGradGuard::~NoGradGuard() { g_no_grad = previous_; }
bool NoGradGuard::active() { return g_no_grad; }

template <typename T>
Var<T>::Var(Tensor<T> value) : node_(std::make_shared<Node<T>>()) {
  node_->value = std::move(value);
}

template <typename T>
Var<T> Var<T>::leaf(Tensor<T> value) {
  Var v(std::move(value));
  v.node_->requires_grad = true;
  return v;
}

template <typename T>
void backward(const Var<T>& loss) {
  if (!loss) throw UsageError("backward on empty variable");
  if (loss.value().size() != 1) {
    throw UsageError("backward requires a scalar loss, got shape " + shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{loss.node().get(), 0}};
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    node->grad_buffer();
    if (node->backward) node->backward(*node);
  }
  for (Node<T>* node : order) {
    if (node->backward) {
      node->inputs.clear();
      node->backward = nullptr;
      node->grad = Tensor<T>();
    }
  }
}

namespace ops {

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) shape_mismatch("matmul", av.shape(), bv.shape());
  const std::size_t n = av.dim(0), k = av.dim(1), m = bv.dim(1);
  Tensor<T> out(Shape{n, m});
  gemm_nn(n, k, m, av.data(), bv.data(), out.data());
  return make_op<T>(std::move(out), {a.node(), b.node()}, [n, k, m](Node<T>& self) {
    auto& A = *self.inputs[0];
    auto& B = *self.inputs[1];
    if (A.requires_grad) gemm_nt(n, m, k, self.grad.data(), B.value.data(), A.grad_buffer().data());
    if (B.requires_grad) gemm_tn(k, n, m, A.value.data(), self.grad.data(), B.grad_buffer().data());
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) shape_mismatch("add", a.shape(), b.shape());
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_op<T>(std::move(out), {a.node(), b.node()}, [](Node<T>& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      auto& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) shape_mismatch("sub", a.shape(), b.shape());
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_op<T>(std::move(out), {a.node(), b.node()}, [](Node<T>& self) {
    if (self.inputs[0]->requires_grad) {
      auto& g = self.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.inputs[1]->requires_grad) {
      auto& g = self.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) shape_mismatch("mul", a.shape(), b.shape());
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_op<T>(std::move(out), {a.node(), b.node()}, [](Node<T>& self) {
    auto& A = *self.inputs[0];
    auto& B = *self.inputs[1];
    if (A.requires_grad) {
      auto& g = A.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * B.value[i];
    }
    if (B.requires_grad) {
      auto& g = B.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * A.value[i];
    }
  });
}

template <typename T>
Var<T> add_bias(const Var<T>& a, const Var<T>& bias) {
  const auto& av = a.value();
  const auto& bv = bias.value();
  if (av.rank() != 2 || bv.rank() != 1 || av.dim(1) != bv.dim(0)) shape_mismatch("add_bias", av.shape(), bv.shape());
  const std::size_t n = av.dim(0), m = av.dim(1);
  Tensor<T> out = av;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] += bv[j];
  }
  return make_op<T>(std::move(out), {a.node(), bias.node()}, [n, m](Node<T>& self) {
    if (self.inputs[0]->requires_grad) {
      auto& g = self.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.inputs[1]->requires_grad) {
      auto& g = self.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) g[j] += self.grad[i * m + j];
      }
    }
  });
}

template <typename T>
Var<T> affine(const Var<T>& a, double scale, double shift) {
  Tensor<T> out = a.value();
  for (auto& x : out.values()) x = static_cast<T>(scale) * x + static_cast<T>(shift);
  return make_op<T>(std::move(out), {a.node()}, [s = static_cast<T>(scale)](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& x : out.values()) x = x > T(0) ? x : T(0);
  return make_op<T>(std::move(out), {a.node()}, [](Node<T>& self) {
    auto& in = *self.inputs[0];
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (in.value[i] > T(0)) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& x : out.values()) x = stable_sigmoid(x);
  return make_op<T>(std::move(out), {a.node()}, [](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T y = self.value[i];
      g[i] += self.grad[i] * y * (T(1) - y);
    }
  });
}

template <typename T>
Var<T> log(const Var<T>& a) {
  static constexpr T kTiny = std::numeric_limits<T>::min();
  Tensor<T> out = a.value();
  for (auto& x : out.values()) x = std::log(std::max(x, kTiny));
  return make_op<T>(std::move(out), {a.node()}, [](Node<T>& self) {
    auto& in = *self.inputs[0];
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / std::max(in.value[i], kTiny);
  });
}

template <typename T>
Var<T> log_sigmoid(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& x : out.values()) x = std::min(x, T(0)) - std::log1p(std::exp(-std::abs(x)));
  return make_op<T>(std::move(out), {a.node()}, [](Node<T>& self) {
    auto& in = *self.inputs[0];
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * stable_sigmoid(-in.value[i]);
  });
}

template <typename T>
Var<T> clamp(const Var<T>& a, double lo, double hi) {
  const T l = static_cast<T>(lo), h = static_cast<T>(hi);
  Tensor<T> out = a.value();
  for (auto& x : out.values()) x = std::clamp(x, l, h);
  return make_op<T>(std::move(out), {a.node()}, [l, h](Node<T>& self) {
    auto& in = *self.inputs[0];
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (in.value[i] >= l && in.value[i] <= h) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> softmax(const Var<T>& a) {
  const std::size_t rows = a.value().rows(), cols = a.value().cols();
  Tensor<T> out = a.value();
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = out.row(r);
    if (row.empty()) continue;
    const T mx = *std::max_element(row.begin(), row.end());
    T total = 0;
    for (auto& x : row) total += (x = std::exp(x - mx));
    for (auto& x : row) x /= total;
  }
  return make_op<T>(std::move(out), {a.node()}, [rows, cols](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      T dot = 0;
      for (std::size_t c = 0; c < cols; ++c) dot += self.grad[r * cols + c] * self.value[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        const auto i = r * cols + c;
        g[i] += self.value[i] * (self.grad[i] - dot);
      }
    }
  });
}

template <typename T>
Var<T> log_softmax(const Var<T>& a) {
  const std::size_t rows = a.value().rows(), cols = a.value().cols();
  Tensor<T> out = a.value();
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = out.row(r);
    if (row.empty()) continue;
    const T mx = *std::max_element(row.begin(), row.end());
    T total = 0;
    for (auto x : row) total += std::exp(x - mx);
    const T lse = mx + std::log(total);
    for (auto& x : row) x -= lse;
  }
  return make_op<T>(std::move(out), {a.node()}, [rows, cols](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      T gsum = 0;
      for (std::size_t c = 0; c < cols; ++c) gsum += self.grad[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        const auto i = r * cols + c;
        g[i] += self.grad[i] - std::exp(self.value[i]) * gsum;
      }
    }
  });
}

template <typename T>
Var<T> embedding(const Var<T>& table, std::span<const std::int32_t> ids) {
  const auto& tv = table.value();
  require_rank2("embedding", tv.shape());
  const std::size_t vocab = tv.dim(0), d = tv.dim(1);
  Tensor<T> out(Shape{ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw UsageError("embedding id " + std::to_string(ids[i]) + " outside table of " + std::to_string(vocab));
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  std::vector<std::int32_t> saved(ids.begin(), ids.end());
  return make_op<T>(std::move(out), {table.node()}, [saved = std::move(saved), d](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < saved.size(); ++i) {
      T* dst = g.data() + static_cast<std::size_t>(saved[i]) * d;
      const T* src = self.grad.data() + i * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
    }
  });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps) {
  const auto& xv = x.value();
  require_rank2("layer_norm", xv.shape());
  const std::size_t n = xv.dim(0), d = xv.dim(1);
  if (gamma.value().size() != d || beta.value().size() != d) shape_mismatch("layer_norm", xv.shape(), gamma.shape());
  Tensor<T> out(xv.shape());
  std::vector<T> xhat(n * d), rstd(n);
  for (std::size_t r = 0; r < n; ++r) {
    const T* row = xv.data() + r * d;
    T mu = 0;
    for (std::size_t c = 0; c < d; ++c) mu += row[c];
    mu /= static_cast<T>(d);
    T var = 0;
    for (std::size_t c = 0; c < d; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<T>(d);
    rstd[r] = T(1) / std::sqrt(var + static_cast<T>(eps));
    for (std::size_t c = 0; c < d; ++c) {
      const T h = (row[c] - mu) * rstd[r];
      xhat[r * d + c] = h;
      out[r * d + c] = h * gamma.value()[c] + beta.value()[c];
    }
  }
  return make_op<T>(std::move(out), {x.node(), gamma.node(), beta.node()},
                    [n, d, xhat = std::move(xhat), rstd = std::move(rstd)](Node<T>& self) {
                      auto& X = *self.inputs[0];
                      auto& G = *self.inputs[1];
                      auto& B = *self.inputs[2];
                      if (G.requires_grad || B.requires_grad) {
                        auto& gg = G.grad_buffer();
                        auto& gb = B.grad_buffer();
                        for (std::size_t r = 0; r < n; ++r) {
                          for (std::size_t c = 0; c < d; ++c) {
                            gg[c] += self.grad[r * d + c] * xhat[r * d + c];
                            gb[c] += self.grad[r * d + c];
                          }
                        }
                      }
                      if (!X.requires_grad) return;
                      auto& gx = X.grad_buffer();
                      std::vector<T> dxhat(d);
                      for (std::size_t r = 0; r < n; ++r) {
                        T m1 = 0, m2 = 0;
                        for (std::size_t c = 0; c < d; ++c) {
                          dxhat[c] = self.grad[r * d + c] * G.value[c];
                          m1 += dxhat[c];
                          m2 += dxhat[c] * xhat[r * d + c];
                        }
                        m1 /= static_cast<T>(d);
                        m2 /= static_cast<T>(d);
                        for (std::size_t c = 0; c < d; ++c) {
                          gx[r * d + c] += rstd[r] * (dxhat[c] - m1 - xhat[r * d + c] * m2);
                        }
                      }
                    });
}

template <typename T>
Var<T> mean_axis(const Var<T>& a, int axis) {
  const auto& av = a.value();
  require_rank2("mean_axis", av.shape());
  const std::size_t n = av.dim(0), m = av.dim(1);
  if (axis != 0 && axis != 1) throw ShapeError("mean_axis: axis must be 0 or 1");
  if ((axis == 0 ? n : m) == 0) throw ShapeError("mean_axis: empty reduction over " + shape_string(av.shape()));
  Tensor<T> out(Shape{axis == 0 ? m : n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out[axis == 0 ? j : i] += av[i * m + j];
  }
  const T denom = static_cast<T>(axis == 0 ? n : m);
  for (auto& x : out.values()) x /= denom;
  return make_op<T>(std::move(out), {a.node()}, [n, m, axis, denom](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) g[i * m + j] += self.grad[axis == 0 ? j : i] / denom;
    }
  });
}

template <typename T>
Var<T> max_axis(const Var<T>& a, int axis) {
  const auto& av = a.value();
  require_rank2("max_axis", av.shape());
  const std::size_t n = av.dim(0), m = av.dim(1);
  if (axis != 0 && axis != 1) throw ShapeError("max_axis: axis must be 0 or 1");
  if ((axis == 0 ? n : m) == 0) throw ShapeError("max_axis: empty reduction over " + shape_string(av.shape()));
  const std::size_t outer = axis == 0 ? m : n;
  Tensor<T> out(Shape{outer});
  std::vector<std::size_t> arg(outer);
  for (std::size_t o = 0; o < outer; ++o) {
    const std::size_t len = axis == 0 ? n : m;
    std::size_t best = axis == 0 ? o : o * m;
    for (std::size_t t = 1; t < len; ++t) {
      const std::size_t idx = axis == 0 ? t * m + o : o * m + t;
      if (av[idx] > av[best]) best = idx;
    }
    arg[o] = best;
    out[o] = av[best];
  }
  return make_op<T>(std::move(out), {a.node()}, [arg = std::move(arg)](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t o = 0; o < arg.size(); ++o) g[arg[o]] += self.grad[o];
  });
}

template <typename T>
Var<T> segment_mean(const Var<T>& a, std::span<const Segment> segments) {
  const auto& av = a.value();
  require_rank2("segment_mean", av.shape());
  const std::size_t d = av.dim(1);
  std::vector<Segment> segs(segments.begin(), segments.end());
  Tensor<T> out(Shape{segs.size(), d});
  for (std::size_t s = 0; s < segs.size(); ++s) {
    if (segs[s].length == 0 || segs[s].offset + segs[s].length > av.dim(0)) {
      throw ShapeError("segment_mean: segment outside " + shape_string(av.shape()));
    }
    for (std::size_t t = 0; t < segs[s].length; ++t) {
      for (std::size_t c = 0; c < d; ++c) out[s * d + c] += av[(segs[s].offset + t) * d + c];
    }
    for (std::size_t c = 0; c < d; ++c) out[s * d + c] /= static_cast<T>(segs[s].length);
  }
  return make_op<T>(std::move(out), {a.node()}, [segs = std::move(segs), d](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t s = 0; s < segs.size(); ++s) {
      const T inv = T(1) / static_cast<T>(segs[s].length);
      for (std::size_t t = 0; t < segs[s].length; ++t) {
        for (std::size_t c = 0; c < d; ++c) g[(segs[s].offset + t) * d + c] += self.grad[s * d + c] * inv;
      }
    }
  });
}

template <typename T>
Var<T> segment_max(const Var<T>& a, std::span<const Segment> segments) {
  const auto& av = a.value();
  require_rank2("segment_max", av.shape());
  const std::size_t d = av.dim(1);
  Tensor<T> out(Shape{segments.size(), d});
  std::vector<std::size_t> arg(segments.size() * d);
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const auto seg = segments[s];
    if (seg.length == 0 || seg.offset + seg.length > av.dim(0)) {
      throw ShapeError("segment_max: segment outside " + shape_string(av.shape()));
    }
    for (std::size_t c = 0; c < d; ++c) {
      std::size_t best = seg.offset * d + c;
      for (std::size_t t = 1; t < seg.length; ++t) {
        const std::size_t idx = (seg.offset + t) * d + c;
        if (av[idx] > av[best]) best = idx;
      }
      arg[s * d + c] = best;
      out[s * d + c] = av[best];
    }
  }
  return make_op<T>(std::move(out), {a.node()}, [arg = std::move(arg)](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < arg.size(); ++i) g[arg[i]] += self.grad[i];
  });
}

template <typename T>
Var<T> concat(const Var<T>& a, const Var<T>& b, int axis) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() != bv.rank() || av.rank() == 0) shape_mismatch("concat", av.shape(), bv.shape());
  if (av.rank() == 1) {
    if (axis != 0) throw ShapeError("concat: vectors only concatenate along axis 0");
    std::vector<T> values(av.values().begin(), av.values().end());
    values.insert(values.end(), bv.values().begin(), bv.values().end());
    const std::size_t na = av.size();
    return make_op<T>(Tensor<T>::vector(std::move(values)), {a.node(), b.node()}, [na](Node<T>& self) {
      if (self.inputs[0]->requires_grad) {
        auto& g = self.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < na; ++i) g[i] += self.grad[i];
      }
      if (self.inputs[1]->requires_grad) {
        auto& g = self.inputs[1]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[na + i];
      }
    });
  }
  if (axis == 0) {
    if (av.dim(1) != bv.dim(1)) shape_mismatch("concat", av.shape(), bv.shape());
    std::vector<T> values(av.values().begin(), av.values().end());
    values.insert(values.end(), bv.values().begin(), bv.values().end());
    const std::size_t na = av.size();
    return make_op<T>(Tensor<T>(Shape{av.dim(0) + bv.dim(0), av.dim(1)}, std::move(values)), {a.node(), b.node()},
                      [na](Node<T>& self) {
                        if (self.inputs[0]->requires_grad) {
                          auto& g = self.inputs[0]->grad_buffer();
                          for (std::size_t i = 0; i < na; ++i) g[i] += self.grad[i];
                        }
                        if (self.inputs[1]->requires_grad) {
                          auto& g = self.inputs[1]->grad_buffer();
                          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[na + i];
                        }
                      });
  }
  if (axis != 1 || av.dim(0) != bv.dim(0)) shape_mismatch("concat", av.shape(), bv.shape());
  const std::size_t n = av.dim(0), ma = av.dim(1), mb = bv.dim(1), m = ma + mb;
  Tensor<T> out(Shape{n, m});
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(av.data() + r * ma, ma, out.data() + r * m);
    std::copy_n(bv.data() + r * mb, mb, out.data() + r * m + ma);
  }
  return make_op<T>(std::move(out), {a.node(), b.node()}, [n, ma, mb, m](Node<T>& self) {
    if (self.inputs[0]->requires_grad) {
      auto& g = self.inputs[0]->grad_buffer();
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < ma; ++c) g[r * ma + c] += self.grad[r * m + c];
      }
    }
    if (self.inputs[1]->requires_grad) {
      auto& g = self.inputs[1]->grad_buffer();
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < mb; ++c) g[r * mb + c] += self.grad[r * m + ma + c];
      }
    }
  });
}

template <typename T>
Var<T> euclidean_distance(const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) shape_mismatch("euclidean_distance", a.shape(), b.shape());
  const std::size_t n = a.value().rows(), d = a.value().cols();
  Tensor<T> out(Shape{n});
  for (std::size_t r = 0; r < n; ++r) {
    T s = 0;
    for (std::size_t c = 0; c < d; ++c) {
      const T diff = a.value()[r * d + c] - b.value()[r * d + c];
      s += diff * diff;
    }
    out[r] = std::sqrt(s);
  }
  return make_op<T>(std::move(out), {a.node(), b.node()}, [n, d](Node<T>& self) {
    auto& A = *self.inputs[0];
    auto& B = *self.inputs[1];
    for (std::size_t r = 0; r < n; ++r) {
      const T dist = self.value[r];
      if (dist == T(0)) continue;
      const T scale = self.grad[r] / dist;
      for (std::size_t c = 0; c < d; ++c) {
        const auto i = r * d + c;
        const T diff = A.value[i] - B.value[i];
        if (A.requires_grad) A.grad_buffer()[i] += scale * diff;
        if (B.requires_grad) B.grad_buffer()[i] -= scale * diff;
      }
    }
  });
}

template <typename T>
Var<T> rowwise_dot(const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) shape_mismatch("rowwise_dot", a.shape(), b.shape());
  const std::size_t n = a.value().rows(), d = a.value().cols();
  Tensor<T> out(Shape{n});
  for (std::size_t r = 0; r < n; ++r) {
    T s = 0;
    for (std::size_t c = 0; c < d; ++c) s += a.value()[r * d + c] * b.value()[r * d + c];
    out[r] = s;
  }
  return make_op<T>(std::move(out), {a.node(), b.node()}, [n, d](Node<T>& self) {
    auto& A = *self.inputs[0];
    auto& B = *self.inputs[1];
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < d; ++c) {
        const auto i = r * d + c;
        if (A.requires_grad) A.grad_buffer()[i] += self.grad[r] * B.value[i];
        if (B.requires_grad) B.grad_buffer()[i] += self.grad[r] * A.value[i];
      }
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T s = 0;
  for (auto x : a.value().values()) s += x;
  return make_op<T>(Tensor<T>::scalar(s), {a.node()}, [](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (auto& x : g.values()) x += self.grad[0];
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean of empty tensor");
  return affine(sum(a), 1.0 / static_cast<double>(n));
}

template <typename T>
Var<T> gather_rows(const Var<T>& a, std::span<const std::size_t> rows) {
  const auto& av = a.value();
  require_rank2("gather_rows", av.shape());
  const std::size_t d = av.dim(1);
  Tensor<T> out(Shape{rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= av.dim(0)) throw ShapeError("gather_rows: row " + std::to_string(rows[i]) + " outside " + shape_string(av.shape()));
    std::copy_n(av.data() + rows[i] * d, d, out.data() + i * d);
  }
  std::vector<std::size_t> saved(rows.begin(), rows.end());
  return make_op<T>(std::move(out), {a.node()}, [saved = std::move(saved), d](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < saved.size(); ++i) {
      for (std::size_t c = 0; c < d; ++c) g[saved[i] * d + c] += self.grad[i * d + c];
    }
  });
}

template <typename T>
Var<T> pick(const Var<T>& a, std::span<const std::size_t> cols) {
  const auto& av = a.value();
  require_rank2("pick", av.shape());
  const std::size_t n = av.dim(0), m = av.dim(1);
  if (cols.size() != n) throw ShapeError("pick: " + std::to_string(cols.size()) + " indices for " + shape_string(av.shape()));
  Tensor<T> out(Shape{n});
  for (std::size_t r = 0; r < n; ++r) {
    if (cols[r] >= m) throw ShapeError("pick: column " + std::to_string(cols[r]) + " outside " + shape_string(av.shape()));
    out[r] = av[r * m + cols[r]];
  }
  std::vector<std::size_t> saved(cols.begin(), cols.end());
  return make_op<T>(std::move(out), {a.node()}, [saved = std::move(saved), m](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < saved.size(); ++r) g[r * m + saved[r]] += self.grad[r];
  });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  return make_op<T>(a.value().reshaped(std::move(shape)), {a.node()}, [](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
Var<T> segment_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, std::span<const Segment> segments,
                         std::size_t heads) {
  const auto& Q = q.value();
  const auto& K = k.value();
  const auto& V = v.value();
  require_rank2("segment_attention", Q.shape());
  if (K.shape() != Q.shape() || V.shape() != Q.shape()) shape_mismatch("segment_attention", Q.shape(), K.shape());
  const std::size_t width = Q.dim(1);
  if (heads == 0 || width % heads != 0) {
    throw ShapeError("segment_attention: width " + std::to_string(width) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  const std::size_t dh = width / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  std::vector<Segment> segs(segments.begin(), segments.end());
  std::vector<std::size_t> prob_offset(segs.size());
  std::size_t total = 0;
  for (std::size_t s = 0; s < segs.size(); ++s) {
    if (segs[s].offset + segs[s].length > Q.dim(0)) throw ShapeError("segment_attention: segment outside input");
    prob_offset[s] = total;
    total += segs[s].length * segs[s].length * heads;
  }
  std::vector<T> probs(total);
  Tensor<T> out(Q.shape());
  for (std::size_t s = 0; s < segs.size(); ++s) {
    const std::size_t o = segs[s].offset, len = segs[s].length;
    for (std::size_t h = 0; h < heads; ++h) {
      T* P = probs.data() + prob_offset[s] + h * len * len;
      const std::size_t c0 = h * dh;
      for (std::size_t i = 0; i < len; ++i) {
        const T* qi = Q.data() + (o + i) * width + c0;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < len; ++j) {
          const T* kj = K.data() + (o + j) * width + c0;
          T sc = 0;
          for (std::size_t c = 0; c < dh; ++c) sc += qi[c] * kj[c];
          P[i * len + j] = sc * scale;
          mx = std::max(mx, P[i * len + j]);
        }
        T z = 0;
        for (std::size_t j = 0; j < len; ++j) z += (P[i * len + j] = std::exp(P[i * len + j] - mx));
        T* oi = out.data() + (o + i) * width + c0;
        for (std::size_t j = 0; j < len; ++j) {
          P[i * len + j] /= z;
          const T* vj = V.data() + (o + j) * width + c0;
          const T p = P[i * len + j];
          for (std::size_t c = 0; c < dh; ++c) oi[c] += p * vj[c];
        }
      }
    }
  }
  return make_op<T>(
      std::move(out), {q.node(), k.node(), v.node()},
      [segs = std::move(segs), prob_offset = std::move(prob_offset), probs = std::move(probs), heads, dh, width,
       scale](Node<T>& self) {
        auto& Qn = *self.inputs[0];
        auto& Kn = *self.inputs[1];
        auto& Vn = *self.inputs[2];
        T* gq = Qn.requires_grad ? Qn.grad_buffer().data() : nullptr;
        T* gk = Kn.requires_grad ? Kn.grad_buffer().data() : nullptr;
        T* gv = Vn.requires_grad ? Vn.grad_buffer().data() : nullptr;
        std::vector<T> dP, dS;
        for (std::size_t s = 0; s < segs.size(); ++s) {
          const std::size_t o = segs[s].offset, len = segs[s].length;
          dP.assign(len * len, T(0));
          dS.assign(len * len, T(0));
          for (std::size_t h = 0; h < heads; ++h) {
            const T* P = probs.data() + prob_offset[s] + h * len * len;
            const std::size_t c0 = h * dh;
            for (std::size_t i = 0; i < len; ++i) {
              const T* gi = self.grad.data() + (o + i) * width + c0;
              for (std::size_t j = 0; j < len; ++j) {
                const T* vj = Vn.value.data() + (o + j) * width + c0;
                T acc = 0;
                for (std::size_t c = 0; c < dh; ++c) acc += gi[c] * vj[c];
                dP[i * len + j] = acc;
                if (gv) {
                  T* gvj = gv + (o + j) * width + c0;
                  const T p = P[i * len + j];
                  for (std::size_t c = 0; c < dh; ++c) gvj[c] += p * gi[c];
                }
              }
              T rowdot = 0;
              for (std::size_t j = 0; j < len; ++j) rowdot += P[i * len + j] * dP[i * len + j];
              for (std::size_t j = 0; j < len; ++j) dS[i * len + j] = P[i * len + j] * (dP[i * len + j] - rowdot) * scale;
            }
            for (std::size_t i = 0; i < len; ++i) {
              const T* qi = Qn.value.data() + (o + i) * width + c0;
              T* gqi = gq ? gq + (o + i) * width + c0 : nullptr;
              for (std::size_t j = 0; j < len; ++j) {
                const T ds = dS[i * len + j];
                if (ds == T(0)) continue;
                const T* kj = Kn.value.data() + (o + j) * width + c0;
                if (gqi) {
                  for (std::size_t c = 0; c < dh; ++c) gqi[c] += ds * kj[c];
                }
                if (gk) {
                  T* gkj = gk + (o + j) * width + c0;
                  for (std::size_t c = 0; c < dh; ++c) gkj[c] += ds * qi[c];
                }
              }
            }
          }
        }
      });
}

}  // namespace ops

#define PHENOTAG_INSTANTIATE_AUTODIFF(T)                                                                      \
  template class Var<T>;                                                                                      \
  template void backward<T>(const Var<T>&);                                                                   \
  namespace ops {                                                                                             \
  template Var<T> matmul<T>(const Var<T>&, const Var<T>&);                                                    \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                                       \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                                       \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                                       \
  template Var<T> add_bias<T>(const Var<T>&, const Var<T>&);                                                  \
  template Var<T> affine<T>(const Var<T>&, double, double);                                                   \
  template Var<T> relu<T>(const Var<T>&);                                                                     \
  template Var<T> sigmoid<T>(const Var<T>&);                                                                  \
  template Var<T> log<T>(const Var<T>&);                                                                      \
  template Var<T> log_sigmoid<T>(const Var<T>&);                                                              \
  template Var<T> clamp<T>(const Var<T>&, double, double);                                                    \
  template Var<T> softmax<T>(const Var<T>&);                                                                  \
  template Var<T> log_softmax<T>(const Var<T>&);                                                              \
  template Var<T> embedding<T>(const Var<T>&, std::span<const std::int32_t>);                                 \
  template Var<T> layer_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&, double);                         \
  template Var<T> mean_axis<T>(const Var<T>&, int);                                                           \
  template Var<T> max_axis<T>(const Var<T>&, int);                                                            \
  template Var<T> segment_mean<T>(const Var<T>&, std::span<const Segment>);                                   \
  template Var<T> segment_max<T>(const Var<T>&, std::span<const Segment>);                                    \
  template Var<T> concat<T>(const Var<T>&, const Var<T>&, int);                                               \
  template Var<T> euclidean_distance<T>(const Var<T>&, const Var<T>&);                                        \
  template Var<T> rowwise_dot<T>(const Var<T>&, const Var<T>&);                                               \
  template Var<T> sum<T>(const Var<T>&);                                                                      \
  template Var<T> mean<T>(const Var<T>&);                                                                     \
  template Var<T> gather_rows<T>(const Var<T>&, std::span<const std::size_t>);                                \
  template Var<T> pick<T>(const Var<T>&, std::span<const std::size_t>);                                       \
  template Var<T> reshape<T>(const Var<T>&, Shape);                                                           \
  template Var<T> segment_attention<T>(const Var<T>&, const Var<T>&, const Var<T>&, std::span<const Segment>, \
                                       std::size_t);                                                          \
  }

PHENOTAG_INSTANTIATE_AUTODIFF(float)
PHENOTAG_INSTANTIATE_AUTODIFF(double)

}  // namespace phenotag
