#pragma once

// Reverse-mode automatic differentiation over dense row-major tensors.
// A dynamic tape is rebuilt per forward pass; backward() walks it once in
// reverse topological order. All scalars are 64-bit floats.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "madi/util.hpp"

namespace madi {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized lazily during backward
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Accumulates this node's grad into its parents' grads.
  std::function<void(TensorNode&)> backprop;

  std::size_t size() const { return value.size(); }
  bool is_leaf() const { return parents.empty(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false) {
    if (shape_size(shape) != values.size())
      throw std::invalid_argument("Tensor::from: shape/value size mismatch");
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(n);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::size_t sz = shape_size(shape);
    return from(std::move(shape), std::vector<double>(sz, 0.0), requires_grad);
  }

  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    std::size_t sz = shape_size(shape);
    return from(std::move(shape), std::vector<double>(sz, v), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  static Tensor randn(Shape shape, Rng& rng, double stddev,
                      bool requires_grad = true) {
    std::size_t sz = shape_size(shape);
    std::vector<double> v(sz);
    for (auto& x : v) x = stddev * rng.gaussian();
    return from(std::move(shape), std::move(v), requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rows() const { return node_->shape.at(0); }
  std::size_t cols() const { return node_->shape.at(1); }
  std::vector<double>& values() { return node_->value; }
  const std::vector<double>& values() const { return node_->value; }
  std::vector<double>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool requires_grad() const { return node_->requires_grad; }
  const std::shared_ptr<TensorNode>& node() const { return node_; }

  double item() const {
    if (size() != 1) throw std::invalid_argument("item(): tensor not scalar");
    return node_->value[0];
  }

  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

  // Same values, no graph links, no grad requirement.
  Tensor detach() const {
    return from(node_->shape, node_->value, false);
  }

  void backward() const;

 private:
  std::shared_ptr<TensorNode> node_;
};

namespace detail {

inline std::shared_ptr<TensorNode> make_node(
    Shape shape, std::vector<double> value,
    std::vector<std::shared_ptr<TensorNode>> parents) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  return n;
}

inline void check_same_shape(const Tensor& a, const Tensor& b,
                             const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace detail

inline void Tensor::backward() const {
  if (!defined()) throw std::invalid_argument("backward: undefined tensor");
  if (size() != 1) throw std::invalid_argument("backward: root must be scalar");
  if (node_->is_leaf() && !node_->requires_grad)
    throw std::invalid_argument("backward: root is detached from any graph");

  // Reverse topological order via iterative DFS.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      TensorNode* p = n->parents[idx++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  // Interior grads are scratch per call; leaf (parameter) grads accumulate
  // until explicitly zeroed.
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (!n->is_leaf())
      n->grad.assign(n->value.size(), 0.0);
    else
      n->ensure_grad();
  }
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

// ---------------------------------------------------------------------------
// Elementwise ops

inline Tensor operator+(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = a.values()[i] + b.values()[i];
  auto n = detail::make_node(a.shape(), std::move(v), {a.node(), b.node()});
  n->backprop = [](TensorNode& self) {
    for (int k = 0; k < 2; ++k) {
      auto& p = self.parents[k];
      if (!p->requires_grad) continue;
      p->ensure_grad();
      for (std::size_t i = 0; i < self.size(); ++i) p->grad[i] += self.grad[i];
    }
  };
  return Tensor(n);
}

inline Tensor operator-(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = a.values()[i] - b.values()[i];
  auto n = detail::make_node(a.shape(), std::move(v), {a.node(), b.node()});
  n->backprop = [](TensorNode& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < self.size(); ++i) pa->grad[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < self.size(); ++i) pb->grad[i] -= self.grad[i];
    }
  };
  return Tensor(n);
}

inline Tensor operator*(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = a.values()[i] * b.values()[i];
  auto n = detail::make_node(a.shape(), std::move(v), {a.node(), b.node()});
  n->backprop = [](TensorNode& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < self.size(); ++i)
        pa->grad[i] += self.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < self.size(); ++i)
        pb->grad[i] += self.grad[i] * pa->value[i];
    }
  };
  return Tensor(n);
}

inline Tensor operator/(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "div");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = a.values()[i] / b.values()[i];
  auto n = detail::make_node(a.shape(), std::move(v), {a.node(), b.node()});
  n->backprop = [](TensorNode& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < self.size(); ++i)
        pa->grad[i] += self.grad[i] / pb->value[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < self.size(); ++i)
        pb->grad[i] -= self.grad[i] * pa->value[i] / (pb->value[i] * pb->value[i]);
    }
  };
  return Tensor(n);
}

inline Tensor scale(const Tensor& a, double c) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = c * a.values()[i];
  auto n = detail::make_node(a.shape(), std::move(v), {a.node()});
  n->backprop = [c](TensorNode& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < self.size(); ++i)
      p->grad[i] += c * self.grad[i];
  };
  return Tensor(n);
}

inline Tensor operator*(const Tensor& a, double c) { return scale(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }
inline Tensor operator-(const Tensor& a) { return scale(a, -1.0); }

inline Tensor shift(const Tensor& a, double c) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] + c;
  auto n = detail::make_node(a.shape(), std::move(v), {a.node()});
  n->backprop = [](TensorNode& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < self.size(); ++i) p->grad[i] += self.grad[i];
  };
  return Tensor(n);
}

inline Tensor operator+(const Tensor& a, double c) { return shift(a, c); }
inline Tensor operator-(const Tensor& a, double c) { return shift(a, -c); }

namespace detail {

template <typename F, typename DF>
Tensor unary_op(const Tensor& a, F fwd, DF dfwd) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = fwd(a.values()[i]);
  auto n = make_node(a.shape(), std::move(v), {a.node()});
  n->backprop = [dfwd](TensorNode& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < self.size(); ++i)
      p->grad[i] += self.grad[i] * dfwd(p->value[i], self.value[i]);
  };
  return Tensor(n);
}

}  // namespace detail

inline Tensor exp(const Tensor& a) {
  return detail::unary_op(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

inline Tensor log(const Tensor& a) {
  return detail::unary_op(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

inline Tensor sqrt(const Tensor& a) {
  return detail::unary_op(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

inline Tensor tanh(const Tensor& a) {
  return detail::unary_op(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

inline Tensor relu(const Tensor& a) {
  return detail::unary_op(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

// Elementwise log(exp(a) + exp(b)), stable near kLogZero.
inline Tensor logaddexp(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "logaddexp");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double x = a.values()[i], y = b.values()[i];
    double m = std::max(x, y);
    v[i] = m + std::log(std::exp(x - m) + std::exp(y - m));
  }
  auto n = detail::make_node(a.shape(), std::move(v), {a.node(), b.node()});
  n->backprop = [](TensorNode& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    for (std::size_t i = 0; i < self.size(); ++i) {
      double g = self.grad[i];
      if (g == 0.0) continue;
      double out = self.value[i];
      if (pa->requires_grad) {
        pa->ensure_grad();
        pa->grad[i] += g * std::exp(pa->value[i] - out);
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        pb->grad[i] += g * std::exp(pb->value[i] - out);
      }
    }
  };
  return Tensor(n);
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum(const Tensor& a) {
  double s = std::accumulate(a.values().begin(), a.values().end(), 0.0);
  auto n = detail::make_node({1}, {s}, {a.node()});
  n->backprop = [](TensorNode& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (auto& g : p->grad) g += self.grad[0];
  };
  return Tensor(n);
}

inline Tensor mean(const Tensor& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

inline Tensor dot(const Tensor& a, const Tensor& b) {
  return sum(a * b);
}

// ---------------------------------------------------------------------------
// Linear algebra (2-D)

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.rows())
    throw std::invalid_argument("matmul: incompatible shapes");
  std::size_t m = a.rows(), k = a.cols(), n2 = b.cols();
  std::vector<double> v(m * n2, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bv.data() + p * n2;
      double* crow = v.data() + i * n2;
      for (std::size_t j = 0; j < n2; ++j) crow[j] += aip * brow[j];
    }
  auto n = detail::make_node({m, n2}, std::move(v), {a.node(), b.node()});
  n->backprop = [m, k, n2](TensorNode& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) {
      pa->ensure_grad();
      // dA = dC * B^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          const double* grow = self.grad.data() + i * n2;
          const double* brow = pb->value.data() + p * n2;
          for (std::size_t j = 0; j < n2; ++j) s += grow[j] * brow[j];
          pa->grad[i * k + p] += s;
        }
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      // dB = A^T * dC
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double aip = pa->value[i * k + p];
          if (aip == 0.0) continue;
          const double* grow = self.grad.data() + i * n2;
          double* brow = pb->grad.data() + p * n2;
          for (std::size_t j = 0; j < n2; ++j) brow[j] += aip * grow[j];
        }
    }
  };
  return Tensor(n);
}

inline Tensor transpose(const Tensor& a) {
  if (a.shape().size() != 2)
    throw std::invalid_argument("transpose: need 2-D tensor");
  std::size_t m = a.rows(), n2 = a.cols();
  std::vector<double> v(m * n2);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n2; ++j) v[j * m + i] = a.values()[i * n2 + j];
  auto n = detail::make_node({n2, m}, std::move(v), {a.node()});
  n->backprop = [m, n2](TensorNode& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n2; ++j)
        p->grad[i * n2 + j] += self.grad[j * m + i];
  };
  return Tensor(n);
}

// Add a length-C row vector to every row of an R x C matrix.
inline Tensor add_rowwise(const Tensor& x, const Tensor& b) {
  if (x.shape().size() != 2 || b.size() != x.cols())
    throw std::invalid_argument("add_rowwise: shape mismatch");
  std::size_t r = x.rows(), c = x.cols();
  std::vector<double> v(x.values());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) v[i * c + j] += b.values()[j];
  auto n = detail::make_node(x.shape(), std::move(v), {x.node(), b.node()});
  n->backprop = [r, c](TensorNode& self) {
    auto& px = self.parents[0];
    auto& pb = self.parents[1];
    if (px->requires_grad) {
      px->ensure_grad();
      for (std::size_t i = 0; i < self.size(); ++i)
        px->grad[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
          pb->grad[j] += self.grad[i * c + j];
    }
  };
  return Tensor(n);
}

// ---------------------------------------------------------------------------
// Row-wise softmax family

inline Tensor log_softmax_rows(const Tensor& x) {
  if (x.shape().size() != 2)
    throw std::invalid_argument("log_softmax_rows: need 2-D tensor");
  std::size_t r = x.rows(), c = x.cols();
  std::vector<double> v(x.size());
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = x.values().data() + i * c;
    double m = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - m);
    double lz = m + std::log(z);
    for (std::size_t j = 0; j < c; ++j) v[i * c + j] = row[j] - lz;
  }
  auto n = detail::make_node(x.shape(), std::move(v), {x.node()});
  n->backprop = [r, c](TensorNode& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < r; ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < c; ++j) gsum += self.grad[i * c + j];
      for (std::size_t j = 0; j < c; ++j)
        p->grad[i * c + j] +=
            self.grad[i * c + j] - std::exp(self.value[i * c + j]) * gsum;
    }
  };
  return Tensor(n);
}

inline Tensor softmax_rows(const Tensor& x) {
  if (x.shape().size() != 2)
    throw std::invalid_argument("softmax_rows: need 2-D tensor");
  std::size_t r = x.rows(), c = x.cols();
  std::vector<double> v(x.size());
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = x.values().data() + i * c;
    double m = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      v[i * c + j] = std::exp(row[j] - m);
      z += v[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) v[i * c + j] /= z;
  }
  auto n = detail::make_node(x.shape(), std::move(v), {x.node()});
  n->backprop = [r, c](TensorNode& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < r; ++i) {
      double gy = 0.0;
      for (std::size_t j = 0; j < c; ++j)
        gy += self.grad[i * c + j] * self.value[i * c + j];
      for (std::size_t j = 0; j < c; ++j)
        p->grad[i * c + j] +=
            self.value[i * c + j] * (self.grad[i * c + j] - gy);
    }
  };
  return Tensor(n);
}

// Per-row layer normalization with learned per-feature gain and bias.
inline Tensor layer_norm_rows(const Tensor& x, const Tensor& gain,
                              const Tensor& bias) {
  if (x.shape().size() != 2 || gain.size() != x.cols() ||
      bias.size() != x.cols())
    throw std::invalid_argument("layer_norm_rows: shape mismatch");
  constexpr double eps = 1e-5;
  std::size_t r = x.rows(), c = x.cols();
  std::vector<double> v(x.size());
  std::vector<double> inv_sigma(r), mu(r);
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = x.values().data() + i * c;
    double m = std::accumulate(row, row + c, 0.0) / c;
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - m) * (row[j] - m);
    var /= c;
    mu[i] = m;
    inv_sigma[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j)
      v[i * c + j] =
          gain.values()[j] * (row[j] - m) * inv_sigma[i] + bias.values()[j];
  }
  auto n = detail::make_node(x.shape(), std::move(v),
                             {x.node(), gain.node(), bias.node()});
  n->backprop = [r, c, mu, inv_sigma](TensorNode& self) {
    auto& px = self.parents[0];
    auto& pg = self.parents[1];
    auto& pb = self.parents[2];
    std::vector<double> xhat(c), dxhat(c);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        xhat[j] = (px->value[i * c + j] - mu[i]) * inv_sigma[i];
        dxhat[j] = self.grad[i * c + j] * pg->value[j];
      }
      if (pg->requires_grad) {
        pg->ensure_grad();
        for (std::size_t j = 0; j < c; ++j)
          pg->grad[j] += self.grad[i * c + j] * xhat[j];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (std::size_t j = 0; j < c; ++j) pb->grad[j] += self.grad[i * c + j];
      }
      if (px->requires_grad) {
        px->ensure_grad();
        double mdx = 0.0, mdxx = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          mdx += dxhat[j];
          mdxx += dxhat[j] * xhat[j];
        }
        mdx /= c;
        mdxx /= c;
        for (std::size_t j = 0; j < c; ++j)
          px->grad[i * c + j] +=
              (dxhat[j] - mdx - xhat[j] * mdxx) * inv_sigma[i];
      }
    }
  };
  return Tensor(n);
}

// ---------------------------------------------------------------------------
// Indexing / reshaping

inline Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& idx) {
  if (x.shape().size() != 2)
    throw std::invalid_argument("gather_rows: need 2-D tensor");
  std::size_t c = x.cols();
  for (std::size_t i : idx)
    if (i >= x.rows()) throw std::out_of_range("gather_rows: index");
  std::vector<double> v(idx.size() * c);
  for (std::size_t k = 0; k < idx.size(); ++k)
    std::copy_n(x.values().data() + idx[k] * c, c, v.data() + k * c);
  auto n = detail::make_node({idx.size(), c}, std::move(v), {x.node()});
  n->backprop = [idx, c](TensorNode& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t k = 0; k < idx.size(); ++k)
      for (std::size_t j = 0; j < c; ++j)
        p->grad[idx[k] * c + j] += self.grad[k * c + j];
  };
  return Tensor(n);
}

// Mean over rows of an R x C matrix -> length-C vector.
inline Tensor mean_rows(const Tensor& x) {
  if (x.shape().size() != 2)
    throw std::invalid_argument("mean_rows: need 2-D tensor");
  std::size_t r = x.rows(), c = x.cols();
  std::vector<double> v(c, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) v[j] += x.values()[i * c + j];
  for (auto& y : v) y /= static_cast<double>(r);
  auto n = detail::make_node({c}, std::move(v), {x.node()});
  n->backprop = [r, c](TensorNode& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j)
        p->grad[i * c + j] += self.grad[j] / static_cast<double>(r);
  };
  return Tensor(n);
}

// Stack matrices (or length-C vectors, treated as one row) along rows.
inline Tensor vconcat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("vconcat: empty list");
  auto part_cols = [](const Tensor& t) {
    return t.shape().size() == 2 ? t.cols() : t.size();
  };
  auto part_rows = [](const Tensor& t) {
    return t.shape().size() == 2 ? t.rows() : std::size_t{1};
  };
  std::size_t c = part_cols(parts[0]);
  std::size_t r = 0;
  for (const auto& p : parts) {
    if (part_cols(p) != c) throw std::invalid_argument("vconcat: column mismatch");
    r += part_rows(p);
  }
  std::vector<double> v;
  v.reserve(r * c);
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::vector<std::size_t> row_counts;
  for (const auto& p : parts) {
    v.insert(v.end(), p.values().begin(), p.values().end());
    parents.push_back(p.node());
    row_counts.push_back(part_rows(p));
  }
  auto n = detail::make_node({r, c}, std::move(v), std::move(parents));
  n->backprop = [row_counts, c](TensorNode& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      auto& p = self.parents[k];
      std::size_t sz = row_counts[k] * c;
      if (p->requires_grad) {
        p->ensure_grad();
        for (std::size_t i = 0; i < sz; ++i)
          p->grad[i] += self.grad[off + i];
      }
      off += sz;
    }
  };
  return Tensor(n);
}

inline Tensor slice_cols(const Tensor& x, std::size_t c0, std::size_t c1) {
  if (x.shape().size() != 2 || c0 >= c1 || c1 > x.cols())
    throw std::invalid_argument("slice_cols: bad range");
  std::size_t r = x.rows(), c = x.cols(), w = c1 - c0;
  std::vector<double> v(r * w);
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(x.values().data() + i * c + c0, w, v.data() + i * w);
  auto n = detail::make_node({r, w}, std::move(v), {x.node()});
  n->backprop = [r, c, c0, w](TensorNode& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j)
        p->grad[i * c + c0 + j] += self.grad[i * w + j];
  };
  return Tensor(n);
}

inline Tensor hconcat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("hconcat: empty list");
  std::size_t r = parts[0].rows();
  std::size_t c = 0;
  for (const auto& p : parts) {
    if (p.shape().size() != 2 || p.rows() != r)
      throw std::invalid_argument("hconcat: row mismatch");
    c += p.cols();
  }
  std::vector<double> v(r * c);
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::vector<std::size_t> widths;
  std::size_t off = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(p.values().data() + i * p.cols(), p.cols(),
                  v.data() + i * c + off);
    off += p.cols();
    parents.push_back(p.node());
    widths.push_back(p.cols());
  }
  auto n = detail::make_node({r, c}, std::move(v), std::move(parents));
  n->backprop = [r, c, widths](TensorNode& self) {
    std::size_t off2 = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      auto& p = self.parents[k];
      std::size_t w = widths[k];
      if (p->requires_grad) {
        p->ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < w; ++j)
            p->grad[i * w + j] += self.grad[i * c + off2 + j];
      }
      off2 += w;
    }
  };
  return Tensor(n);
}

// Pick individual (row, col) cells of a matrix into a vector.
inline Tensor gather_cells(
    const Tensor& x,
    const std::vector<std::pair<std::size_t, std::size_t>>& cells) {
  if (x.shape().size() != 2)
    throw std::invalid_argument("gather_cells: need 2-D tensor");
  std::size_t c = x.cols();
  std::vector<double> v(cells.size());
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (cells[k].first >= x.rows() || cells[k].second >= c)
      throw std::out_of_range("gather_cells: index");
    v[k] = x.values()[cells[k].first * c + cells[k].second];
  }
  auto n = detail::make_node({cells.size()}, std::move(v), {x.node()});
  n->backprop = [cells, c](TensorNode& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t k = 0; k < cells.size(); ++k)
      p->grad[cells[k].first * c + cells[k].second] += self.grad[k];
  };
  return Tensor(n);
}

inline Tensor pick(const Tensor& v, std::size_t i) {
  if (i >= v.size()) throw std::out_of_range("pick: index");
  auto n = detail::make_node({1}, {v.values()[i]}, {v.node()});
  n->backprop = [i](TensorNode& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    p->grad[i] += self.grad[0];
  };
  return Tensor(n);
}

// out[i] = v[i - k] for i >= k, fill otherwise (vector shift toward
// higher indices; used by the CTC lattice recursion).
inline Tensor shift_down(const Tensor& v, std::size_t k, double fill) {
  std::size_t sz = v.size();
  std::vector<double> out(sz, fill);
  for (std::size_t i = k; i < sz; ++i) out[i] = v.values()[i - k];
  auto n = detail::make_node(v.shape(), std::move(out), {v.node()});
  n->backprop = [k, sz](TensorNode& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = k; i < sz; ++i) p->grad[i - k] += self.grad[i];
  };
  return Tensor(n);
}

// Squared Euclidean distances between rows: out[i][j] = ||a_i - b_j||^2.
inline Tensor pairwise_sqdist(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.cols())
    throw std::invalid_argument("pairwise_sqdist: shape mismatch");
  std::size_t na = a.rows(), nb = b.rows(), h = a.cols();
  std::vector<double> v(na * nb, 0.0);
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < nb; ++j) {
      double s = 0.0;
      const double* ar = a.values().data() + i * h;
      const double* br = b.values().data() + j * h;
      for (std::size_t d = 0; d < h; ++d) {
        double diff = ar[d] - br[d];
        s += diff * diff;
      }
      v[i * nb + j] = s;
    }
  auto n = detail::make_node({na, nb}, std::move(v), {a.node(), b.node()});
  n->backprop = [na, nb, h](TensorNode& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) pa->ensure_grad();
    if (pb->requires_grad) pb->ensure_grad();
    for (std::size_t i = 0; i < na; ++i)
      for (std::size_t j = 0; j < nb; ++j) {
        double g = 2.0 * self.grad[i * nb + j];
        if (g == 0.0) continue;
        const double* ar = pa->value.data() + i * h;
        const double* br = pb->value.data() + j * h;
        for (std::size_t d = 0; d < h; ++d) {
          double diff = ar[d] - br[d];
          if (pa->requires_grad) pa->grad[i * h + d] += g * diff;
          if (pb->requires_grad) pb->grad[j * h + d] -= g * diff;
        }
      }
  };
  return Tensor(n);
}

// Identity forward; multiplies the incoming gradient by -strength.
inline Tensor grad_reverse(const Tensor& x, double strength) {
  if (strength < 0.0)
    throw std::invalid_argument("grad_reverse: strength must be >= 0");
  auto n = detail::make_node(x.shape(), x.values(), {x.node()});
  n->backprop = [strength](TensorNode& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < self.size(); ++i)
      p->grad[i] -= strength * self.grad[i];
  };
  return Tensor(n);
}

// Stack groups of `factor` consecutive rows of a T x F matrix into single
// rows, zero-padding the tail: output is ceil(T/factor) x (factor*F).
inline Tensor frame_stack(const Tensor& x, std::size_t factor) {
  if (x.shape().size() != 2 || factor == 0)
    throw std::invalid_argument("frame_stack: bad arguments");
  std::size_t t = x.rows(), f = x.cols();
  std::size_t t2 = (t + factor - 1) / factor;
  std::vector<double> v(t2 * factor * f, 0.0);
  for (std::size_t i = 0; i < t; ++i)
    std::copy_n(x.values().data() + i * f, f, v.data() + i * f);
  auto n = detail::make_node({t2, factor * f}, std::move(v), {x.node()});
  n->backprop = [t, f](TensorNode& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < t * f; ++i) p->grad[i] += self.grad[i];
  };
  return Tensor(n);
}

inline Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  Tensor na = sqrt(dot(a, a));
  Tensor nb = sqrt(dot(b, b));
  return dot(a, b) / (na * nb);
}

}  // namespace madi
