#pragma once

// Reverse-mode autodiff over dense row-major tensors.
//
// A Tensor is a handle onto a graph node holding shape + values; operations
// record their inputs and a pullback closure when gradients are enabled, so
// the data-flow DAG *is* the computation graph. backward() walks the graph in
// reverse topological order (fixed by construction order), accumulating
// gradients with fixed-order loops so repeated runs are bitwise identical.
// Template parameter T selects the scalar type (float or double).

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "alto/common.hpp"
#include "alto/parallel.hpp"
#include "alto/rng.hpp"

namespace alto {

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated lazily, same length as value
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void()> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

namespace detail {
inline bool& grad_enabled_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

// Disables graph recording in a scope (inference / finite differences).
struct NoGradGuard {
  NoGradGuard() : prev(detail::grad_enabled_flag()) { detail::grad_enabled_flag() = false; }
  ~NoGradGuard() { detail::grad_enabled_flag() = prev; }
  bool prev;
};

inline bool grad_enabled() { return detail::grad_enabled_flag(); }

template <class T>
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

  static Tensor zeros(Shape shape) { return full(std::move(shape), T(0)); }

  static Tensor full(Shape shape, T v) {
    auto n = std::make_shared<Node<T>>();
    n->value.assign(numel(shape), v);
    n->shape = std::move(shape);
    return Tensor(std::move(n));
  }

  static Tensor from(Shape shape, std::vector<T> data) {
    require(numel(shape) == data.size(), ErrorKind::Dimension,
            "tensor data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    return Tensor(std::move(n));
  }

  static Tensor scalar(T v) { return from({1}, {v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rank() const { return node_->shape.size(); }
  const std::vector<T>& values() const { return node_->value; }

  // Mutable access for leaves only (initialization, optimizer updates).
  std::vector<T>& values_mut() {
    require(node_->parents.empty(), ErrorKind::Contract, "values_mut on non-leaf tensor");
    return node_->value;
  }

  T item() const {
    require(size() == 1, ErrorKind::Dimension, "item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
  }

  Tensor& set_requires_grad(bool v = true) {
    require(node_->parents.empty(), ErrorKind::Contract, "requires_grad may only be toggled on leaves");
    node_->requires_grad = v;
    return *this;
  }
  bool requires_grad() const { return node_->requires_grad; }

  // Gradient of the last backward pass; zeros for untouched leaves.
  const std::vector<T>& grad() const {
    node_->ensure_grad();
    return node_->grad;
  }
  void clear_grad() { node_->grad.assign(node_->value.size(), T(0)); }

  std::shared_ptr<Node<T>> node() const { return node_; }

private:
  std::shared_ptr<Node<T>> node_;
};

namespace detail {

// Creates the output node of an op, wiring parents + pullback only when some
// input is tracked and recording is enabled.
template <class T, class BackwardFactory>
Tensor<T> make_op_node(const char* op, Shape shape, std::vector<T> value,
                       std::vector<std::shared_ptr<Node<T>>> parents, BackwardFactory&& factory) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = op;
  bool track = false;
  if (grad_enabled()) {
    for (const auto& p : parents) track = track || p->requires_grad;
  }
  if (track) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward = factory(n.get());
  }
  return Tensor<T>(std::move(n));
}

template <class T>
void check_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(), ErrorKind::Dimension,
          std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---- elementwise binary ----

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("add", a, b);
  std::vector<T> out(a.size());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return detail::make_op_node<T>("add", a.shape(), std::move(out), {a.node(), b.node()}, [](Node<T>* n) {
    return [n] {
      for (auto& p : n->parents) p->ensure_grad();
      auto& ga = n->parents[0]->grad;
      auto& gb = n->parents[1]->grad;
      for (std::size_t i = 0; i < n->grad.size(); ++i) {
        ga[i] += n->grad[i];
        gb[i] += n->grad[i];
      }
    };
  });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("sub", a, b);
  std::vector<T> out(a.size());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return detail::make_op_node<T>("sub", a.shape(), std::move(out), {a.node(), b.node()}, [](Node<T>* n) {
    return [n] {
      for (auto& p : n->parents) p->ensure_grad();
      auto& ga = n->parents[0]->grad;
      auto& gb = n->parents[1]->grad;
      for (std::size_t i = 0; i < n->grad.size(); ++i) {
        ga[i] += n->grad[i];
        gb[i] -= n->grad[i];
      }
    };
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("mul", a, b);
  std::vector<T> out(a.size());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return detail::make_op_node<T>("mul", a.shape(), std::move(out), {a.node(), b.node()}, [](Node<T>* n) {
    return [n] {
      for (auto& p : n->parents) p->ensure_grad();
      auto& ga = n->parents[0]->grad;
      auto& gb = n->parents[1]->grad;
      const auto& av = n->parents[0]->value;
      const auto& bv = n->parents[1]->value;
      for (std::size_t i = 0; i < n->grad.size(); ++i) {
        ga[i] += n->grad[i] * bv[i];
        gb[i] += n->grad[i] * av[i];
      }
    };
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  std::vector<T> out(a.size());
  const auto& av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
  return detail::make_op_node<T>("scale", a.shape(), std::move(out), {a.node()}, [c](Node<T>* n) {
    return [n, c] {
      n->parents[0]->ensure_grad();
      auto& ga = n->parents[0]->grad;
      for (std::size_t i = 0; i < n->grad.size(); ++i) ga[i] += n->grad[i] * c;
    };
  });
}

template <class T>
Tensor<T> neg(const Tensor<T>& a) {
  return scale(a, T(-1));
}

// Adds the same scalar to every element.
template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
  std::vector<T> out(a.size());
  const auto& av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + c;
  return detail::make_op_node<T>("add_scalar", a.shape(), std::move(out), {a.node()}, [](Node<T>* n) {
    return [n] {
      n->parents[0]->ensure_grad();
      auto& ga = n->parents[0]->grad;
      for (std::size_t i = 0; i < n->grad.size(); ++i) ga[i] += n->grad[i];
    };
  });
}

// ---- elementwise unary ----

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.size());
  const auto& av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > T(0) ? av[i] : T(0);
  return detail::make_op_node<T>("relu", a.shape(), std::move(out), {a.node()}, [](Node<T>* n) {
    return [n] {
      n->parents[0]->ensure_grad();
      auto& ga = n->parents[0]->grad;
      const auto& av = n->parents[0]->value;
      // subgradient 0 at the kink
      for (std::size_t i = 0; i < n->grad.size(); ++i) ga[i] += av[i] > T(0) ? n->grad[i] : T(0);
    };
  });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  std::vector<T> out(a.size());
  const auto& av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    T x = av[i];
    out[i] = x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
  }
  return detail::make_op_node<T>("sigmoid", a.shape(), std::move(out), {a.node()}, [](Node<T>* n) {
    return [n] {
      n->parents[0]->ensure_grad();
      auto& ga = n->parents[0]->grad;
      const auto& ov = n->value;
      for (std::size_t i = 0; i < n->grad.size(); ++i) ga[i] += n->grad[i] * ov[i] * (T(1) - ov[i]);
    };
  });
}

template <class T>
Tensor<T> log_elem(const Tensor<T>& a) {
  std::vector<T> out(a.size());
  const auto& av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    require(av[i] > T(0), ErrorKind::Numeric, "log of non-positive value");
    out[i] = std::log(av[i]);
  }
  return detail::make_op_node<T>("log", a.shape(), std::move(out), {a.node()}, [](Node<T>* n) {
    return [n] {
      n->parents[0]->ensure_grad();
      auto& ga = n->parents[0]->grad;
      const auto& av = n->parents[0]->value;
      for (std::size_t i = 0; i < n->grad.size(); ++i) ga[i] += n->grad[i] / av[i];
    };
  });
}

// Gradient passes only strictly inside (lo, hi); clamped elements get zero.
template <class T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
  require(lo < hi, ErrorKind::Contract, "clamp: lo must be < hi");
  std::vector<T> out(a.size());
  const auto& av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] < lo ? lo : (av[i] > hi ? hi : av[i]);
  return detail::make_op_node<T>("clamp", a.shape(), std::move(out), {a.node()}, [lo, hi](Node<T>* n) {
    return [n, lo, hi] {
      n->parents[0]->ensure_grad();
      auto& ga = n->parents[0]->grad;
      const auto& av = n->parents[0]->value;
      for (std::size_t i = 0; i < n->grad.size(); ++i)
        if (av[i] > lo && av[i] < hi) ga[i] += n->grad[i];
    };
  });
}

// ---- reductions ----

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc = T(0);
  for (T v : a.values()) acc += v;
  return detail::make_op_node<T>("sum", {1}, {acc}, {a.node()}, [](Node<T>* n) {
    return [n] {
      n->parents[0]->ensure_grad();
      auto& ga = n->parents[0]->grad;
      T g = n->grad[0];
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    };
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.size()));
}

// Sums out one axis: shape [..., k, ...] -> [..., ...].
template <class T>
Tensor<T> sum_axis(const Tensor<T>& a, std::size_t axis) {
  require(axis < a.rank(), ErrorKind::Dimension, "sum_axis: axis out of range for " + shape_str(a.shape()));
  const Shape& s = a.shape();
  std::size_t outer = 1, inner = 1, k = s[axis];
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) out_shape.push_back(s[i]);
  if (out_shape.empty()) out_shape = {1};
  std::vector<T> out(outer * inner, T(0));
  const auto& av = a.values();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t j = 0; j < k; ++j) {
      const T* src = av.data() + (o * k + j) * inner;
      T* dst = out.data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  return detail::make_op_node<T>("sum_axis", std::move(out_shape), std::move(out), {a.node()},
                                 [outer, inner, k](Node<T>* n) {
                                   return [n, outer, inner, k] {
                                     n->parents[0]->ensure_grad();
                                     auto& ga = n->parents[0]->grad;
                                     for (std::size_t o = 0; o < outer; ++o)
                                       for (std::size_t j = 0; j < k; ++j) {
                                         T* dst = ga.data() + (o * k + j) * inner;
                                         const T* src = n->grad.data() + o * inner;
                                         for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
                                       }
                                   };
                                 });
}

// ---- shape ops ----

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape new_shape) {
  require(numel(new_shape) == a.size(), ErrorKind::Dimension,
          "reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(new_shape));
  return detail::make_op_node<T>("reshape", std::move(new_shape), a.values(), {a.node()}, [](Node<T>* n) {
    return [n] {
      n->parents[0]->ensure_grad();
      auto& ga = n->parents[0]->grad;
      for (std::size_t i = 0; i < n->grad.size(); ++i) ga[i] += n->grad[i];
    };
  });
}

// Repeats a size-1 axis k times; adjoint sums back over the repeats.
template <class T>
Tensor<T> expand_axis(const Tensor<T>& a, std::size_t axis, std::size_t k) {
  require(axis < a.rank(), ErrorKind::Dimension, "expand_axis: axis out of range");
  require(a.shape()[axis] == 1, ErrorKind::Dimension,
          "expand_axis: axis " + std::to_string(axis) + " of " + shape_str(a.shape()) + " must be 1");
  const Shape& s = a.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  Shape out_shape = s;
  out_shape[axis] = k;
  std::vector<T> out(outer * k * inner);
  const auto& av = a.values();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t i = 0; i < inner; ++i) out[(o * k + j) * inner + i] = av[o * inner + i];
  return detail::make_op_node<T>("expand_axis", std::move(out_shape), std::move(out), {a.node()},
                                 [outer, inner, k](Node<T>* n) {
                                   return [n, outer, inner, k] {
                                     n->parents[0]->ensure_grad();
                                     auto& ga = n->parents[0]->grad;
                                     for (std::size_t o = 0; o < outer; ++o)
                                       for (std::size_t j = 0; j < k; ++j)
                                         for (std::size_t i = 0; i < inner; ++i)
                                           ga[o * inner + i] += n->grad[(o * k + j) * inner + i];
                                   };
                                 });
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  require(!parts.empty(), ErrorKind::Contract, "concat: empty input list");
  const Shape& s0 = parts[0].shape();
  require(axis < s0.size(), ErrorKind::Dimension, "concat: axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  std::size_t total_k = 0;
  std::vector<std::size_t> ks;
  std::vector<std::shared_ptr<Node<T>>> parents;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    require(s.size() == s0.size(), ErrorKind::Dimension, "concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i)
      require(i == axis || s[i] == s0[i], ErrorKind::Dimension,
              "concat: shape mismatch on axis " + std::to_string(i) + ": " + shape_str(s) + " vs " + shape_str(s0));
    ks.push_back(s[axis]);
    total_k += s[axis];
    parents.push_back(p.node());
  }
  Shape out_shape = s0;
  out_shape[axis] = total_k;
  std::vector<T> out(outer * total_k * inner);
  std::size_t off = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const auto& av = parts[pi].values();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t j = 0; j < ks[pi]; ++j)
        for (std::size_t i = 0; i < inner; ++i)
          out[(o * total_k + off + j) * inner + i] = av[(o * ks[pi] + j) * inner + i];
    off += ks[pi];
  }
  return detail::make_op_node<T>("concat", std::move(out_shape), std::move(out), std::move(parents),
                                 [outer, inner, ks, total_k](Node<T>* n) {
                                   return [n, outer, inner, ks, total_k] {
                                     std::size_t off = 0;
                                     for (std::size_t pi = 0; pi < n->parents.size(); ++pi) {
                                       n->parents[pi]->ensure_grad();
                                       auto& ga = n->parents[pi]->grad;
                                       for (std::size_t o = 0; o < outer; ++o)
                                         for (std::size_t j = 0; j < ks[pi]; ++j)
                                           for (std::size_t i = 0; i < inner; ++i)
                                             ga[(o * ks[pi] + j) * inner + i] +=
                                                 n->grad[(o * total_k + off + j) * inner + i];
                                       off += ks[pi];
                                     }
                                   };
                                 });
}

// ---- linear algebra ----

// x: [..., in], w: [in, out], optional bias [out] -> [..., out].
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b = Tensor<T>()) {
  require(w.rank() == 2, ErrorKind::Dimension, "linear: weight must be rank 2, got " + shape_str(w.shape()));
  require(x.rank() >= 1, ErrorKind::Dimension, "linear: input must have rank >= 1");
  std::size_t in = w.shape()[0], out_dim = w.shape()[1];
  require(x.shape().back() == in, ErrorKind::Dimension,
          "linear: input feature axis " + std::to_string(x.shape().back()) + " != weight rows " + std::to_string(in));
  bool has_bias = b.defined();
  if (has_bias)
    require(b.shape() == Shape{out_dim}, ErrorKind::Dimension,
            "linear: bias shape " + shape_str(b.shape()) + " != [" + std::to_string(out_dim) + "]");
  std::size_t rows = x.size() / in;
  std::vector<T> out(rows * out_dim);
  const auto& xv = x.values();
  const auto& wv = w.values();
  const T* bv = has_bias ? b.values().data() : nullptr;
  parallel_for(rows, 64, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t r = r0; r < r1; ++r) {
      T* o = out.data() + r * out_dim;
      if (bv)
        for (std::size_t j = 0; j < out_dim; ++j) o[j] = bv[j];
      else
        for (std::size_t j = 0; j < out_dim; ++j) o[j] = T(0);
      const T* xr = xv.data() + r * in;
      for (std::size_t i = 0; i < in; ++i) {
        T xi = xr[i];
        const T* wr = wv.data() + i * out_dim;
        for (std::size_t j = 0; j < out_dim; ++j) o[j] += xi * wr[j];
      }
    }
  });
  Shape out_shape = x.shape();
  out_shape.back() = out_dim;
  std::vector<std::shared_ptr<Node<T>>> parents = {x.node(), w.node()};
  if (has_bias) parents.push_back(b.node());
  return detail::make_op_node<T>(
      "linear", std::move(out_shape), std::move(out), std::move(parents), [rows, in, out_dim, has_bias](Node<T>* n) {
        return [n, rows, in, out_dim, has_bias] {
          for (auto& p : n->parents) p->ensure_grad();
          Node<T>* xn = n->parents[0].get();
          Node<T>* wn = n->parents[1].get();
          const auto& g = n->grad;
          // d/dx = g . w^T
          parallel_for(rows, 64, [&](std::size_t r0, std::size_t r1) {
            for (std::size_t r = r0; r < r1; ++r) {
              T* gx = xn->grad.data() + r * in;
              const T* gr = g.data() + r * out_dim;
              for (std::size_t i = 0; i < in; ++i) {
                const T* wr = wn->value.data() + i * out_dim;
                T acc = T(0);
                for (std::size_t j = 0; j < out_dim; ++j) acc += gr[j] * wr[j];
                gx[i] += acc;
              }
            }
          });
          // d/dw = x^T . g, reduced over rows in fixed order per weight entry
          parallel_for(in, 8, [&](std::size_t i0, std::size_t i1) {
            for (std::size_t i = i0; i < i1; ++i) {
              T* gw = wn->grad.data() + i * out_dim;
              for (std::size_t r = 0; r < rows; ++r) {
                T xi = xn->value[r * in + i];
                const T* gr = g.data() + r * out_dim;
                for (std::size_t j = 0; j < out_dim; ++j) gw[j] += xi * gr[j];
              }
            }
          });
          if (has_bias) {
            Node<T>* bn = n->parents[2].get();
            for (std::size_t r = 0; r < rows; ++r) {
              const T* gr = g.data() + r * out_dim;
              for (std::size_t j = 0; j < out_dim; ++j) bn->grad[j] += gr[j];
            }
          }
        };
      });
}

// ---- softmax ----

// Numerically stable softmax along `axis`; rows with equal entries map to
// the uniform distribution.
template <class T>
Tensor<T> softmax(const Tensor<T>& a, std::size_t axis) {
  require(axis < a.rank(), ErrorKind::Dimension, "softmax: axis out of range for " + shape_str(a.shape()));
  const Shape& s = a.shape();
  std::size_t outer = 1, inner = 1, k = s[axis];
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  std::vector<T> out(a.size());
  const auto& av = a.values();
  parallel_for(outer, 32, [&](std::size_t o0, std::size_t o1) {
    for (std::size_t o = o0; o < o1; ++o)
      for (std::size_t i = 0; i < inner; ++i) {
        const T* src = av.data() + o * k * inner + i;
        T* dst = out.data() + o * k * inner + i;
        T mx = src[0];
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, src[j * inner]);
        T z = T(0);
        for (std::size_t j = 0; j < k; ++j) {
          T e = std::exp(src[j * inner] - mx);
          dst[j * inner] = e;
          z += e;
        }
        for (std::size_t j = 0; j < k; ++j) dst[j * inner] /= z;
      }
  });
  return detail::make_op_node<T>("softmax", a.shape(), std::move(out), {a.node()},
                                 [outer, inner, k](Node<T>* n) {
                                   return [n, outer, inner, k] {
                                     n->parents[0]->ensure_grad();
                                     auto& ga = n->parents[0]->grad;
                                     const auto& y = n->value;
                                     const auto& g = n->grad;
                                     for (std::size_t o = 0; o < outer; ++o)
                                       for (std::size_t i = 0; i < inner; ++i) {
                                         std::size_t base = o * k * inner + i;
                                         T dot = T(0);
                                         for (std::size_t j = 0; j < k; ++j)
                                           dot += g[base + j * inner] * y[base + j * inner];
                                         for (std::size_t j = 0; j < k; ++j) {
                                           std::size_t idx = base + j * inner;
                                           ga[idx] += y[idx] * (g[idx] - dot);
                                         }
                                       }
                                   };
                                 });
}

// ---- backward pass ----

// Reverse accumulation from a scalar loss. Gradients add into .grad fields;
// callers reset parameter grads between steps.
template <class T>
void backward(const Tensor<T>& loss) {
  require(loss.size() == 1, ErrorKind::Contract, "backward: loss must be scalar, got " + shape_str(loss.shape()));
  require(loss.node()->requires_grad, ErrorKind::Contract, "backward: loss does not require grad");
  // Iterative postorder DFS; order is fixed by graph construction.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss.node()->ensure_grad();
  loss.node()->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward) {
      n->ensure_grad();
      n->backward();
    }
  }
}

// ---- initializers ----

template <class T>
Tensor<T> rand_uniform(Shape shape, Rng& rng, double lo, double hi) {
  std::vector<T> data(numel(shape));
  for (auto& v : data) v = static_cast<T>(rng.next_uniform(lo, hi));
  return Tensor<T>::from(std::move(shape), std::move(data));
}

// Kaiming-uniform fan-in initialization: U(+-sqrt(6 / fan_in)).
template <class T>
Tensor<T> kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  return rand_uniform<T>(std::move(shape), rng, -bound, bound);
}

}  // namespace alto
