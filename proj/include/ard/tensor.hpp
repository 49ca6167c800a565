#pragma once

// Dense row-major tensors with tape-based reverse-mode differentiation.
//
// BasicTensor<T> is used with float (working precision) and double (for
// finite-difference oracles, whose forward pass must be far less noisy than
// the step size).
//
// Ops record onto the thread's active BasicTape<T> only when some input
// requires a gradient; without a tape every op is a plain forward
// computation. Recorded nodes own their parents, so the graph lives as long
// as the tape or any tensor derived from it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <unordered_map>
#include <utility>
#include <vector>

namespace ard {

using Shape = std::vector<std::size_t>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class AutodiffError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class DegenerateMaskError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream oss;
  oss << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) oss << (i ? "," : "") << shape[i];
  oss << ']';
  return oss.str();
}

namespace detail {

template <typename T>
struct Node;

template <typename T>
using GradMap = std::unordered_map<const Node<T>*, std::vector<T>>;

// Hands out gradient buffers during a backward sweep.
template <typename T>
class GradAccess {
 public:
  explicit GradAccess(GradMap<T>& grads) : grads_(grads) {}
  std::vector<T>& operator()(const Node<T>& node) {
    auto& g = grads_[&node];
    if (g.empty()) g.assign(node.value.size(), T(0));
    return g;
  }

 private:
  GradMap<T>& grads_;
};

template <typename T>
using BackwardFn = std::function<void(const Node<T>& self, std::span<const T> grad, GradAccess<T>& acc)>;

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn<T> backward;
};

template <typename T>
struct TapeState {
  std::vector<std::shared_ptr<Node<T>>> nodes;
  bool consumed = false;
};

template <typename T>
TapeState<T>*& active_tape() {
  thread_local TapeState<T>* tape = nullptr;
  return tape;
}

}  // namespace detail

template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(std::shared_ptr<detail::Node<T>> node) : node_(std::move(node)) {}

  static BasicTensor zeros(Shape shape, bool requires_grad = false) {
    auto n = numel(shape);
    return from(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }

  static BasicTensor full(Shape shape, T v, bool requires_grad = false) {
    auto n = numel(shape);
    return from(std::move(shape), std::vector<T>(n, v), requires_grad);
  }

  static BasicTensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
    if (numel(shape) != data.size()) {
      throw DimensionError("tensor: shape " + to_string(shape) + " does not match " + std::to_string(data.size()) +
                           " elements");
    }
    auto node = std::make_shared<detail::Node<T>>();
    node->shape = std::move(shape);
    node->value = std::move(data);
    node->requires_grad = requires_grad;
    return BasicTensor(std::move(node));
  }

  static BasicTensor scalar(T v, bool requires_grad = false) { return from({}, {v}, requires_grad); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const T> data() const { return node_->value; }

  // Only meaningful on leaves (parameter updates between steps).
  std::span<T> mutable_data() { return node_->value; }

  T item() const {
    if (size() != 1) throw DimensionError("item: tensor has " + std::to_string(size()) + " elements");
    return node_->value[0];
  }

  T operator[](std::size_t i) const { return node_->value[i]; }

  BasicTensor detach() const { return from(shape(), node_->value, false); }
  BasicTensor clone() const { return from(shape(), node_->value, requires_grad()); }

  const detail::Node<T>* id() const { return node_.get(); }
  const std::shared_ptr<detail::Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node<T>> node_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// Same values in another precision, as a new leaf.
template <typename U, typename T>
BasicTensor<U> cast(const BasicTensor<T>& x, bool requires_grad = false) {
  std::vector<U> v(x.data().begin(), x.data().end());
  return BasicTensor<U>::from(x.shape(), std::move(v), requires_grad);
}

// Gradients of a scalar loss with respect to leaves.
template <typename T>
class BasicGradients {
 public:
  BasicGradients() = default;
  explicit BasicGradients(detail::GradMap<T> g) : grads_(std::move(g)) {}

  // Leaves the loss never reached get zeros.
  const std::vector<T>& of(const BasicTensor<T>& leaf) const {
    auto it = grads_.find(leaf.id());
    if (it != grads_.end()) return it->second;
    auto& z = zeros_[leaf.id()];
    if (z.size() != leaf.size()) z.assign(leaf.size(), T(0));
    return z;
  }

  bool reached(const BasicTensor<T>& leaf) const { return grads_.count(leaf.id()) != 0; }

 private:
  detail::GradMap<T> grads_;
  mutable detail::GradMap<T> zeros_;
};

using Gradients = BasicGradients<float>;
using Gradients64 = BasicGradients<double>;

// Records differentiable ops issued on this thread while alive.
template <typename T>
class BasicTape {
 public:
  BasicTape() : previous_(detail::active_tape<T>()) { detail::active_tape<T>() = &state_; }
  ~BasicTape() { detail::active_tape<T>() = previous_; }
  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;

  std::size_t size() const { return state_.nodes.size(); }
  bool consumed() const { return state_.consumed; }

  // Reverse sweep over the recorded nodes. A tape supports exactly one sweep;
  // gradients are plain buffers, so differentiating them again is impossible.
  BasicGradients<T> backward(const BasicTensor<T>& loss) {
    if (state_.consumed) throw AutodiffError("backward: tape already consumed (double backward is not supported)");
    if (loss.size() != 1 || loss.rank() != 0) {
      throw AutodiffError("backward: loss must be a rank-0 scalar, got shape " + to_string(loss.shape()));
    }
    state_.consumed = true;
    detail::GradMap<T> grads;
    if (!loss.requires_grad()) return BasicGradients<T>{};
    grads[loss.id()] = {T(1)};
    detail::GradAccess<T> acc(grads);
    for (auto it = state_.nodes.rbegin(); it != state_.nodes.rend(); ++it) {
      const detail::Node<T>& node = **it;
      auto g = grads.find(&node);
      if (g == grads.end()) continue;
      node.backward(node, g->second, acc);
      grads.erase(&node);
    }
    state_.nodes.clear();
    return BasicGradients<T>(std::move(grads));
  }

 private:
  detail::TapeState<T> state_;
  detail::TapeState<T>* previous_;
};

using Tape = BasicTape<float>;
using Tape64 = BasicTape<double>;

template <typename T>
BasicGradients<T> backward(BasicTape<T>& tape, const BasicTensor<T>& loss) {
  return tape.backward(loss);
}

namespace detail {

template <typename T>
BasicTensor<T> make_result(Shape shape, std::vector<T> value, const std::vector<BasicTensor<T>>& inputs,
                           BackwardFn<T> fn) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  TapeState<T>* tape = active_tape<T>();
  bool needs = false;
  if (tape != nullptr && !tape->consumed) {
    for (const auto& t : inputs) needs = needs || t.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (const auto& t : inputs) node->parents.push_back(t.node());
    node->backward = std::move(fn);
    tape->nodes.push_back(node);
  }
  return BasicTensor<T>(std::move(node));
}

// C[m x n] += A[m x k] B[k x n]
template <typename T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const T* __restrict a, const T* __restrict b,
             T* __restrict c) {
  std::size_t i = 0;
  // Four rows share each load of B; every C entry still sums over p in order.
  for (; i + 4 <= m; i += 4) {
    T* __restrict c0 = c + i * n;
    T* __restrict c1 = c0 + n;
    T* __restrict c2 = c1 + n;
    T* __restrict c3 = c2 + n;
    const T* a0 = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T v0 = a0[p], v1 = a0[k + p], v2 = a0[2 * k + p], v3 = a0[3 * k + p];
      const T* __restrict brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        const T bv = brow[j];
        c0[j] += v0 * bv;
        c1[j] += v1 * bv;
        c2[j] += v2 * bv;
        c3[j] += v3 * bv;
      }
    }
  }
  for (; i < m; ++i) {
    T* __restrict crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* __restrict brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[k x n] += A^T G with A[m x k], G[m x n]
template <typename T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const T* __restrict a, const T* __restrict g,
             T* __restrict c) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* __restrict grow = g + i * n;
    const T* arow = a + i * k;
    std::size_t p = 0;
    for (; p + 4 <= k; p += 4) {
      const T v0 = arow[p], v1 = arow[p + 1], v2 = arow[p + 2], v3 = arow[p + 3];
      T* __restrict c0 = c + p * n;
      T* __restrict c1 = c0 + n;
      T* __restrict c2 = c1 + n;
      T* __restrict c3 = c2 + n;
      for (std::size_t j = 0; j < n; ++j) {
        const T gv = grow[j];
        c0[j] += v0 * gv;
        c1[j] += v1 * gv;
        c2[j] += v2 * gv;
        c3[j] += v3 * gv;
      }
    }
    for (; p < k; ++p) {
      const T av = arow[p];
      T* __restrict crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

template <typename T>
std::vector<T> transpose2d(const T* b, std::size_t rows, std::size_t cols) {
  std::vector<T> t(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = b[r * cols + c];
  return t;
}

inline bool is_suffix(const Shape& whole, const Shape& part) {
  if (part.size() > whole.size()) return false;
  return std::equal(part.begin(), part.end(), whole.end() - static_cast<std::ptrdiff_t>(part.size()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

// a[..., m, k] b[k, n], or batched a[B, m, k] b[B, k, n].
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() < 2 || (b.rank() != 2 && b.rank() != 3)) {
    throw DimensionError("matmul: unsupported ranks " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  const bool batched = b.rank() == 3;
  const std::size_t k = a.shape().back();
  const std::size_t n = b.shape().back();
  if (k != b.dim(b.rank() - 2)) {
    throw DimensionError("matmul: inner extents differ " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  std::size_t batch = 1;
  std::size_t m = a.size() / k;
  if (batched) {
    if (a.rank() != 3 || a.dim(0) != b.dim(0)) {
      throw DimensionError("matmul: batch mismatch " + to_string(a.shape()) + " x " + to_string(b.shape()));
    }
    batch = a.dim(0);
    m = a.dim(1);
  }
  Shape out_shape = a.shape();
  out_shape.back() = n;
  std::vector<T> out(batch * m * n, T(0));
  const T* ad = a.data().data();
  const T* bd = b.data().data();
  for (std::size_t t = 0; t < batch; ++t) {
    detail::gemm_nn(m, k, n, ad + t * m * k, bd + (batched ? t * k * n : 0), out.data() + t * m * n);
  }
  return detail::make_result<T>(
      std::move(out_shape), std::move(out), {a, b},
      [batch, m, k, n, batched](const detail::Node<T>& self, std::span<const T> g, detail::GradAccess<T>& acc) {
        const auto& an = *self.parents[0];
        const auto& bn = *self.parents[1];
        std::vector<T> btr;
        if (an.requires_grad && !batched) btr = detail::transpose2d(bn.value.data(), k, n);
        for (std::size_t t = 0; t < batch; ++t) {
          const T* gt = g.data() + t * m * n;
          if (an.requires_grad) {
            if (batched) btr = detail::transpose2d(bn.value.data() + t * k * n, k, n);
            detail::gemm_nn(m, n, k, gt, btr.data(), acc(an).data() + t * m * k);
          }
          if (bn.requires_grad) {
            detail::gemm_tn(m, k, n, an.value.data() + t * m * k, gt, acc(bn).data() + (batched ? t * k * n : 0));
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Elementwise with suffix broadcasting: b.shape must equal a.shape or a suffix of it.

namespace detail {

enum class Binary { Add, Sub, Mul };

template <typename T>
BasicTensor<T> binary(const BasicTensor<T>& a, const BasicTensor<T>& b, Binary op) {
  if (!is_suffix(a.shape(), b.shape())) {
    throw DimensionError("elementwise: " + to_string(b.shape()) + " does not broadcast onto " + to_string(a.shape()));
  }
  const std::size_t n = a.size();
  const std::size_t nb = b.size();
  std::vector<T> out(n);
  const T* ad = a.data().data();
  const T* bd = b.data().data();
  for (std::size_t base = 0; base < n; base += nb) {
    for (std::size_t j = 0; j < nb; ++j) {
      const T x = ad[base + j];
      const T y = bd[j];
      out[base + j] = op == Binary::Add ? x + y : op == Binary::Sub ? x - y : x * y;
    }
  }
  return make_result<T>(a.shape(), std::move(out), {a, b},
                        [n, nb, op](const Node<T>& self, std::span<const T> g, GradAccess<T>& acc) {
                          const auto& an = *self.parents[0];
                          const auto& bn = *self.parents[1];
                          if (an.requires_grad) {
                            auto& ga = acc(an);
                            if (op == Binary::Mul) {
                              for (std::size_t base = 0; base < n; base += nb)
                                for (std::size_t j = 0; j < nb; ++j) ga[base + j] += g[base + j] * bn.value[j];
                            } else {
                              for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
                            }
                          }
                          if (bn.requires_grad) {
                            auto& gb = acc(bn);
                            for (std::size_t base = 0; base < n; base += nb) {
                              for (std::size_t j = 0; j < nb; ++j) {
                                const T gi = g[base + j];
                                gb[j] += op == Binary::Add ? gi : op == Binary::Sub ? -gi : gi * an.value[base + j];
                              }
                            }
                          }
                        });
}

// f(x) elementwise; df(x, f(x)) is the derivative.
template <typename T, typename F, typename D>
BasicTensor<T> unary(const BasicTensor<T>& x, F f, D df) {
  std::vector<T> out(x.size());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xd[i]);
  return make_result<T>(x.shape(), std::move(out), {x},
                        [df](const Node<T>& self, std::span<const T> g, GradAccess<T>& acc) {
                          const auto& xn = *self.parents[0];
                          auto& gx = acc(xn);
                          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xn.value[i], self.value[i]);
                        });
}

}  // namespace detail

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return detail::binary(a, b, detail::Binary::Add);
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return detail::binary(a, b, detail::Binary::Sub);
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return detail::binary(a, b, detail::Binary::Mul);
}

// scale * x + shift with scalar constants
template <typename T>
BasicTensor<T> affine(const BasicTensor<T>& x, std::type_identity_t<T> scale, std::type_identity_t<T> shift = T(0)) {
  return detail::unary(
      x, [scale, shift](T v) { return scale * v + shift; }, [scale](T, T) { return scale; });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, std::type_identity_t<T> c) {
  return affine(x, c, T(0));
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  return detail::unary(
      x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
BasicTensor<T> silu(const BasicTensor<T>& x) {
  return detail::unary(
      x, [](T v) { return v / (T(1) + std::exp(-v)); },
      [](T v, T) {
        const T s = T(1) / (T(1) + std::exp(-v));
        return s * (T(1) + v * (T(1) - s));
      });
}

// tanh approximation
template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& x) {
  constexpr T c = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T k = T(0.044715);
  // 0.5 (1 + tanh(u)) == sigmoid(2u)
  return detail::unary(
      x, [](T v) { return v / (T(1) + std::exp(T(-2) * c * (v + k * v * v * v))); },
      [](T v, T) {
        const T sg = T(1) / (T(1) + std::exp(T(-2) * c * (v + k * v * v * v)));
        const T du = c * (T(1) + T(3) * k * v * v);
        return sg + T(2) * v * sg * (T(1) - sg) * du;
      });
}

// ---------------------------------------------------------------------------
// Softmax and normalization

// Boolean mask over the last two dims of a softmax input, broadcast over the rest.
struct Mask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> allow;

  Mask() = default;
  Mask(std::size_t r, std::size_t c, bool value = false) : rows(r), cols(c), allow(r * c, value ? 1 : 0) {}
  bool operator()(std::size_t r, std::size_t c) const { return allow[r * cols + c] != 0; }
  void set(std::size_t r, std::size_t c, bool v) { allow[r * cols + c] = v ? 1 : 0; }
};

// Softmax over the last dim, stabilized by the row max. Masked entries are
// exactly zero and take no part in the max or the normalizer.
template <typename T>
BasicTensor<T> softmax_rows(const BasicTensor<T>& x, const Mask* mask = nullptr) {
  if (x.rank() < 1 || x.shape().back() == 0) throw DimensionError("softmax_rows: needs a non-empty last dim");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.size() / n;
  if (mask != nullptr) {
    if (x.rank() < 2 || mask->cols != n || mask->rows != x.dim(x.rank() - 2)) {
      throw DimensionError("softmax_rows: mask " + std::to_string(mask->rows) + "x" + std::to_string(mask->cols) +
                           " does not match " + to_string(x.shape()));
    }
  }
  std::vector<T> out(x.size(), T(0));
  const T* xd = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xd + r * n;
    T* yr = out.data() + r * n;
    const std::uint8_t* mr = mask ? mask->allow.data() + (r % mask->rows) * n : nullptr;
    T mx = -INFINITY;
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (mr && !mr[j]) continue;
      mx = std::max(mx, xr[j]);
      any = true;
    }
    if (!any) throw DegenerateMaskError("softmax_rows: row " + std::to_string(r) + " is fully masked");
    T total = T(0);
    for (std::size_t j = 0; j < n; ++j) {
      if (mr && !mr[j]) continue;
      yr[j] = std::exp(xr[j] - mx);
      total += yr[j];
    }
    const T inv = T(1) / total;
    for (std::size_t j = 0; j < n; ++j) yr[j] *= inv;
  }
  return detail::make_result<T>(
      x.shape(), std::move(out), {x},
      [n, rows](const detail::Node<T>& self, std::span<const T> g, detail::GradAccess<T>& acc) {
        auto& gx = acc(*self.parents[0]);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* y = self.value.data() + r * n;
          const T* gr = g.data() + r * n;
          T dot = T(0);
          for (std::size_t j = 0; j < n; ++j) dot += y[j] * gr[j];
          T* o = gx.data() + r * n;
          for (std::size_t j = 0; j < n; ++j) o[j] += y[j] * (gr[j] - dot);
        }
      });
}

inline constexpr double kLayerNormEps = 1e-5;

// Zero mean, unit (biased) variance over the last dim.
template <typename T>
BasicTensor<T> layernorm(const BasicTensor<T>& x) {
  if (x.rank() < 1 || x.shape().back() < 2) throw DimensionError("layernorm: last extent must be >= 2");
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.size() / d;
  std::vector<T> out(x.size());
  std::vector<T> inv_std(rows);
  const T* xd = x.data().data();
  const T fd = static_cast<T>(d);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xd + r * d;
    T mu = T(0);
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= fd;
    T var = T(0);
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= fd;
    const T is = T(1) / std::sqrt(var + T(kLayerNormEps));
    inv_std[r] = is;
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = (xr[j] - mu) * is;
  }
  return detail::make_result<T>(
      x.shape(), std::move(out), {x},
      [d, rows, fd, inv_std = std::move(inv_std)](const detail::Node<T>& self, std::span<const T> g,
                                                  detail::GradAccess<T>& acc) {
        auto& gx = acc(*self.parents[0]);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* y = self.value.data() + r * d;
          const T* gr = g.data() + r * d;
          T gsum = T(0);
          T gy = T(0);
          for (std::size_t j = 0; j < d; ++j) {
            gsum += gr[j];
            gy += gr[j] * y[j];
          }
          T* o = gx.data() + r * d;
          for (std::size_t j = 0; j < d; ++j) o[j] += inv_std[r] * (gr[j] - gsum / fd - y[j] * gy / fd);
        }
      });
}

template <typename T>
BasicTensor<T> layernorm(const BasicTensor<T>& x, const BasicTensor<T>& gain, const BasicTensor<T>& bias) {
  const std::size_t d = x.rank() ? x.shape().back() : 0;
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    throw DimensionError("layernorm: gain/bias must have shape [" + std::to_string(d) + "]");
  }
  return add(mul(layernorm(x), gain), bias);
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
  if (numel(shape) != x.size()) throw DimensionError("reshape: " + to_string(x.shape()) + " -> " + to_string(shape));
  std::vector<T> out(x.data().begin(), x.data().end());
  return detail::make_result<T>(std::move(shape), std::move(out), {x},
                                [](const detail::Node<T>& self, std::span<const T> g, detail::GradAccess<T>& acc) {
                                  auto& gx = acc(*self.parents[0]);
                                  for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                                });
}

namespace detail {

// For each output position of the permuted tensor, the input offset it reads.
inline std::vector<std::size_t> permute_sources(const Shape& in_shape, const std::vector<std::size_t>& perm) {
  const std::size_t rank = in_shape.size();
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
  Shape out_shape(rank);
  std::vector<std::size_t> src_strides(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = in_shape[perm[i]];
    src_strides[i] = in_strides[perm[i]];
  }
  const std::size_t n = numel(in_shape);
  std::vector<std::size_t> src(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t offset = 0;
  for (std::size_t o = 0; o < n; ++o) {
    src[o] = offset;
    for (std::size_t i = rank; i-- > 0;) {
      ++idx[i];
      offset += src_strides[i];
      if (idx[i] < out_shape[i]) break;
      offset -= src_strides[i] * out_shape[i];
      idx[i] = 0;
    }
  }
  return src;
}

}  // namespace detail

template <typename T>
BasicTensor<T> permute(const BasicTensor<T>& x, const std::vector<std::size_t>& perm) {
  const std::size_t rank = x.rank();
  if (perm.size() != rank) throw DimensionError("permute: permutation rank mismatch");
  std::vector<bool> seen(rank, false);
  for (auto p : perm) {
    if (p >= rank || seen[p]) throw DimensionError("permute: invalid permutation");
    seen[p] = true;
  }
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = x.dim(perm[i]);
  auto src = std::make_shared<std::vector<std::size_t>>(detail::permute_sources(x.shape(), perm));
  std::vector<T> out(x.size());
  const T* xd = x.data().data();
  for (std::size_t o = 0; o < out.size(); ++o) out[o] = xd[(*src)[o]];
  return detail::make_result<T>(std::move(out_shape), std::move(out), {x},
                                [src](const detail::Node<T>& self, std::span<const T> g, detail::GradAccess<T>& acc) {
                                  auto& gx = acc(*self.parents[0]);
                                  for (std::size_t o = 0; o < g.size(); ++o) gx[(*src)[o]] += g[o];
                                });
}

// Swaps the last two dims.
template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& x) {
  if (x.rank() < 2) throw DimensionError("transpose: needs rank >= 2");
  std::vector<std::size_t> perm(x.rank());
  std::iota(perm.begin(), perm.end(), 0);
  std::swap(perm[x.rank() - 1], perm[x.rank() - 2]);
  return permute(x, perm);
}

// [begin, end) along `axis`
template <typename T>
BasicTensor<T> slice(const BasicTensor<T>& x, std::size_t axis, std::size_t begin, std::size_t end) {
  if (axis >= x.rank() || begin > end || end > x.dim(axis)) {
    throw DimensionError("slice: [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                         std::to_string(axis) + " of " + to_string(x.shape()));
  }
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t len = end - begin;
  const std::size_t full = x.dim(axis);
  Shape out_shape = x.shape();
  out_shape[axis] = len;
  std::vector<T> out(outer * len * inner);
  const T* xd = x.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(xd + (o * full + begin) * inner, len * inner, out.data() + o * len * inner);
  }
  return detail::make_result<T>(std::move(out_shape), std::move(out), {x},
                                [outer, inner, len, full, begin](const detail::Node<T>& self, std::span<const T> g,
                                                                 detail::GradAccess<T>& acc) {
                                  auto& gx = acc(*self.parents[0]);
                                  for (std::size_t o = 0; o < outer; ++o) {
                                    const T* src = g.data() + o * len * inner;
                                    T* dst = gx.data() + (o * full + begin) * inner;
                                    for (std::size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
                                  }
                                });
}

template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& ref = parts.front().shape();
  if (axis >= ref.size()) throw DimensionError("concat: axis out of range");
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != ref.size()) throw DimensionError("concat: rank mismatch");
    for (std::size_t i = 0; i < ref.size(); ++i) {
      if (i != axis && p.dim(i) != ref[i]) throw DimensionError("concat: extent mismatch off the concat axis");
    }
    total += p.dim(axis);
  }
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= ref[i];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < ref.size(); ++i) inner *= ref[i];
  Shape out_shape = ref;
  out_shape[axis] = total;
  std::vector<T> out(outer * total * inner);
  std::vector<std::size_t> lens;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t len = p.dim(axis);
    lens.push_back(len);
    const T* pd = p.data().data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pd + o * len * inner, len * inner, out.data() + (o * total + offset) * inner);
    }
    offset += len;
  }
  return detail::make_result<T>(
      std::move(out_shape), std::move(out), parts,
      [outer, inner, total, lens = std::move(lens)](const detail::Node<T>& self, std::span<const T> g,
                                                    detail::GradAccess<T>& acc) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < lens.size(); ++k) {
          const auto& pn = *self.parents[k];
          const std::size_t len = lens[k];
          if (pn.requires_grad) {
            auto& gp = acc(pn);
            for (std::size_t o = 0; o < outer; ++o) {
              const T* src = g.data() + (o * total + off) * inner;
              T* dst = gp.data() + o * len * inner;
              for (std::size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
            }
          }
          off += len;
        }
      });
}

// ---------------------------------------------------------------------------
// Reductions (fixed sequential order, so results are reproducible)

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  T s = T(0);
  for (T v : x.data()) s += v;
  return detail::make_result<T>({}, {s}, {x},
                                [](const detail::Node<T>& self, std::span<const T> g, detail::GradAccess<T>& acc) {
                                  auto& gx = acc(*self.parents[0]);
                                  for (auto& v : gx) v += g[0];
                                });
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
  if (x.size() == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

// Mean over one axis, which is removed.
template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x, std::size_t axis) {
  if (axis >= x.rank() || x.dim(axis) == 0) throw DimensionError("mean: bad axis");
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t len = x.dim(axis);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<T> out(outer * inner, T(0));
  const T* xd = x.data().data();
  const T inv = T(1) / static_cast<T>(len);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t l = 0; l < len; ++l)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += xd[(o * len + l) * inner + i];
  for (auto& v : out) v *= inv;
  return detail::make_result<T>(std::move(out_shape), std::move(out), {x},
                                [outer, inner, len, inv](const detail::Node<T>& self, std::span<const T> g,
                                                         detail::GradAccess<T>& acc) {
                                  auto& gx = acc(*self.parents[0]);
                                  for (std::size_t o = 0; o < outer; ++o)
                                    for (std::size_t l = 0; l < len; ++l)
                                      for (std::size_t i = 0; i < inner; ++i)
                                        gx[(o * len + l) * inner + i] += g[o * inner + i] * inv;
                                });
}

// ---------------------------------------------------------------------------
// Embedding lookup: selected rows of a rank-2 table.

template <typename T>
BasicTensor<T> gather_rows(const BasicTensor<T>& table, const std::vector<std::size_t>& indices) {
  if (table.rank() != 2) throw DimensionError("gather_rows: table must be rank 2");
  const std::size_t v = table.dim(0);
  const std::size_t d = table.dim(1);
  std::vector<T> out(indices.size() * d);
  const T* td = table.data().data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= v) {
      throw DimensionError("gather_rows: index " + std::to_string(indices[i]) + " >= " + std::to_string(v));
    }
    std::copy_n(td + indices[i] * d, d, out.data() + i * d);
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(indices);
  return detail::make_result<T>(
      {indices.size(), d}, std::move(out), {table},
      [idx, d](const detail::Node<T>& self, std::span<const T> g, detail::GradAccess<T>& acc) {
        auto& gt = acc(*self.parents[0]);
        for (std::size_t i = 0; i < idx->size(); ++i) {
          T* dst = gt.data() + (*idx)[i] * d;
          const T* src = g.data() + i * d;
          for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
        }
      });
}

}  // namespace ard
