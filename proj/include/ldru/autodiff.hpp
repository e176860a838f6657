#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ldru/error.hpp"
#include "ldru/rng.hpp"

namespace ldru {

/// Dense row-major tensor. Every quantity the models need is rank <= 2;
/// vectors are stored as 1 x n.
template <typename T>
using Tensor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Index = Eigen::Index;
using RowIndex = std::vector<std::uint32_t>;

/// Learned tensor. `rank` is the logical rank (biases and norm parameters are
/// rank 1 even though they are stored as 1 x n).
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  int rank = 2;
};

template <typename T>
class Tape;

/// Handle to a node on a tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor<T>& value() const { return tape->value(id); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
};

inline std::string shape_str(Index r, Index c) {
  return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
}

/// Reverse-mode record. Nodes are appended in execution order, which is a
/// topological order, and backward() visits each once in reverse.
template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor<T>& grad)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var<T> constant(Tensor<T> v) { return push_node(std::move(v), nullptr, false, nullptr); }

  Var<T> variable(Tensor<T> v) {
    return push_node(std::move(v), nullptr, grad_enabled_, nullptr);
  }

  /// Leaf referencing a parameter's storage; memoized per parameter.
  Var<T> param(const Parameter<T>& p) {
    auto it = params_.find(&p);
    if (it != params_.end()) return {this, it->second};
    Var<T> v = push_node(Tensor<T>(), &p.value, grad_enabled_, nullptr);
    params_.emplace(&p, v.id);
    return v;
  }

  /// Appends an op result. The backward rule is dropped when no input
  /// requires a gradient.
  Var<T> push(Tensor<T> value, std::initializer_list<Var<T>> inputs, Backward bw) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || nodes_[in.id].requires_grad;
    needs = needs && grad_enabled_;
    return push_node(std::move(value), nullptr, needs, needs ? std::move(bw) : Backward());
  }

  const Tensor<T>& value(std::uint32_t id) const {
    const Node& n = nodes_[id];
    return n.ref ? *n.ref : n.owned;
  }
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }

  template <typename Expr>
  void accumulate(std::uint32_t id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
      n.grad = g;
      n.has_grad = true;
    } else {
      n.grad += g;
    }
  }

  void backward(Var<T> loss) {
    if (loss.rows() != 1 || loss.cols() != 1) {
      fail(ErrorCode::kShape, "backward: loss must be scalar, got " +
                                  shape_str(loss.rows(), loss.cols()));
    }
    nodes_[loss.id].grad = Tensor<T>::Ones(1, 1);
    nodes_[loss.id].has_grad = true;
    for (std::int64_t i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.has_grad && n.backward) n.backward(*this, n.grad);
    }
  }

  /// Gradient of a node; zero-filled when nothing flowed into it.
  Tensor<T> grad(Var<T> v) const {
    const Node& n = nodes_[v.id];
    if (n.has_grad) return n.grad;
    return Tensor<T>::Zero(value(v.id).rows(), value(v.id).cols());
  }

  Tensor<T> grad(const Parameter<T>& p) const {
    auto it = params_.find(&p);
    if (it == params_.end()) return Tensor<T>::Zero(p.value.rows(), p.value.cols());
    return grad(Var<T>{const_cast<Tape*>(this), it->second});
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* ref = nullptr;
    Tensor<T> grad;
    bool has_grad = false;
    bool requires_grad = false;
    Backward backward;
  };

  Var<T> push_node(Tensor<T> v, const Tensor<T>* ref, bool requires_grad, Backward bw) {
    Node n;
    n.owned = std::move(v);
    n.ref = ref;
    n.requires_grad = requires_grad;
    n.backward = std::move(bw);
    nodes_.push_back(std::move(n));
    return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T>*, std::uint32_t> params_;
};

namespace detail {

template <typename T>
void check_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(ErrorCode::kShape, std::string(op) + ": shape mismatch " + shape_str(a.rows(), a.cols()) +
                                " vs " + shape_str(b.rows(), b.cols()));
  }
}

/// out = a * b, accumulating each output row over k in a fixed order. A row's
/// result never depends on the other rows, which keeps evaluation bitwise
/// invariant to batch composition (Eigen's GEMM picks blockings by size).
template <typename T>
void matmul_rowwise(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& out) {
  const Index m = a.rows(), k = a.cols(), n = b.cols();
  out.setZero(m, n);
  const T* bd = b.data();
  Index i = 0;
  for (; i + 4 <= m; i += 4) {
    T* o0 = out.data() + (i + 0) * n;
    T* o1 = out.data() + (i + 1) * n;
    T* o2 = out.data() + (i + 2) * n;
    T* o3 = out.data() + (i + 3) * n;
    const T* a0 = a.data() + (i + 0) * k;
    const T* a1 = a.data() + (i + 1) * k;
    const T* a2 = a.data() + (i + 2) * k;
    const T* a3 = a.data() + (i + 3) * k;
    for (Index kk = 0; kk < k; ++kk) {
      const T s0 = a0[kk], s1 = a1[kk], s2 = a2[kk], s3 = a3[kk];
      const T* bk = bd + kk * n;
      for (Index j = 0; j < n; ++j) {
        const T bv = bk[j];
        o0[j] += s0 * bv;
        o1[j] += s1 * bv;
        o2[j] += s2 * bv;
        o3[j] += s3 * bv;
      }
    }
  }
  for (; i < m; ++i) {
    T* o = out.data() + i * n;
    const T* ai = a.data() + i * k;
    for (Index kk = 0; kk < k; ++kk) {
      const T s = ai[kk];
      const T* bk = bd + kk * n;
      for (Index j = 0; j < n; ++j) o[j] += s * bk[j];
    }
  }
}

template <typename T>
T sigmoid_scalar(T x) {
  return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

}  // namespace detail

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.cols() != bv.rows()) {
    fail(ErrorCode::kShape, "matmul: " + shape_str(av.rows(), av.cols()) + " x " +
                                shape_str(bv.rows(), bv.cols()));
  }
  Tensor<T> out;
  detail::matmul_rowwise(av, bv, out);
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g) {
    if (t.requires_grad(a.id)) t.accumulate(a.id, (g * t.value(b.id).transpose()).eval());
    if (t.requires_grad(b.id)) t.accumulate(b.id, (t.value(a.id).transpose() * g).eval());
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::check_same_shape("add", a.value(), b.value());
  Tensor<T> out = a.value() + b.value();
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(a.id, g);
    t.accumulate(b.id, g);
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  detail::check_same_shape("sub", a.value(), b.value());
  Tensor<T> out = a.value() - b.value();
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(a.id, g);
    t.accumulate(b.id, (-g).eval());
  });
}

/// a + bias with a 1 x n bias broadcast over rows.
template <typename T>
Var<T> add_row(Var<T> a, Var<T> bias) {
  const Tensor<T>& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != a.cols()) {
    fail(ErrorCode::kShape, "add_row: " + shape_str(a.rows(), a.cols()) + " + " +
                                shape_str(bv.rows(), bv.cols()));
  }
  Tensor<T> out = a.value();
  out.rowwise() += bv.row(0);
  return a.tape->push(std::move(out), {a, bias}, [a, bias](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(a.id, g);
    if (t.requires_grad(bias.id)) t.accumulate(bias.id, g.colwise().sum().eval());
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::check_same_shape("mul", a.value(), b.value());
  Tensor<T> out = a.value().cwiseProduct(b.value());
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g) {
    if (t.requires_grad(a.id)) t.accumulate(a.id, g.cwiseProduct(t.value(b.id)).eval());
    if (t.requires_grad(b.id)) t.accumulate(b.id, g.cwiseProduct(t.value(a.id)).eval());
  });
}

/// scale * a + shift, elementwise.
template <typename T>
Var<T> affine(Var<T> a, T scale, T shift) {
  Tensor<T> out = (a.value().array() * scale + shift).matrix();
  return a.tape->push(std::move(out), {a}, [a, scale](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(a.id, (g * scale).eval());
  });
}

template <typename T>
Var<T> concat_cols(Var<T> a, Var<T> b) {
  if (a.rows() != b.rows()) {
    fail(ErrorCode::kShape, "concat_last_dim: " + shape_str(a.rows(), a.cols()) + " | " +
                                shape_str(b.rows(), b.cols()));
  }
  const Index ca = a.cols(), cb = b.cols();
  Tensor<T> out(a.rows(), ca + cb);
  out.leftCols(ca) = a.value();
  out.rightCols(cb) = b.value();
  return a.tape->push(std::move(out), {a, b}, [a, b, ca, cb](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(a.id, g.leftCols(ca).eval());
    t.accumulate(b.id, g.rightCols(cb).eval());
  });
}

/// Columns [begin, begin + width).
template <typename T>
Var<T> slice_cols(Var<T> a, Index begin, Index width) {
  if (begin < 0 || width < 0 || begin + width > a.cols()) {
    fail(ErrorCode::kShape, "split_last_dim: columns [" + std::to_string(begin) + ", " +
                                std::to_string(begin + width) + ") of " +
                                shape_str(a.rows(), a.cols()));
  }
  Tensor<T> out = a.value().middleCols(begin, width);
  const Index total = a.cols();
  return a.tape->push(std::move(out), {a},
                      [a, begin, width, total](Tape<T>& t, const Tensor<T>& g) {
                        Tensor<T> full = Tensor<T>::Zero(g.rows(), total);
                        full.middleCols(begin, width) = g;
                        t.accumulate(a.id, full);
                      });
}

/// Splits the last dimension at `left_cols`.
template <typename T>
std::pair<Var<T>, Var<T>> split_cols(Var<T> a, Index left_cols) {
  return {slice_cols(a, 0, left_cols), slice_cols(a, left_cols, a.cols() - left_cols)};
}

template <typename T>
Var<T> concat_rows(Var<T> a, Var<T> b) {
  if (a.cols() != b.cols()) {
    fail(ErrorCode::kShape, "concat_rows: " + shape_str(a.rows(), a.cols()) + " over " +
                                shape_str(b.rows(), b.cols()));
  }
  const Index ra = a.rows(), rb = b.rows();
  Tensor<T> out(ra + rb, a.cols());
  out.topRows(ra) = a.value();
  out.bottomRows(rb) = b.value();
  return a.tape->push(std::move(out), {a, b}, [a, b, ra, rb](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(a.id, g.topRows(ra).eval());
    t.accumulate(b.id, g.bottomRows(rb).eval());
  });
}

/// out.row(i) = a.row(idx[i]); backward scatter-adds.
template <typename T>
Var<T> gather_rows(Var<T> a, RowIndex idx) {
  const Tensor<T>& av = a.value();
  Tensor<T> out(static_cast<Index>(idx.size()), av.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= av.rows()) {
      fail(ErrorCode::kShape, "gather_rows: index " + std::to_string(idx[i]) + " into " +
                                  shape_str(av.rows(), av.cols()));
    }
    out.row(static_cast<Index>(i)) = av.row(idx[i]);
  }
  const Index rows = av.rows();
  return a.tape->push(std::move(out), {a},
                      [a, idx = std::move(idx), rows](Tape<T>& t, const Tensor<T>& g) {
                        Tensor<T> full = Tensor<T>::Zero(rows, g.cols());
                        for (std::size_t i = 0; i < idx.size(); ++i) {
                          full.row(idx[i]) += g.row(static_cast<Index>(i));
                        }
                        t.accumulate(a.id, full);
                      });
}

template <typename T>
Var<T> embedding_lookup(Var<T> table, const std::vector<std::uint32_t>& ids) {
  return gather_rows(table, RowIndex(ids.begin(), ids.end()));
}

template <typename T>
Var<T> relu(Var<T> a) {
  Tensor<T> out = a.value().cwiseMax(T(0));
  return a.tape->push(std::move(out), {a}, [a](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& x = t.value(a.id);
    t.accumulate(a.id, (x.array() > T(0)).select(g, T(0)).eval());
  });
}

template <typename T>
Var<T> tanh(Var<T> a) {
  Tensor<T> out = a.value().unaryExpr([](T x) { return std::tanh(x); });
  const std::uint32_t self = static_cast<std::uint32_t>(a.tape->size());
  return a.tape->push(std::move(out), {a}, [a, self](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& y = t.value(self);
    t.accumulate(a.id, g.cwiseProduct((T(1) - y.array().square()).matrix()).eval());
  });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  Tensor<T> out = a.value().unaryExpr([](T x) { return detail::sigmoid_scalar(x); });
  const std::uint32_t self = static_cast<std::uint32_t>(a.tape->size());
  return a.tape->push(std::move(out), {a}, [a, self](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& y = t.value(self);
    t.accumulate(a.id, g.cwiseProduct((y.array() * (T(1) - y.array())).matrix()).eval());
  });
}

template <typename T>
Var<T> silu(Var<T> a) {
  Tensor<T> out = a.value().unaryExpr([](T x) { return x * detail::sigmoid_scalar(x); });
  return a.tape->push(std::move(out), {a}, [a](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> d = t.value(a.id).unaryExpr([](T x) {
      const T s = detail::sigmoid_scalar(x);
      return s * (T(1) + x * (T(1) - s));
    });
    t.accumulate(a.id, g.cwiseProduct(d).eval());
  });
}

inline constexpr double kLayerNormEps = 1e-5;

/// Normalizes each row over the last dimension, then applies scale/shift
/// (each 1 x n).
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> scale, Var<T> shift, T eps = T(kLayerNormEps)) {
  const Tensor<T>& xv = x.value();
  const Index m = xv.rows(), n = xv.cols();
  if (scale.rows() != 1 || scale.cols() != n || shift.rows() != 1 || shift.cols() != n) {
    fail(ErrorCode::kShape, "layer_norm: input " + shape_str(m, n) + " with scale " +
                                shape_str(scale.rows(), scale.cols()));
  }
  Tensor<T> xhat(m, n);
  Tensor<T> inv(m, 1);
  for (Index i = 0; i < m; ++i) {
    const T* row = xv.data() + i * n;
    T mean = 0;
    for (Index j = 0; j < n; ++j) mean += row[j];
    mean /= T(n);
    T var = 0;
    for (Index j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= T(n);
    const T r = T(1) / std::sqrt(var + eps);
    inv(i, 0) = r;
    for (Index j = 0; j < n; ++j) xhat(i, j) = (row[j] - mean) * r;
  }
  Tensor<T> out = xhat;
  out.array().rowwise() *= scale.value().row(0).array();
  out.rowwise() += shift.value().row(0);
  return x.tape->push(
      std::move(out), {x, scale, shift},
      [x, scale, shift, xhat = std::move(xhat), inv = std::move(inv)](Tape<T>& t,
                                                                      const Tensor<T>& g) {
        if (t.requires_grad(scale.id)) {
          t.accumulate(scale.id, g.cwiseProduct(xhat).colwise().sum().eval());
        }
        if (t.requires_grad(shift.id)) t.accumulate(shift.id, g.colwise().sum().eval());
        if (t.requires_grad(x.id)) {
          Tensor<T> dxhat = g;
          dxhat.array().rowwise() *= t.value(scale.id).row(0).array();
          const Index n = dxhat.cols();
          Tensor<T> dx(dxhat.rows(), n);
          for (Index i = 0; i < dxhat.rows(); ++i) {
            const T mean_d = dxhat.row(i).sum() / T(n);
            const T mean_dx = dxhat.row(i).dot(xhat.row(i)) / T(n);
            dx.row(i) = inv(i, 0) * (dxhat.row(i).array() - mean_d - xhat.row(i).array() * mean_dx)
                                        .matrix();
          }
          t.accumulate(x.id, dx);
        }
      });
}

/// Inverted dropout. Identity when `rng` is null (eval mode) or p == 0.
template <typename T>
Var<T> dropout(Var<T> a, double p, Rng* rng) {
  if (p < 0.0 || p >= 1.0) fail(ErrorCode::kConfig, "dropout: p must be in [0, 1)");
  if (rng == nullptr || p == 0.0) return a;
  const T keep_scale = T(1.0 / (1.0 - p));
  Tensor<T> mask(a.rows(), a.cols());
  for (Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = rng->uniform() >= p ? keep_scale : T(0);
  }
  Tensor<T> out = a.value().cwiseProduct(mask);
  return a.tape->push(std::move(out), {a}, [a, mask = std::move(mask)](Tape<T>& t,
                                                                     const Tensor<T>& g) {
    t.accumulate(a.id, g.cwiseProduct(mask).eval());
  });
}

template <typename T>
Var<T> reduce_sum(Var<T> a) {
  Tensor<T> out(1, 1);
  out(0, 0) = a.value().sum();
  const Index r = a.rows(), c = a.cols();
  return a.tape->push(std::move(out), {a}, [a, r, c](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(a.id, Tensor<T>::Constant(r, c, g(0, 0)));
  });
}

template <typename T>
Var<T> reduce_mean(Var<T> a) {
  const Index r = a.rows(), c = a.cols();
  if (r * c == 0) fail(ErrorCode::kShape, "reduce_mean: empty input");
  Tensor<T> out(1, 1);
  out(0, 0) = a.value().sum() / T(r * c);
  return a.tape->push(std::move(out), {a}, [a, r, c](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(a.id, Tensor<T>::Constant(r, c, g(0, 0) / T(r * c)));
  });
}

inline constexpr double kCosineEps = 1e-8;

/// Row-wise x.y / (|x||y| + eps), returned as m x 1.
template <typename T>
Var<T> cosine_similarity(Var<T> a, Var<T> b, T eps = T(kCosineEps)) {
  detail::check_same_shape("cosine_similarity", a.value(), b.value());
  const Index m = a.rows();
  Tensor<T> out(m, 1), dots(m, 1), na(m, 1), nb(m, 1);
  for (Index i = 0; i < m; ++i) {
    dots(i, 0) = a.value().row(i).dot(b.value().row(i));
    na(i, 0) = a.value().row(i).norm();
    nb(i, 0) = b.value().row(i).norm();
    out(i, 0) = dots(i, 0) / (na(i, 0) * nb(i, 0) + eps);
  }
  return a.tape->push(std::move(out), {a, b},
                      [a, b, eps, dots = std::move(dots), na = std::move(na),
                       nb = std::move(nb)](Tape<T>& t, const Tensor<T>& g) {
                        const Tensor<T>& av = t.value(a.id);
                        const Tensor<T>& bv = t.value(b.id);
                        Tensor<T> ga(av.rows(), av.cols()), gb(bv.rows(), bv.cols());
                        for (Index i = 0; i < av.rows(); ++i) {
                          const T den = na(i, 0) * nb(i, 0) + eps;
                          const T k = dots(i, 0) / (den * den);
                          ga.row(i) = bv.row(i) / den;
                          gb.row(i) = av.row(i) / den;
                          if (na(i, 0) > T(0)) ga.row(i) -= k * nb(i, 0) / na(i, 0) * av.row(i);
                          if (nb(i, 0) > T(0)) gb.row(i) -= k * na(i, 0) / nb(i, 0) * bv.row(i);
                          ga.row(i) *= g(i, 0);
                          gb.row(i) *= g(i, 0);
                        }
                        t.accumulate(a.id, ga);
                        t.accumulate(b.id, gb);
                      });
}

/// Mean over rows of -log softmax(logits)[label].
template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, const std::vector<std::uint32_t>& labels) {
  const Tensor<T>& z = logits.value();
  const Index m = z.rows(), c = z.cols();
  if (static_cast<Index>(labels.size()) != m || m == 0) {
    fail(ErrorCode::kShape, "softmax_cross_entropy: " + std::to_string(labels.size()) +
                                " labels for logits " + shape_str(m, c));
  }
  Tensor<T> probs(m, c);
  T loss = 0;
  for (Index i = 0; i < m; ++i) {
    if (labels[i] >= c) fail(ErrorCode::kShape, "softmax_cross_entropy: label out of range");
    const T mx = z.row(i).maxCoeff();
    T sum = 0;
    for (Index j = 0; j < c; ++j) {
      probs(i, j) = std::exp(z(i, j) - mx);
      sum += probs(i, j);
    }
    probs.row(i) /= sum;
    loss += std::log(sum) + mx - z(i, labels[i]);
  }
  Tensor<T> out(1, 1);
  out(0, 0) = loss / T(m);
  return logits.tape->push(std::move(out), {logits},
                           [logits, labels, probs = std::move(probs)](Tape<T>& t,
                                                                      const Tensor<T>& g) {
                             Tensor<T> d = probs;
                             for (Index i = 0; i < d.rows(); ++i) d(i, labels[i]) -= T(1);
                             d *= g(0, 0) / T(d.rows());
                             t.accumulate(logits.id, d);
                           });
}

/// |a - n| / max(|a|, |n|, 1e-8).
template <typename T>
T relative_error(T analytic, T numeric) {
  const T den = std::max({std::abs(analytic), std::abs(numeric), T(1e-8)});
  return std::abs(analytic - numeric) / den;
}

template <typename T>
using ScalarFn = std::function<Var<T>(Tape<T>&, Var<T>)>;

/// Max relative error between reverse-mode and central-difference gradients
/// of f at x.
template <typename T>
T grad_check(const ScalarFn<T>& f, const Tensor<T>& x, T eps) {
  Tape<T> tape;
  Var<T> xv = tape.variable(x);
  Var<T> y = f(tape, xv);
  tape.backward(y);
  const Tensor<T> analytic = tape.grad(xv);

  auto eval = [&](const Tensor<T>& at) {
    Tape<T> t(false);
    return f(t, t.variable(at)).value()(0, 0);
  };
  T worst = 0;
  Tensor<T> probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    const T orig = probe.data()[i];
    probe.data()[i] = orig + eps;
    const T up = eval(probe);
    probe.data()[i] = orig - eps;
    const T down = eval(probe);
    probe.data()[i] = orig;
    worst = std::max(worst, relative_error(analytic.data()[i], (up - down) / (T(2) * eps)));
  }
  return worst;
}

/// Same check over model parameters, perturbing them in place. At most
/// `max_coords` evenly strided coordinates are probed per parameter.
template <typename T>
T grad_check_parameters(const std::vector<Parameter<T>*>& params,
                        const std::function<Var<T>(Tape<T>&)>& loss, T eps,
                        Index max_coords = 64) {
  Tape<T> tape;
  tape.backward(loss(tape));
  T worst = 0;
  for (Parameter<T>* p : params) {
    const Tensor<T> analytic = tape.grad(*p);
    const Index n = p->value.size();
    const Index stride = std::max<Index>(1, n / max_coords);
    for (Index i = 0; i < n; i += stride) {
      const T orig = p->value.data()[i];
      p->value.data()[i] = orig + eps;
      Tape<T> up_tape(false);
      const T up = loss(up_tape).value()(0, 0);
      p->value.data()[i] = orig - eps;
      Tape<T> down_tape(false);
      const T down = loss(down_tape).value()(0, 0);
      p->value.data()[i] = orig;
      worst = std::max(worst, relative_error(analytic.data()[i], (up - down) / (T(2) * eps)));
    }
  }
  return worst;
}

}  // namespace ldru
