// SPDX-License-Identifier: Apache-2.0
//
// Tape-based reverse-mode differentiation over Tensor values.
//
// Values flow through `Var` handles. A Var is tracked (owns a tape node) only
// if it depends on a trainable leaf; every op on untracked inputs runs eagerly
// and records nothing, so frozen sub-graphs cost no gradient storage.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "epic/tensor.hpp"

namespace epic {

class Tape;

class Var {
 public:
  Var() = default;

  /// Owning constant (inputs, intermediate results of untracked ops).
  static Var constant(Tensor t) {
    Var v;
    v.value_ = std::make_shared<const Tensor>(std::move(t));
    return v;
  }

  /// Non-owning view of a long-lived tensor such as a frozen weight. The
  /// referenced tensor must outlive every Var and tape derived from it.
  static Var view(const Tensor& t) {
    Var v;
    v.value_ = std::shared_ptr<const Tensor>(std::shared_ptr<const Tensor>{}, &t);
    v.persistent_ = true;
    return v;
  }

  [[nodiscard]] const Tensor& value() const { return *value_; }
  [[nodiscard]] const std::shared_ptr<const Tensor>& shared() const { return value_; }
  [[nodiscard]] const Shape& shape() const { return value_->shape(); }
  [[nodiscard]] bool defined() const noexcept { return static_cast<bool>(value_); }
  [[nodiscard]] bool tracked() const noexcept { return node_ >= 0; }
  [[nodiscard]] bool persistent() const noexcept { return persistent_; }
  [[nodiscard]] Tape* tape() const noexcept { return tape_; }
  [[nodiscard]] std::int64_t node() const noexcept { return node_; }

 private:
  friend class Tape;
  std::shared_ptr<const Tensor> value_;
  Tape* tape_ = nullptr;
  std::int64_t node_ = -1;
  bool persistent_ = false;
};

/// grad_in[i] is null when input i is untracked. Implementations accumulate
/// (+=) into the non-null buffers, which arrive zero-initialised on first use.
using BackwardFn = std::function<void(const Tensor& grad_out, std::span<Tensor* const> grad_in)>;

class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  [[nodiscard]] bool recording() const noexcept { return recording_; }

  /// Trainable parameters become tracked leaves; frozen ones (or any
  /// parameter on a non-recording tape) become persistent constant views.
  Var leaf(Parameter& p) {
    Var v = Var::view(p.value);
    if (!recording_ || !p.requires_grad()) return v;
    Node n;
    n.op = "leaf";
    n.leaf = &p;
    n.extent = p.value.size();
    nodes_.push_back(std::move(n));
    v.tape_ = this;
    v.node_ = static_cast<std::int64_t>(nodes_.size() - 1);
    return v;
  }

  Var record(std::string_view op, std::span<const Var* const> inputs, Tensor out, BackwardFn fn,
             std::size_t saved_floats) {
    Node n;
    n.op = op;
    n.inputs.reserve(inputs.size());
    for (const Var* in : inputs) {
      if (in->tracked() && in->tape_ != this)
        throw std::logic_error(std::string(op) + ": inputs recorded on different tapes");
      n.inputs.push_back(in->node_);
    }
    n.fn = std::move(fn);
    n.extent = out.size();
    n.saved = saved_floats;
    saved_total_ += saved_floats;
    nodes_.push_back(std::move(n));
    Var v = Var::constant(std::move(out));
    v.tape_ = this;
    v.node_ = static_cast<std::int64_t>(nodes_.size() - 1);
    return v;
  }

  /// Propagates d(seed * loss) to every trainable leaf reachable from
  /// `loss`, accumulating into Parameter::grad.
  void backward(const Var& loss, double seed = 1.0) {
    if (loss.value().size() != 1)
      throw ShapeError("backward: loss must be a scalar, got " + shape_str(loss.shape()));
    if (!loss.tracked() || loss.tape_ != this)
      throw std::logic_error("backward: loss is detached from every trainable leaf");
    const auto last = static_cast<std::size_t>(loss.node_);
    std::vector<Tensor> grads(last + 1);
    grads[last] = Tensor(Shape{1}, seed);
    buffers_allocated_ = 1;
    std::vector<Tensor*> gin;
    for (std::size_t i = last + 1; i-- > 0;) {
      if (grads[i].empty()) continue;
      Node& n = nodes_[i];
      if (n.leaf != nullptr) {
        Parameter& p = *n.leaf;
        if (p.grad.empty()) p.grad = Tensor(p.value.shape());
        const Tensor& g = grads[i];
        for (std::size_t k = 0; k < g.size(); ++k) p.grad[k] += g[k];
      } else {
        gin.assign(n.inputs.size(), nullptr);
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const std::int64_t src = n.inputs[k];
          if (src < 0) continue;
          Tensor& g = grads[static_cast<std::size_t>(src)];
          if (g.empty()) {
            g = Tensor(Shape{nodes_[static_cast<std::size_t>(src)].extent});
            ++buffers_allocated_;
          }
          gin[k] = &g;
        }
        // Gradient buffers are flat; ops index them by their own shapes.
        n.fn(grads[i], gin);
      }
      grads[i] = Tensor();
    }
  }

  [[nodiscard]] std::size_t num_nodes() const noexcept { return nodes_.size(); }
  /// Non-persistent floats captured by backward closures so far.
  [[nodiscard]] std::size_t saved_activation_floats() const noexcept { return saved_total_; }
  [[nodiscard]] std::size_t grad_buffers_allocated() const noexcept { return buffers_allocated_; }
  [[nodiscard]] std::string_view op_name(std::size_t node) const { return nodes_.at(node).op; }

 private:
  struct Node {
    std::string_view op;
    std::vector<std::int64_t> inputs;
    BackwardFn fn;
    Parameter* leaf = nullptr;
    std::size_t extent = 0;
    std::size_t saved = 0;
  };

  bool recording_;
  std::vector<Node> nodes_;
  std::size_t saved_total_ = 0;
  std::size_t buffers_allocated_ = 0;
};

namespace detail {

inline Tape* common_tape(std::span<const Var* const> inputs) {
  Tape* t = nullptr;
  for (const Var* v : inputs)
    if (v->tracked()) t = v->tape();
  return t;
}

inline std::size_t saved(const Var& v) { return v.persistent() ? 0 : v.value().size(); }

inline void check_finite(std::string_view op, const Tensor& out) {
  if (!out.all_finite())
    throw NumericError(std::string(op), "non-finite value produced by op '" + std::string(op) + "'");
}

/// Shared tail of every op: validate the result, then record it if any
/// input is tracked.
inline Var finish(std::string_view op, std::initializer_list<const Var*> inputs, Tensor out,
                  const std::function<BackwardFn()>& make_backward, std::size_t saved_floats) {
  check_finite(op, out);
  std::span<const Var* const> in(inputs.begin(), inputs.size());
  Tape* tape = common_tape(in);
  if (tape == nullptr) return Var::constant(std::move(out));
  return tape->record(op, in, std::move(out), make_backward(), saved_floats);
}

// C (MxN) += A (MxK) * B (KxN)
inline void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                    std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C (MxN) += A (MxK) * B^T, B is (NxK)
inline void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                    std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      c[i * n + j] += s;
    }
  }
}

// C (MxN) += A^T * B, A is (KxM), B is (KxN)
inline void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                    std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a + p * m;
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = ap[i];
      double* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

inline AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i < axis) r.outer *= s[i];
    else if (i == axis) r.n = s[i];
    else r.inner *= s[i];
  }
  return r;
}

enum class Broadcast { None, Row, Col };

/// How `b` broadcasts against `a`: equal shapes, a single row repeated over
/// a's rows, or a single column repeated over a's columns.
inline Broadcast broadcast_kind(std::string_view op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::None;
  if (a.rank() == 2) {
    const bool row = (b.rank() == 2 && b.dim(0) == 1 && b.dim(1) == a.dim(1)) ||
                     (b.rank() == 1 && b.dim(0) == a.dim(1));
    if (row) return Broadcast::Row;
    if (b.rank() == 2 && b.dim(1) == 1 && b.dim(0) == a.dim(0)) return Broadcast::Col;
  }
  throw ShapeError(std::string(op) + ": cannot combine shapes " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitives

inline Var matmul(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0))
    throw ShapeError("matmul: incompatible shapes " + shape_str(A.shape()) + " and " +
                     shape_str(B.shape()));
  const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
  Tensor out({m, n});
  detail::gemm_nn(A.data(), B.data(), out.data(), m, k, n);
  const std::size_t saved = (b.tracked() ? detail::saved(a) : 0) + (a.tracked() ? detail::saved(b) : 0);
  return detail::finish("matmul", {&a, &b}, std::move(out), [&] {
    return [pa = a.shared(), pb = b.shared(), m, k, n](const Tensor& g, std::span<Tensor* const> gi) {
      if (gi[0]) detail::gemm_nt(g.data(), pb->data(), gi[0]->data(), m, n, k);
      if (gi[1]) detail::gemm_tn(pa->data(), g.data(), gi[1]->data(), k, m, n);
    };
  }, saved);
}

/// a + b, where b may be a row (bias) or column broadcast over a.
inline Var add(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const auto kind = detail::broadcast_kind("add", A, B);
  Tensor out = A;
  const std::size_t r = A.rows(), c = A.cols();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const std::size_t bi = kind == detail::Broadcast::None ? i * c + j
                             : kind == detail::Broadcast::Row ? j : i;
      out[i * c + j] += B[bi];
    }
  return detail::finish("add", {&a, &b}, std::move(out), [&] {
    return [kind, r, c](const Tensor& g, std::span<Tensor* const> gi) {
      if (gi[0])
        for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
      if (gi[1])
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) {
            const std::size_t bi = kind == detail::Broadcast::None ? i * c + j
                                   : kind == detail::Broadcast::Row ? j : i;
            (*gi[1])[bi] += g[i * c + j];
          }
    };
  }, 0);
}

/// alpha * a + beta, elementwise.
inline Var scale(const Var& a, double alpha, double beta = 0.0) {
  Tensor out = a.value();
  for (double& v : out.values()) v = alpha * v + beta;
  return detail::finish("scale", {&a}, std::move(out), [&] {
    return [alpha](const Tensor& g, std::span<Tensor* const> gi) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += alpha * g[i];
    };
  }, 0);
}

inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t c = parts[0].value().cols();
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.value().rank() != 2 || p.value().cols() != c)
      throw ShapeError("concat_rows: shape " + shape_str(p.shape()) + " does not have " +
                       std::to_string(c) + " columns");
    total += p.value().rows();
  }
  std::vector<double> data;
  data.reserve(total * c);
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    offsets.push_back(data.size());
    data.insert(data.end(), p.value().values().begin(), p.value().values().end());
  }
  Tensor out({total, c}, std::move(data));
  detail::check_finite("concat_rows", out);
  std::vector<const Var*> ins;
  for (const Var& p : parts) ins.push_back(&p);
  Tape* tape = detail::common_tape(ins);
  if (tape == nullptr) return Var::constant(std::move(out));
  std::vector<std::size_t> sizes;
  for (const Var& p : parts) sizes.push_back(p.value().size());
  return tape->record("concat_rows", ins, std::move(out),
                      [offsets, sizes](const Tensor& g, std::span<Tensor* const> gi) {
                        for (std::size_t k = 0; k < gi.size(); ++k) {
                          if (!gi[k]) continue;
                          for (std::size_t i = 0; i < sizes[k]; ++i) (*gi[k])[i] += g[offsets[k] + i];
                        }
                      },
                      0);
}

inline std::vector<Var> split_rows(const Var& a, const std::vector<std::size_t>& row_counts) {
  const Tensor& A = a.value();
  std::size_t total = 0;
  for (std::size_t r : row_counts) total += r;
  if (A.rank() != 2 || total != A.rows())
    throw ShapeError("split_rows: row counts sum to " + std::to_string(total) + " but input is " +
                     shape_str(A.shape()));
  const std::size_t c = A.cols();
  std::vector<Var> out;
  std::size_t row = 0;
  for (std::size_t r : row_counts) {
    std::vector<double> d(A.values().begin() + static_cast<std::ptrdiff_t>(row * c),
                          A.values().begin() + static_cast<std::ptrdiff_t>((row + r) * c));
    const std::size_t offset = row * c;
    out.push_back(detail::finish("split_rows", {&a}, Tensor({r, c}, std::move(d)), [&] {
      return [offset](const Tensor& g, std::span<Tensor* const> gi) {
        for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[offset + i] += g[i];
      };
    }, 0));
    row += r;
  }
  return out;
}

inline Var relu(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return detail::finish("relu", {&a}, std::move(out), [&] {
    return [pa = a.shared()](const Tensor& g, std::span<Tensor* const> gi) {
      for (std::size_t i = 0; i < g.size(); ++i)
        if ((*pa)[i] > 0.0) (*gi[0])[i] += g[i];
    };
  }, detail::saved(a));
}

/// Max-subtracted softmax along `axis`.
inline Var softmax(const Var& a, std::size_t axis) {
  const Tensor& A = a.value();
  if (axis >= A.rank())
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(A.shape()));
  const auto s = detail::split_axis(A.shape(), axis);
  Tensor out(A.shape());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.n * s.inner + in;
      double mx = A[base];
      for (std::size_t k = 1; k < s.n; ++k) mx = std::max(mx, A[base + k * s.inner]);
      double sum = 0.0;
      for (std::size_t k = 0; k < s.n; ++k) {
        const double e = std::exp(A[base + k * s.inner] - mx);
        out[base + k * s.inner] = e;
        sum += e;
      }
      for (std::size_t k = 0; k < s.n; ++k) out[base + k * s.inner] /= sum;
    }
  auto shared_out = std::make_shared<const Tensor>(out);
  return detail::finish("softmax", {&a}, std::move(out), [&] {
    return [y = shared_out, s](const Tensor& g, std::span<Tensor* const> gi) {
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t in = 0; in < s.inner; ++in) {
          const std::size_t base = o * s.n * s.inner + in;
          double dot = 0.0;
          for (std::size_t k = 0; k < s.n; ++k) dot += g[base + k * s.inner] * (*y)[base + k * s.inner];
          for (std::size_t k = 0; k < s.n; ++k) {
            const std::size_t idx = base + k * s.inner;
            (*gi[0])[idx] += (*y)[idx] * (g[idx] - dot);
          }
        }
    };
  }, A.size());
}

/// Normalises each row over its last axis, then applies gain and bias
/// (each of extent cols).
inline Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5) {
  const Tensor& X = x.value();
  const std::size_t r = X.rows(), c = X.cols();
  if (gain.value().size() != c || bias.value().size() != c)
    throw ShapeError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " +
                     shape_str(bias.shape()) + " do not match input " + shape_str(X.shape()));
  Tensor xhat(X.shape());
  std::vector<double> inv_std(r);
  Tensor out(X.shape());
  const Tensor& G = gain.value();
  const Tensor& B = bias.value();
  for (std::size_t i = 0; i < r; ++i) {
    const double* xi = X.data() + i * c;
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += xi[j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (xi[j] - mean) * inv_std[i];
      out[i * c + j] = xhat[i * c + j] * G[j] + B[j];
    }
  }
  const std::size_t saved = (x.tracked() || gain.tracked()) ? X.size() + r : 0;
  return detail::finish("layer_norm", {&x, &gain, &bias}, std::move(out), [&] {
    return [xh = std::make_shared<const Tensor>(std::move(xhat)), istd = std::move(inv_std), pg = gain.shared(), r,
            c](const Tensor& g, std::span<Tensor* const> gi) {
      const Tensor& G = *pg;
      for (std::size_t i = 0; i < r; ++i) {
        const double* gr = g.data() + i * c;
        const double* xr = xh->data() + i * c;
        if (gi[1])
          for (std::size_t j = 0; j < c; ++j) (*gi[1])[j] += gr[j] * xr[j];
        if (gi[2])
          for (std::size_t j = 0; j < c; ++j) (*gi[2])[j] += gr[j];
        if (gi[0]) {
          double m1 = 0.0, m2 = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            const double gy = gr[j] * G[j];
            m1 += gy;
            m2 += gy * xr[j];
          }
          m1 /= static_cast<double>(c);
          m2 /= static_cast<double>(c);
          for (std::size_t j = 0; j < c; ++j)
            (*gi[0])[i * c + j] += istd[i] * (gr[j] * G[j] - m1 - xr[j] * m2);
        }
      }
    };
  }, saved);
}

inline Var transpose(const Var& a) {
  const Tensor& A = a.value();
  if (A.rank() != 2) throw ShapeError("transpose: expected a matrix, got " + shape_str(A.shape()));
  const std::size_t r = A.dim(0), c = A.dim(1);
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = A[i * c + j];
  return detail::finish("transpose", {&a}, std::move(out), [&] {
    return [r, c](const Tensor& g, std::span<Tensor* const> gi) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*gi[0])[i * c + j] += g[j * r + i];
    };
  }, 0);
}

/// Mean along `axis`, keeping that axis with extent 1.
inline Var mean(const Var& a, std::size_t axis) {
  const Tensor& A = a.value();
  if (axis >= A.rank())
    throw ShapeError("mean: axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(A.shape()));
  const auto s = detail::split_axis(A.shape(), axis);
  Shape os = A.shape();
  os[axis] = 1;
  Tensor out(os);
  const double inv = 1.0 / static_cast<double>(s.n);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t in = 0; in < s.inner; ++in) {
      double sum = 0.0;
      for (std::size_t k = 0; k < s.n; ++k) sum += A[o * s.n * s.inner + k * s.inner + in];
      out[o * s.inner + in] = sum * inv;
    }
  return detail::finish("mean", {&a}, std::move(out), [&] {
    return [s, inv](const Tensor& g, std::span<Tensor* const> gi) {
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t in = 0; in < s.inner; ++in)
          for (std::size_t k = 0; k < s.n; ++k)
            (*gi[0])[o * s.n * s.inner + k * s.inner + in] += g[o * s.inner + in] * inv;
    };
  }, 0);
}

/// a ⊙ b, where b may be a row or column broadcast over a.
inline Var elementwise_mul(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const auto kind = detail::broadcast_kind("elementwise_mul", A, B);
  const std::size_t r = A.rows(), c = A.cols();
  auto bindex = [kind, c](std::size_t i, std::size_t j) {
    return kind == detail::Broadcast::None ? i * c + j : kind == detail::Broadcast::Row ? j : i;
  };
  Tensor out(A.shape());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = A[i * c + j] * B[bindex(i, j)];
  const std::size_t saved = (b.tracked() ? detail::saved(a) : 0) + (a.tracked() ? detail::saved(b) : 0);
  return detail::finish("elementwise_mul", {&a, &b}, std::move(out), [&] {
    return [pa = a.shared(), pb = b.shared(), r, c, bindex](const Tensor& g, std::span<Tensor* const> gi) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
          const std::size_t k = i * c + j;
          if (gi[0]) (*gi[0])[k] += g[k] * (*pb)[bindex(i, j)];
          if (gi[1]) (*gi[1])[bindex(i, j)] += g[k] * (*pa)[k];
        }
    };
  }, saved);
}

/// Sum of all entries, as a shape-[1] scalar.
inline Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return detail::finish("sum", {&a}, Tensor(Shape{1}, s), [&] {
    return [](const Tensor& g, std::span<Tensor* const> gi) {
      for (double& v : gi[0]->values()) v += g[0];
    };
  }, 0);
}

/// Extension point for composite ops with a hand-written backward. `saved`
/// is the number of activation floats the closure keeps alive.
inline Var custom_op(std::string_view name, std::initializer_list<const Var*> inputs, Tensor out,
                     BackwardFn backward, std::size_t saved = 0) {
  return detail::finish(name, inputs, std::move(out), [&] { return std::move(backward); }, saved);
}

}  // namespace epic
