#pragma once

// Reverse-mode differentiation over the small set of row-major dense
// operations the network needs. Values live on a Tape; Var is a handle.

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rigno/errors.hpp"

namespace rigno::ad {

using Index = Eigen::Index;

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

/// Shared, immutable row-index list (gather/scatter targets).
using Indices = std::shared_ptr<const std::vector<std::int32_t>>;

inline Indices make_indices(std::vector<std::int32_t> v) {
  return std::make_shared<const std::vector<std::int32_t>>(std::move(v));
}

template <typename S>
class Tape;

template <typename S>
struct Var {
  Tape<S>* tape = nullptr;
  std::int64_t id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Mat<S>& value() const { return tape->value(id); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
};

template <typename S>
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Mat<S>& grad, const Mat<S>& value)>;

  struct Node {
    Mat<S> value;
    Mat<S> grad;
    bool requires_grad = false;
    Backward backward;
  };

  Var<S> constant(Mat<S> v) { return push(std::move(v), false, nullptr); }

  /// Leaf that receives a gradient (parameters, or inputs under test).
  Var<S> variable(Mat<S> v) { return push(std::move(v), grad_enabled_, nullptr); }

  /// Records an op result. `bw` is dropped when no parent needs a gradient.
  Var<S> record(Mat<S> v, bool parents_need_grad, Backward bw) {
    const bool rg = grad_enabled_ && parents_need_grad;
    return push(std::move(v), rg, rg ? std::move(bw) : nullptr);
  }

  bool needs_grad(const Var<S>& v) const { return v.valid() && nodes_[v.id].requires_grad; }

  const Mat<S>& value(std::int64_t id) const { return nodes_[id].value; }

  /// Gradient accumulator of a node, zero-initialised on first access.
  Mat<S>& grad_buffer(std::int64_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Mat<S>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  /// grad += e, assigning on first touch instead of filling with zeros.
  template <typename Expr>
  void accumulate(std::int64_t id, const Expr& e) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) {
      n.grad.noalias() = e;
    } else {
      n.grad.noalias() += e;
    }
  }

  /// Gradient after backward(); zeros when nothing flowed into the node.
  Mat<S> grad(const Var<S>& v) const {
    const Node& n = nodes_[v.id];
    if (n.grad.size() == 0) return Mat<S>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  void backward(const Var<S>& loss) {
    if (loss.rows() != 1 || loss.cols() != 1) throw ArgumentError("backward: loss must be a scalar");
    if (!nodes_[loss.id].requires_grad) return;
    grad_buffer(loss.id)(0, 0) += S(1);
    for (std::int64_t i = loss.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.size() == 0) continue;
      n.backward(*this, n.grad, n.value);
    }
  }

  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  std::deque<Node> nodes_;
  bool grad_enabled_ = true;

  Var<S> push(Mat<S> v, bool rg, Backward bw) {
    nodes_.push_back(Node{std::move(v), Mat<S>(), rg, std::move(bw)});
    return Var<S>{this, static_cast<std::int64_t>(nodes_.size() - 1)};
  }
};

/// Scoped no-grad region.
template <typename S>
class NoGrad {
 public:
  explicit NoGrad(Tape<S>& t) : tape_(t), prev_(t.grad_enabled()) { t.set_grad_enabled(false); }
  ~NoGrad() { tape_.set_grad_enabled(prev_); }
  NoGrad(const NoGrad&) = delete;
  NoGrad& operator=(const NoGrad&) = delete;

 private:
  Tape<S>& tape_;
  bool prev_;
};

namespace detail {

inline void check(bool ok, const char* what) {
  if (!ok) throw ArgumentError(what);
}

// Column sums by streaming rows; colwise() on row-major data walks strided.
template <typename Derived>
RowVec<typename Derived::Scalar> col_sums(const Eigen::MatrixBase<Derived>& g) {
  RowVec<typename Derived::Scalar> acc = RowVec<typename Derived::Scalar>::Zero(g.cols());
  for (Index i = 0; i < g.rows(); ++i) acc += g.row(i);
  return acc;
}

template <typename S>
void check_same_shape(const Var<S>& a, const Var<S>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ArgumentError(std::string(op) + ": shape mismatch");
  }
}

template <typename S>
S sigmoid(S x) {
  return x >= S(0) ? S(1) / (S(1) + std::exp(-x)) : std::exp(x) / (S(1) + std::exp(x));
}

}  // namespace detail

/// x W + b with x: n x in, W: in x out, b: 1 x out.
template <typename S>
Var<S> affine(const Var<S>& x, const Var<S>& W, const Var<S>& b) {
  Tape<S>& t = *x.tape;
  detail::check(x.cols() == W.rows(), "affine: inner dimension mismatch");
  detail::check(b.rows() == 1 && b.cols() == W.cols(), "affine: bias shape mismatch");
  Mat<S> out(x.rows(), W.cols());
  out.noalias() = x.value() * W.value();
  out.rowwise() += b.value().row(0);
  const bool rg = t.needs_grad(x) || t.needs_grad(W) || t.needs_grad(b);
  return t.record(std::move(out), rg, [x, W, b](Tape<S>& tp, const Mat<S>& g, const Mat<S>&) {
    if (tp.needs_grad(x)) tp.accumulate(x.id, g * tp.value(W.id).transpose());
    if (tp.needs_grad(W)) tp.accumulate(W.id, tp.value(x.id).transpose() * g);
    if (tp.needs_grad(b)) tp.accumulate(b.id, detail::col_sums(g));
  });
}

/// x W without bias.
template <typename S>
Var<S> matmul(const Var<S>& x, const Var<S>& W) {
  Tape<S>& t = *x.tape;
  detail::check(x.cols() == W.rows(), "matmul: inner dimension mismatch");
  Mat<S> out(x.rows(), W.cols());
  out.noalias() = x.value() * W.value();
  const bool rg = t.needs_grad(x) || t.needs_grad(W);
  return t.record(std::move(out), rg, [x, W](Tape<S>& tp, const Mat<S>& g, const Mat<S>&) {
    if (tp.needs_grad(x)) tp.accumulate(x.id, g * tp.value(W.id).transpose());
    if (tp.needs_grad(W)) tp.accumulate(W.id, tp.value(x.id).transpose() * g);
  });
}

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  detail::check_same_shape(a, b, "add");
  Tape<S>& t = *a.tape;
  return t.record(a.value() + b.value(), t.needs_grad(a) || t.needs_grad(b), [a, b](Tape<S>& tp, const Mat<S>& g, const Mat<S>&) {
    if (tp.needs_grad(a)) tp.accumulate(a.id, g);
    if (tp.needs_grad(b)) tp.accumulate(b.id, g);
  });
}

template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  detail::check_same_shape(a, b, "sub");
  Tape<S>& t = *a.tape;
  return t.record(a.value() - b.value(), t.needs_grad(a) || t.needs_grad(b), [a, b](Tape<S>& tp, const Mat<S>& g, const Mat<S>&) {
    if (tp.needs_grad(a)) tp.accumulate(a.id, g);
    if (tp.needs_grad(b)) tp.accumulate(b.id, -(g));
  });
}

template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  detail::check_same_shape(a, b, "mul");
  Tape<S>& t = *a.tape;
  Mat<S> out = a.value().cwiseProduct(b.value());
  return t.record(std::move(out), t.needs_grad(a) || t.needs_grad(b), [a, b](Tape<S>& tp, const Mat<S>& g, const Mat<S>&) {
    if (tp.needs_grad(a)) tp.accumulate(a.id, g.cwiseProduct(tp.value(b.id)));
    if (tp.needs_grad(b)) tp.accumulate(b.id, g.cwiseProduct(tp.value(a.id)));
  });
}

template <typename S>
Var<S> scale(const Var<S>& a, S s) {
  Tape<S>& t = *a.tape;
  return t.record(a.value() * s, t.needs_grad(a), [a, s](Tape<S>& tp, const Mat<S>& g, const Mat<S>&) {
    tp.accumulate(a.id, g * s);
  });
}

template <typename S>
Var<S> sigmoid(const Var<S>& x) {
  Tape<S>& t = *x.tape;
  Mat<S> out = x.value().unaryExpr([](S v) { return detail::sigmoid(v); });
  return t.record(std::move(out), t.needs_grad(x), [x](Tape<S>& tp, const Mat<S>& g, const Mat<S>& y) {
    Mat<S>& gx = tp.grad_buffer(x.id);
    for (Index i = 0; i < y.size(); ++i) {
      const S s = y.data()[i];
      gx.data()[i] += g.data()[i] * s * (S(1) - s);
    }
  });
}

/// x * sigmoid(x).
template <typename S>
Var<S> swish(const Var<S>& x) {
  Tape<S>& t = *x.tape;
  // Vectorized form; Eigen's exp clamps its argument so 1 / (1 + e) stays finite.
  const auto xa = x.value().array();
  auto sig = std::make_shared<Mat<S>>((S(1) / (S(1) + (-xa).exp())).matrix());
  Mat<S> out = (xa * sig->array()).matrix();
  const bool rg = t.needs_grad(x);
  if (!rg) sig.reset();
  return t.record(std::move(out), rg, [x, sig](Tape<S>& tp, const Mat<S>& g, const Mat<S>&) {
    const auto xv = tp.value(x.id).array();
    const auto s = sig->array();
    tp.accumulate(x.id, (g.array() * (s + xv * s * (S(1) - s))).matrix());
  });
}

/// Column-wise concatenation of matrices with equal row counts.
template <typename S>
Var<S> concat_cols(const std::vector<Var<S>>& xs) {
  detail::check(!xs.empty(), "concat_cols: empty input");
  Tape<S>& t = *xs.front().tape;
  const Index rows = xs.front().rows();
  Index cols = 0;
  bool rg = false;
  for (const auto& x : xs) {
    detail::check(x.rows() == rows, "concat_cols: row count mismatch");
    cols += x.cols();
    rg = rg || t.needs_grad(x);
  }
  Mat<S> out(rows, cols);
  Index c = 0;
  for (const auto& x : xs) {
    out.middleCols(c, x.cols()) = x.value();
    c += x.cols();
  }
  return t.record(std::move(out), rg, [xs](Tape<S>& tp, const Mat<S>& g, const Mat<S>&) {
    Index c0 = 0;
    for (const auto& x : xs) {
      if (tp.needs_grad(x)) tp.accumulate(x.id, g.middleCols(c0, x.cols()));
      c0 += x.cols();
    }
  });
}

/// out[k] = x[idx[k]].
template <typename S>
Var<S> gather_rows(const Var<S>& x, const Indices& idx) {
  Tape<S>& t = *x.tape;
  const auto& ix = *idx;
  const Mat<S>& xv = x.value();
  Mat<S> out(static_cast<Index>(ix.size()), xv.cols());
  for (std::size_t k = 0; k < ix.size(); ++k) {
    detail::check(ix[k] >= 0 && ix[k] < xv.rows(), "gather_rows: index out of range");
    out.row(static_cast<Index>(k)) = xv.row(ix[k]);
  }
  return t.record(std::move(out), t.needs_grad(x), [x, idx](Tape<S>& tp, const Mat<S>& g, const Mat<S>&) {
    Mat<S>& gx = tp.grad_buffer(x.id);
    const auto& ii = *idx;
    for (std::size_t k = 0; k < ii.size(); ++k) gx.row(ii[k]) += g.row(static_cast<Index>(k));
  });
}

/// base + a[ia] + b[ib]; the first layer of an edge block with its weight
/// split by sender, receiver and edge inputs.
template <typename S>
Var<S> gather_sum(const Var<S>& base, const Var<S>& a, const Indices& ia, const Var<S>& b, const Indices& ib) {
  Tape<S>& t = *base.tape;
  const auto& xa = *ia;
  const auto& xb = *ib;
  detail::check(static_cast<Index>(xa.size()) == base.rows() && static_cast<Index>(xb.size()) == base.rows(),
                "gather_sum: index count must equal base rows");
  detail::check(a.cols() == base.cols() && b.cols() == base.cols(), "gather_sum: width mismatch");
  const Mat<S>& av = a.value();
  const Mat<S>& bv = b.value();
  Mat<S> out = base.value();
  for (Index k = 0; k < out.rows(); ++k) {
    detail::check(xa[k] >= 0 && xa[k] < av.rows() && xb[k] >= 0 && xb[k] < bv.rows(),
                  "gather_sum: index out of range");
    out.row(k) += av.row(xa[k]) + bv.row(xb[k]);
  }
  const bool rg = t.needs_grad(base) || t.needs_grad(a) || t.needs_grad(b);
  return t.record(std::move(out), rg, [base, a, ia, b, ib](Tape<S>& tp, const Mat<S>& g, const Mat<S>&) {
    if (tp.needs_grad(base)) tp.accumulate(base.id, g);
    if (tp.needs_grad(a)) {
      Mat<S>& ga = tp.grad_buffer(a.id);
      const auto& ii = *ia;
      for (Index k = 0; k < g.rows(); ++k) ga.row(ii[k]) += g.row(k);
    }
    if (tp.needs_grad(b)) {
      Mat<S>& gb = tp.grad_buffer(b.id);
      const auto& ii = *ib;
      for (Index k = 0; k < g.rows(); ++k) gb.row(ii[k]) += g.row(k);
    }
  });
}

/// Per receiver slot, the mean of contributing rows; zero for empty slots.
template <typename S>
Var<S> scatter_mean(const Var<S>& values, const Indices& receivers, Index out_size) {
  Tape<S>& t = *values.tape;
  const auto& rc = *receivers;
  detail::check(static_cast<Index>(rc.size()) == values.rows(), "scatter_mean: one receiver per row required");
  auto inv_count = std::make_shared<std::vector<S>>(static_cast<std::size_t>(out_size), S(0));
  std::vector<std::int32_t> count(static_cast<std::size_t>(out_size), 0);
  for (auto r : rc) {
    detail::check(r >= 0 && r < out_size, "scatter_mean: receiver index out of range");
    ++count[r];
  }
  for (Index i = 0; i < out_size; ++i) (*inv_count)[i] = count[i] ? S(1) / S(count[i]) : S(0);
  const Mat<S>& v = values.value();
  Mat<S> out = Mat<S>::Zero(out_size, v.cols());
  for (std::size_t k = 0; k < rc.size(); ++k) out.row(rc[k]) += v.row(static_cast<Index>(k));
  for (Index i = 0; i < out_size; ++i) out.row(i) *= (*inv_count)[i];
  return t.record(std::move(out), t.needs_grad(values), [values, receivers, inv_count](Tape<S>& tp, const Mat<S>& g, const Mat<S>&) {
    Mat<S>& gv = tp.grad_buffer(values.id);
    const auto& r = *receivers;
    for (std::size_t k = 0; k < r.size(); ++k) gv.row(static_cast<Index>(k)) += g.row(r[k]) * (*inv_count)[r[k]];
  });
}

/// out = base; out[idx[k]] += rows[k]. Indices must be distinct.
template <typename S>
Var<S> add_rows_at(const Var<S>& base, const Var<S>& rows, const Indices& idx) {
  Tape<S>& t = *base.tape;
  const auto& ix = *idx;
  detail::check(static_cast<Index>(ix.size()) == rows.rows() && rows.cols() == base.cols(),
                "add_rows_at: shape mismatch");
  Mat<S> out = base.value();
  const Mat<S>& rv = rows.value();
  for (std::size_t k = 0; k < ix.size(); ++k) {
    detail::check(ix[k] >= 0 && ix[k] < out.rows(), "add_rows_at: index out of range");
    out.row(ix[k]) += rv.row(static_cast<Index>(k));
  }
  const bool rg = t.needs_grad(base) || t.needs_grad(rows);
  return t.record(std::move(out), rg, [base, rows, idx](Tape<S>& tp, const Mat<S>& g, const Mat<S>&) {
    if (tp.needs_grad(base)) tp.accumulate(base.id, g);
    if (tp.needs_grad(rows)) {
      Mat<S>& gr = tp.grad_buffer(rows.id);
      const auto& ii = *idx;
      for (std::size_t k = 0; k < ii.size(); ++k) gr.row(static_cast<Index>(k)) += g.row(ii[k]);
    }
  });
}

/// Per-row standardisation over the feature dimension (no learnable affine).
template <typename S>
Var<S> layer_norm(const Var<S>& x, double eps = 1e-6) {
  Tape<S>& t = *x.tape;
  const Mat<S>& xv = x.value();
  const Index n = xv.rows(), f = xv.cols();
  detail::check(f > 0, "layer_norm: zero width");
  Mat<S> out(n, f);
  auto inv_std = std::make_shared<std::vector<S>>(static_cast<std::size_t>(n));
  std::vector<double> buf(static_cast<std::size_t>(f));
  for (Index i = 0; i < n; ++i) {
    const S* xr = xv.data() + i * f;
    for (Index j = 0; j < f; ++j) buf[j] = static_cast<double>(xr[j]);
    // Four partial sums keep the reductions off the add latency chain.
    double s4[4] = {0.0, 0.0, 0.0, 0.0};
    Index j = 0;
    for (; j + 4 <= f; j += 4) {
      for (int l = 0; l < 4; ++l) s4[l] += buf[j + l];
    }
    for (; j < f; ++j) s4[0] += buf[j];
    const double mean = ((s4[0] + s4[1]) + (s4[2] + s4[3])) / static_cast<double>(f);
    for (Index k = 0; k < f; ++k) buf[k] -= mean;
    double v4[4] = {0.0, 0.0, 0.0, 0.0};
    for (j = 0; j + 4 <= f; j += 4) {
      for (int l = 0; l < 4; ++l) v4[l] += buf[j + l] * buf[j + l];
    }
    for (; j < f; ++j) v4[0] += buf[j] * buf[j];
    const double var = ((v4[0] + v4[1]) + (v4[2] + v4[3])) / static_cast<double>(f);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = static_cast<S>(is);
    S* orow = out.data() + i * f;
    for (Index k = 0; k < f; ++k) orow[k] = static_cast<S>(buf[k] * is);
  }
  return t.record(std::move(out), t.needs_grad(x), [x, inv_std](Tape<S>& tp, const Mat<S>& g, const Mat<S>& y) {
    const Index rows = g.rows(), width = g.cols();
    Mat<S> d(rows, width);
    for (Index i = 0; i < rows; ++i) {
      const S* gr = g.data() + i * width;
      const S* yr = y.data() + i * width;
      const Eigen::Map<const RowVec<S>> gm(gr, width), ym(yr, width);
      const S mg = gm.sum() / S(width), mgy = gm.dot(ym) / S(width), is = (*inv_std)[i];
      S* dr = d.data() + i * width;
      for (Index j = 0; j < width; ++j) dr[j] = is * (gr[j] - mg - yr[j] * mgy);
    }
    tp.accumulate(x.id, d);
  });
}

/// Lead-time conditioning. Output rows are split into B segments by
/// `offsets` (size B + 1); row k of segment b is
///   y[src[k]] * (1 + tau_b gamma_b) + tau_b lambda_b,
/// with src the identity when null. Segments with tau_b == 0 copy y exactly.
template <typename S>
Var<S> condition(const Var<S>& y, const Var<S>& gamma, const Var<S>& lambda, const std::vector<S>& tau,
                 const std::vector<Index>& offsets, const Indices& src = nullptr) {
  Tape<S>& t = *y.tape;
  const Index B = static_cast<Index>(tau.size());
  detail::check(static_cast<Index>(offsets.size()) == B + 1 && offsets.front() == 0,
                "condition: offsets must have B + 1 entries starting at 0");
  detail::check(gamma.rows() == B && lambda.rows() == B, "condition: one gamma/lambda row per segment");
  detail::check(gamma.cols() == y.cols() && lambda.cols() == y.cols(), "condition: width mismatch");
  const Index rows = offsets.back();
  if (src) {
    detail::check(static_cast<Index>(src->size()) == rows, "condition: src must cover every output row");
    for (auto r : *src) detail::check(r >= 0 && r < y.rows(), "condition: src row out of range");
  } else {
    detail::check(y.rows() == rows, "condition: row count mismatch");
  }
  const Mat<S>& yv = y.value();
  const Mat<S>& gv = gamma.value();
  const Mat<S>& lv = lambda.value();
  Mat<S> out(rows, yv.cols());
  for (Index b = 0; b < B; ++b) {
    const RowVec<S> mult = (RowVec<S>::Ones(yv.cols()) + tau[b] * gv.row(b)).eval();
    const RowVec<S> shift = (tau[b] * lv.row(b)).eval();
    for (Index k = offsets[b]; k < offsets[b + 1]; ++k) {
      const Index r = src ? (*src)[k] : k;
      if (tau[b] == S(0)) {
        out.row(k) = yv.row(r);
      } else {
        out.row(k) = yv.row(r).cwiseProduct(mult) + shift;
      }
    }
  }
  const bool rg = t.needs_grad(y) || t.needs_grad(gamma) || t.needs_grad(lambda);
  return t.record(std::move(out), rg, [y, gamma, lambda, tau, offsets, src](Tape<S>& tp, const Mat<S>& g, const Mat<S>&) {
    const Mat<S>& yv2 = tp.value(y.id);
    const Mat<S>& gv2 = tp.value(gamma.id);
    const Index nb = static_cast<Index>(tau.size());
    for (Index b = 0; b < nb; ++b) {
      if (tp.needs_grad(y)) {
        Mat<S>& gy = tp.grad_buffer(y.id);
        const RowVec<S> mult = (RowVec<S>::Ones(yv2.cols()) + tau[b] * gv2.row(b)).eval();
        for (Index k = offsets[b]; k < offsets[b + 1]; ++k) {
          const Index r = src ? (*src)[k] : k;
          gy.row(r) += g.row(k).cwiseProduct(mult);
        }
      }
      if (tau[b] == S(0)) continue;
      if (tp.needs_grad(gamma)) {
        RowVec<S> acc = RowVec<S>::Zero(yv2.cols());
        for (Index k = offsets[b]; k < offsets[b + 1]; ++k) {
          acc += g.row(k).cwiseProduct(yv2.row(src ? (*src)[k] : k));
        }
        tp.grad_buffer(gamma.id).row(b) += tau[b] * acc;
      }
      if (tp.needs_grad(lambda)) {
        tp.grad_buffer(lambda.id).row(b) += tau[b] * detail::col_sums(g.middleRows(offsets[b], offsets[b + 1] - offsets[b]));
      }
    }
  });
}

/// scale * sum((a - b)^2) as a 1 x 1 value (double accumulation).
template <typename S>
Var<S> sum_sq_diff(const Var<S>& a, const Var<S>& b, double scale_factor) {
  detail::check_same_shape(a, b, "sum_sq_diff");
  Tape<S>& t = *a.tape;
  const Mat<S>& av = a.value();
  const Mat<S>& bv = b.value();
  double acc = 0.0;
  for (Index i = 0; i < av.size(); ++i) {
    const double d = static_cast<double>(av.data()[i]) - static_cast<double>(bv.data()[i]);
    acc += d * d;
  }
  Mat<S> out(1, 1);
  out(0, 0) = static_cast<S>(scale_factor * acc);
  const bool rg = t.needs_grad(a) || t.needs_grad(b);
  return t.record(std::move(out), rg, [a, b, scale_factor](Tape<S>& tp, const Mat<S>& g, const Mat<S>&) {
    const Mat<S> d = (tp.value(a.id) - tp.value(b.id)) * static_cast<S>(2.0 * scale_factor) * g(0, 0);
    if (tp.needs_grad(a)) tp.accumulate(a.id, d);
    if (tp.needs_grad(b)) tp.accumulate(b.id, -(d));
  });
}

/// Mean squared error over all elements.
template <typename S>
Var<S> mse(const Var<S>& a, const Var<S>& b) {
  detail::check(a.value().size() > 0, "mse: empty input");
  return sum_sq_diff(a, b, 1.0 / static_cast<double>(a.value().size()));
}

/// Sum of all elements as 1 x 1.
template <typename S>
Var<S> sum(const Var<S>& x) {
  Tape<S>& t = *x.tape;
  Mat<S> out(1, 1);
  out(0, 0) = x.value().sum();
  return t.record(std::move(out), t.needs_grad(x), [x](Tape<S>& tp, const Mat<S>& g, const Mat<S>&) {
    tp.grad_buffer(x.id).array() += g(0, 0);
  });
}

/// Adds scalar terms (1 x 1 each).
template <typename S>
Var<S> add_scalars(const std::vector<Var<S>>& xs) {
  detail::check(!xs.empty(), "add_scalars: empty input");
  Tape<S>& t = *xs.front().tape;
  Mat<S> out = Mat<S>::Zero(1, 1);
  bool rg = false;
  for (const auto& x : xs) {
    detail::check(x.rows() == 1 && x.cols() == 1, "add_scalars: scalar inputs required");
    out(0, 0) += x.value()(0, 0);
    rg = rg || t.needs_grad(x);
  }
  return t.record(std::move(out), rg, [xs](Tape<S>& tp, const Mat<S>& g, const Mat<S>&) {
    for (const auto& x : xs) {
      if (tp.needs_grad(x)) tp.accumulate(x.id, g);
    }
  });
}

}  // namespace rigno::ad
