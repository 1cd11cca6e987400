#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <vector>

#include "ctrlgen/tensor.hpp"

namespace ctrlgen {

namespace detail {

template <typename S, typename F, typename B>
void maybe_record(const char* kind, std::vector<Tensor<S>> inputs, Tensor<S>& out, F&& fwd, B&& bwd) {
  auto* g = GradGraph<S>::active();
  if (!g) return;
  bool tracked = false;
  for (const auto& t : inputs) tracked = tracked || t.requires_grad();
  if (!tracked) return;
  out.mark_tracked();
  g->record(kind, std::move(inputs), out, std::forward<F>(fwd), std::forward<B>(bwd));
}

template <typename S>
void check_same_shape(const char* op, const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape())
    throw ShapeError(cat(op, ": shape mismatch: lhs ", shape_str(a.shape()), " rhs ", shape_str(b.shape())));
}

// Row-wise stable softmax on raw storage.
template <typename S>
void rowwise_softmax_inplace(MatrixX<S>& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const S mx = m.row(i).maxCoeff();
    m.row(i) = (m.row(i).array() - mx).exp();
    m.row(i) /= m.row(i).sum();
  }
}

}  // namespace detail

// ---- arithmetic ----

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError(cat("matmul: operands must be rank 2, got ", shape_str(a.shape()), " and ",
                         shape_str(b.shape())));
  if (a.cols() != b.rows())
    throw ShapeError(cat("matmul: inner dimension mismatch: lhs ", shape_str(a.shape()), " rhs ",
                         shape_str(b.shape())));
  Tensor<S> out = Tensor<S>::zeros({a.rows(), b.cols()});
  auto fwd = [a, b, out]() mutable { out.value().noalias() = a.value() * b.value(); };
  fwd();
  detail::maybe_record<S>("matmul", {a, b}, out, fwd, [a, b, out]() mutable {
    const MatrixX<S>& g = out.grad();
    if (a.requires_grad()) a.accum_grad(g * b.value().transpose());
    if (b.requires_grad()) b.accum_grad(a.value().transpose() * g);
  });
  return out;
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape("add", a, b);
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  auto fwd = [a, b, out]() mutable { out.value() = a.value() + b.value(); };
  fwd();
  detail::maybe_record<S>("add", {a, b}, out, fwd, [a, b, out]() mutable {
    if (a.requires_grad()) a.accum_grad(out.grad());
    if (b.requires_grad()) b.accum_grad(out.grad());
  });
  return out;
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape("sub", a, b);
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  auto fwd = [a, b, out]() mutable { out.value() = a.value() - b.value(); };
  fwd();
  detail::maybe_record<S>("sub", {a, b}, out, fwd, [a, b, out]() mutable {
    if (a.requires_grad()) a.accum_grad(out.grad());
    if (b.requires_grad()) b.accum_grad(-out.grad());
  });
  return out;
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape("mul", a, b);
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  auto fwd = [a, b, out]() mutable { out.value() = a.value().cwiseProduct(b.value()); };
  fwd();
  detail::maybe_record<S>("mul", {a, b}, out, fwd, [a, b, out]() mutable {
    if (a.requires_grad()) a.accum_grad(out.grad().cwiseProduct(b.value()));
    if (b.requires_grad()) b.accum_grad(out.grad().cwiseProduct(a.value()));
  });
  return out;
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S k) {
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  auto fwd = [a, out, k]() mutable { out.value() = a.value() * k; };
  fwd();
  detail::maybe_record<S>("scale", {a}, out, fwd, [a, out, k]() mutable {
    if (a.requires_grad()) a.accum_grad(out.grad() * k);
  });
  return out;
}

template <typename S>
Tensor<S> sum(const Tensor<S>& a) {
  Tensor<S> out = Tensor<S>::zeros({1});
  auto fwd = [a, out]() mutable { out.value()(0, 0) = a.value().sum(); };
  fwd();
  detail::maybe_record<S>("sum", {a}, out, fwd, [a, out]() mutable {
    if (a.requires_grad())
      a.accum_grad(MatrixX<S>::Constant(a.rows(), a.cols(), out.grad()(0, 0)));
  });
  return out;
}

// ---- shape ops (no broadcasting; these are the explicit alternatives) ----

template <typename S>
Tensor<S> reshape(const Tensor<S>& a, Shape shape) {
  auto [r, c] = detail::storage_dims(shape);
  if (r * c != a.size())
    throw ShapeError(cat("reshape: size mismatch: ", shape_str(a.shape()), " -> ", shape_str(shape)));
  Tensor<S> out = Tensor<S>::zeros(shape);
  const Eigen::Index rr = r, cc = c;
  auto fwd = [a, out, rr, cc]() mutable {
    out.value() = Eigen::Map<const MatrixX<S>>(a.value().data(), rr, cc);
  };
  fwd();
  detail::maybe_record<S>("reshape", {a}, out, fwd, [a, out]() mutable {
    if (a.requires_grad())
      a.accum_grad(Eigen::Map<const MatrixX<S>>(out.grad().data(), a.rows(), a.cols()));
  });
  return out;
}

// Repeats a single row m times.
template <typename S>
Tensor<S> tile_rows(const Tensor<S>& a, Eigen::Index m) {
  if (a.rows() != 1)
    throw ShapeError(cat("tile_rows: input must have a single row, got ", shape_str(a.shape())));
  if (m < 1) throw ShapeError(cat("tile_rows: repeat count must be >= 1, got ", m));
  Tensor<S> out = Tensor<S>::zeros({m, a.cols()});
  auto fwd = [a, out]() mutable { out.value() = a.value().row(0).replicate(out.rows(), 1); };
  fwd();
  detail::maybe_record<S>("tile_rows", {a}, out, fwd, [a, out]() mutable {
    if (a.requires_grad()) a.accum_grad(out.grad().colwise().sum());
  });
  return out;
}

template <typename S>
Tensor<S> concat_cols(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const int rank = parts[0].rank();
  Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i].rank() != rank || parts[i].rows() != rows)
      throw ShapeError(cat("concat: input ", i, " has shape ", shape_str(parts[i].shape()),
                           ", expected ", rows, " row(s) like input 0 ", shape_str(parts[0].shape())));
    cols += parts[i].cols();
  }
  Shape shape = rank == 1 ? Shape{cols} : Shape{rows, cols};
  Tensor<S> out = Tensor<S>::zeros(shape);
  auto fwd = [parts, out]() mutable {
    Eigen::Index at = 0;
    for (const auto& p : parts) {
      out.value().middleCols(at, p.cols()) = p.value();
      at += p.cols();
    }
  };
  fwd();
  detail::maybe_record<S>("concat", parts, out, fwd, [parts, out]() mutable {
    Eigen::Index at = 0;
    for (auto& p : parts) {
      if (p.requires_grad()) p.accum_grad(out.grad().middleCols(at, p.cols()));
      at += p.cols();
    }
  });
  return out;
}

template <typename S>
Tensor<S> concat_rows(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i].rank() != 2 || parts[i].cols() != cols)
      throw ShapeError(cat("concat_rows: input ", i, " has shape ", shape_str(parts[i].shape()),
                           ", expected ", cols, " column(s) like input 0 ", shape_str(parts[0].shape())));
    rows += parts[i].rows();
  }
  Tensor<S> out = Tensor<S>::zeros({rows, cols});
  auto fwd = [parts, out]() mutable {
    Eigen::Index at = 0;
    for (const auto& p : parts) {
      out.value().middleRows(at, p.rows()) = p.value();
      at += p.rows();
    }
  };
  fwd();
  detail::maybe_record<S>("concat_rows", parts, out, fwd, [parts, out]() mutable {
    Eigen::Index at = 0;
    for (auto& p : parts) {
      if (p.requires_grad()) p.accum_grad(out.grad().middleRows(at, p.rows()));
      at += p.rows();
    }
  });
  return out;
}

template <typename S>
Tensor<S> slice_cols(const Tensor<S>& a, Eigen::Index start, Eigen::Index len) {
  if (start < 0 || len < 1 || start + len > a.cols())
    throw ShapeError(cat("slice_cols: range [", start, ",", start + len, ") out of bounds for ",
                         shape_str(a.shape())));
  Shape shape = a.rank() == 1 ? Shape{len} : Shape{a.rows(), len};
  Tensor<S> out = Tensor<S>::zeros(shape);
  auto fwd = [a, out, start, len]() mutable { out.value() = a.value().middleCols(start, len); };
  fwd();
  detail::maybe_record<S>("slice_cols", {a}, out, fwd, [a, out, start, len]() mutable {
    if (a.requires_grad()) a.mutable_grad().middleCols(start, len) += out.grad();
  });
  return out;
}

template <typename S>
Tensor<S> slice_rows(const Tensor<S>& a, Eigen::Index start, Eigen::Index len) {
  if (a.rank() != 2)
    throw ShapeError(cat("slice_rows: input must be rank 2, got ", shape_str(a.shape())));
  if (start < 0 || len < 1 || start + len > a.rows())
    throw ShapeError(cat("slice_rows: range [", start, ",", start + len, ") out of bounds for ",
                         shape_str(a.shape())));
  Tensor<S> out = Tensor<S>::zeros({len, a.cols()});
  auto fwd = [a, out, start, len]() mutable { out.value() = a.value().middleRows(start, len); };
  fwd();
  detail::maybe_record<S>("slice_rows", {a}, out, fwd, [a, out, start, len]() mutable {
    if (a.requires_grad()) a.mutable_grad().middleRows(start, len) += out.grad();
  });
  return out;
}

// ---- activations ----

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& a) {
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  auto fwd = [a, out]() mutable {
    out.value() = (S(1) / (S(1) + (-a.value().array()).exp())).matrix();
  };
  fwd();
  detail::maybe_record<S>("sigmoid", {a}, out, fwd, [a, out]() mutable {
    if (a.requires_grad()) {
      const auto& y = out.value().array();
      a.accum_grad((out.grad().array() * y * (S(1) - y)).matrix());
    }
  });
  return out;
}

template <typename S>
Tensor<S> tanh(const Tensor<S>& a) {
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  auto fwd = [a, out]() mutable { out.value() = a.value().array().tanh().matrix(); };
  fwd();
  detail::maybe_record<S>("tanh", {a}, out, fwd, [a, out]() mutable {
    if (a.requires_grad()) {
      const auto& y = out.value().array();
      a.accum_grad((out.grad().array() * (S(1) - y * y)).matrix());
    }
  });
  return out;
}

template <typename S>
Tensor<S> relu(const Tensor<S>& a) {
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  auto fwd = [a, out]() mutable { out.value() = a.value().cwiseMax(S(0)); };
  fwd();
  detail::maybe_record<S>("relu", {a}, out, fwd, [a, out]() mutable {
    if (a.requires_grad())
      a.accum_grad((out.grad().array() * (a.value().array() > S(0)).template cast<S>()).matrix());
  });
  return out;
}

// ---- row-wise distributions (reduction along the last axis) ----

template <typename S>
Tensor<S> softmax(const Tensor<S>& a) {
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  auto fwd = [a, out]() mutable {
    out.value() = a.value();
    detail::rowwise_softmax_inplace(out.value());
  };
  fwd();
  detail::maybe_record<S>("softmax", {a}, out, fwd, [a, out]() mutable {
    if (!a.requires_grad()) return;
    const MatrixX<S>& y = out.value();
    const MatrixX<S>& g = out.grad();
    MatrixX<S> gy = g.cwiseProduct(y);
    MatrixX<S> dx = gy;
    for (Eigen::Index i = 0; i < y.rows(); ++i) dx.row(i) -= gy.row(i).sum() * y.row(i);
    a.accum_grad(dx);
  });
  return out;
}

template <typename S>
Tensor<S> log_softmax(const Tensor<S>& a) {
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  auto fwd = [a, out]() mutable {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const S mx = a.value().row(i).maxCoeff();
      const S lse = mx + std::log((a.value().row(i).array() - mx).exp().sum());
      out.value().row(i) = a.value().row(i).array() - lse;
    }
  };
  fwd();
  detail::maybe_record<S>("log_softmax", {a}, out, fwd, [a, out]() mutable {
    if (!a.requires_grad()) return;
    const MatrixX<S>& g = out.grad();
    MatrixX<S> dx = g;
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      const S gsum = g.row(i).sum();
      dx.row(i) -= gsum * out.value().row(i).array().exp().matrix();
    }
    a.accum_grad(dx);
  });
  return out;
}

enum class Reduction { Mean, Sum };

// Negative log-likelihood of the gold class per row; rows whose target equals
// ignore_index are excluded (PAD masking).
template <typename S>
Tensor<S> cross_entropy(const Tensor<S>& logits, std::vector<int> targets, int ignore_index = -1,
                        Reduction reduction = Reduction::Mean) {
  if (logits.rank() != 2)
    throw ShapeError(cat("cross_entropy: logits must be rank 2, got ", shape_str(logits.shape())));
  if (static_cast<Eigen::Index>(targets.size()) != logits.rows())
    throw ShapeError(cat("cross_entropy: ", targets.size(), " targets for ", logits.rows(), " rows"));
  Eigen::Index valid = 0;
  for (int t : targets) {
    if (t == ignore_index) continue;
    if (t < 0 || t >= logits.cols())
      throw ShapeError(cat("cross_entropy: target ", t, " outside vocabulary of size ", logits.cols()));
    ++valid;
  }
  if (valid == 0) throw ShapeError("cross_entropy: every row is ignored");
  Tensor<S> out = Tensor<S>::zeros({1});
  auto fwd = [logits, targets, out, ignore_index, reduction, valid]() mutable {
    S total = S(0);
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      if (targets[static_cast<std::size_t>(i)] == ignore_index) continue;
      const auto row = logits.value().row(i);
      const S mx = row.maxCoeff();
      const S lse = mx + std::log((row.array() - mx).exp().sum());
      total += lse - row(targets[static_cast<std::size_t>(i)]);
    }
    out.value()(0, 0) = reduction == Reduction::Mean ? total / static_cast<S>(valid) : total;
  };
  fwd();
  detail::maybe_record<S>("cross_entropy", {logits}, out, fwd,
                          [logits, targets, out, ignore_index, reduction, valid]() mutable {
    if (!logits.requires_grad()) return;
    const S w = out.grad()(0, 0) * (reduction == Reduction::Mean ? S(1) / static_cast<S>(valid) : S(1));
    MatrixX<S>& g = logits.mutable_grad();
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      const int t = targets[static_cast<std::size_t>(i)];
      if (t == ignore_index) continue;
      const auto row = logits.value().row(i);
      const S mx = row.maxCoeff();
      Eigen::Matrix<S, 1, Eigen::Dynamic> p = (row.array() - mx).exp();
      p /= p.sum();
      g.row(i) += w * p;
      g(i, t) -= w;
    }
  });
  return out;
}

// Row-wise layer normalization with trainable gain and bias of width d.
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gain, const Tensor<S>& bias,
                     S eps = S(1e-5)) {
  const Eigen::Index d = x.cols();
  if (gain.size() != d || bias.size() != d)
    throw ShapeError(cat("layer_norm: gain/bias width mismatch: x ", shape_str(x.shape()), " gain ",
                         shape_str(gain.shape()), " bias ", shape_str(bias.shape())));
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  auto fwd = [x, gain, bias, out, eps]() mutable {
    const Eigen::Index d2 = x.cols();
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const auto row = x.value().row(i);
      const S mu = row.mean();
      const S var = (row.array() - mu).square().sum() / static_cast<S>(d2);
      const S inv = S(1) / std::sqrt(var + eps);
      out.value().row(i) =
          (((row.array() - mu) * inv) * gain.value().array() + bias.value().array()).matrix();
    }
  };
  fwd();
  detail::maybe_record<S>("layer_norm", {x, gain, bias}, out, fwd, [x, gain, bias, out, eps]() mutable {
    const Eigen::Index d2 = x.cols();
    const MatrixX<S>& g = out.grad();
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const auto row = x.value().row(i);
      const S mu = row.mean();
      const S var = (row.array() - mu).square().sum() / static_cast<S>(d2);
      const S inv = S(1) / std::sqrt(var + eps);
      Eigen::Array<S, 1, Eigen::Dynamic> xhat = (row.array() - mu) * inv;
      Eigen::Array<S, 1, Eigen::Dynamic> dy = g.row(i).array();
      if (gain.requires_grad()) gain.accum_grad((dy * xhat).matrix());
      if (bias.requires_grad()) bias.accum_grad(dy.matrix());
      if (x.requires_grad()) {
        Eigen::Array<S, 1, Eigen::Dynamic> dxhat = dy * gain.value().array();
        const S m1 = dxhat.mean();
        const S m2 = (dxhat * xhat).mean();
        x.mutable_grad().row(i) += (inv * (dxhat - m1 - xhat * m2)).matrix();
      }
    }
  });
  return out;
}

// Gathers rows of a table by index; gradients scatter back into those rows only.
template <typename S>
Tensor<S> embedding_lookup(const Tensor<S>& table, std::vector<int> ids) {
  if (table.rank() != 2)
    throw ShapeError(cat("embedding_lookup: table must be rank 2, got ", shape_str(table.shape())));
  for (int id : ids)
    if (id < 0 || id >= table.rows())
      throw ShapeError(cat("embedding_lookup: index ", id, " outside table with ", table.rows(), " rows"));
  Tensor<S> out = Tensor<S>::zeros({static_cast<Eigen::Index>(ids.size()), table.cols()});
  auto fwd = [table, ids, out]() mutable {
    for (std::size_t t = 0; t < ids.size(); ++t)
      out.value().row(static_cast<Eigen::Index>(t)) = table.value().row(ids[t]);
  };
  fwd();
  detail::maybe_record<S>("embedding_lookup", {table}, out, fwd, [table, ids, out]() mutable {
    if (!table.requires_grad()) return;
    MatrixX<S>& g = table.mutable_grad();
    for (std::size_t t = 0; t < ids.size(); ++t)
      g.row(ids[t]) += out.grad().row(static_cast<Eigen::Index>(t));
  });
  return out;
}

struct AttentionOpts {
  int n_heads = 1;
  bool causal = false;
};

// Multi-head scaled dot-product attention over projected full-width q/k/v.
// Heads are contiguous column blocks. With causal=true, query row i attends
// keys j <= i + (Tk - Tq), so a single-row query attends the whole cache.
template <typename S>
Tensor<S> scaled_dot_product_attention(const Tensor<S>& q, const Tensor<S>& k, const Tensor<S>& v,
                                       const AttentionOpts& opts = {}) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2)
    throw ShapeError("attention: q/k/v must be rank 2");
  if (q.cols() != k.cols() || k.rows() != v.rows() || k.cols() != v.cols())
    throw ShapeError(cat("attention: incompatible shapes q ", shape_str(q.shape()), " k ",
                         shape_str(k.shape()), " v ", shape_str(v.shape())));
  if (opts.n_heads < 1 || q.cols() % opts.n_heads != 0)
    throw ShapeError(cat("attention: width ", q.cols(), " not divisible by n_heads ", opts.n_heads));
  if (opts.causal && k.rows() < q.rows())
    throw ShapeError(cat("attention: causal requires at least as many keys (", k.rows(),
                         ") as queries (", q.rows(), ")"));
  const Eigen::Index dh = q.cols() / opts.n_heads;
  const Eigen::Index offset = k.rows() - q.rows();
  const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(dh));
  Tensor<S> out = Tensor<S>::zeros({q.rows(), v.cols()});
  // Per-head attention probabilities, shared between forward (replay) and backward.
  auto probs = std::make_shared<std::vector<MatrixX<S>>>(static_cast<std::size_t>(opts.n_heads));
  const AttentionOpts o = opts;
  auto fwd = [q, k, v, out, probs, o, dh, offset, inv_sqrt]() mutable {
    for (int h = 0; h < o.n_heads; ++h) {
      const auto qh = q.value().middleCols(h * dh, dh);
      const auto kh = k.value().middleCols(h * dh, dh);
      MatrixX<S> scores = qh * kh.transpose() * inv_sqrt;
      if (o.causal) {
        for (Eigen::Index i = 0; i < scores.rows(); ++i)
          for (Eigen::Index j = i + offset + 1; j < scores.cols(); ++j)
            scores(i, j) = -std::numeric_limits<S>::infinity();
      }
      detail::rowwise_softmax_inplace(scores);
      (*probs)[static_cast<std::size_t>(h)] = scores;
      out.value().middleCols(h * dh, dh).noalias() = scores * v.value().middleCols(h * dh, dh);
    }
  };
  fwd();
  detail::maybe_record<S>("attention", {q, k, v}, out, fwd,
                          [q, k, v, out, probs, o, dh, inv_sqrt]() mutable {
    for (int h = 0; h < o.n_heads; ++h) {
      const MatrixX<S>& a = (*probs)[static_cast<std::size_t>(h)];
      const auto gh = out.grad().middleCols(h * dh, dh);
      const auto vh = v.value().middleCols(h * dh, dh);
      if (v.requires_grad()) v.mutable_grad().middleCols(h * dh, dh) += a.transpose() * gh;
      if (!q.requires_grad() && !k.requires_grad()) continue;
      MatrixX<S> da = gh * vh.transpose();
      // softmax backward; masked entries have a == 0 and drop out
      MatrixX<S> ds = a.cwiseProduct(da);
      for (Eigen::Index i = 0; i < ds.rows(); ++i) ds.row(i) -= ds.row(i).sum() * a.row(i);
      if (q.requires_grad())
        q.mutable_grad().middleCols(h * dh, dh) += ds * k.value().middleCols(h * dh, dh) * inv_sqrt;
      if (k.requires_grad())
        k.mutable_grad().middleCols(h * dh, dh) += ds.transpose() * q.value().middleCols(h * dh, dh) * inv_sqrt;
    }
  });
  return out;
}

// Explicit mask multiplication; the sampled mask is stored on the tape so
// replay reproduces the forward pass bit-identically. rate 0 is the identity.
template <typename S>
Tensor<S> dropout(const Tensor<S>& a, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ShapeError(cat("dropout: rate must be in [0,1), got ", rate));
  if (rate == 0.0) return a;
  MatrixX<S> mask(a.rows(), a.cols());
  const S keep_scale = S(1.0 / (1.0 - rate));
  for (Eigen::Index i = 0; i < mask.rows(); ++i)
    for (Eigen::Index j = 0; j < mask.cols(); ++j)
      mask(i, j) = uniform01(rng) < rate ? S(0) : keep_scale;
  Tensor<S> m = Tensor<S>::from_matrix(std::move(mask));
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  auto fwd = [a, m, out]() mutable { out.value() = a.value().cwiseProduct(m.value()); };
  fwd();
  detail::maybe_record<S>("dropout", {a, m}, out, fwd, [a, m, out]() mutable {
    if (a.requires_grad()) a.accum_grad(out.grad().cwiseProduct(m.value()));
  });
  return out;
}

// ---- gradient checking ----

// Max over coordinates of the relative error between the analytic gradient and
// a central finite difference. The finite-difference side only runs forward
// evaluations, independent of the backward implementation it checks.
template <typename S>
double grad_check(const std::function<Tensor<S>(const Tensor<S>&)>& f, const Tensor<S>& x, S eps) {
  if (!(eps > S(0)) || eps > S(1e-2))
    throw ShapeError(cat("grad_check: eps must be in (0, 1e-2], got ", eps));
  Tensor<S> xp = Tensor<S>::param(x.value());
  MatrixX<S> analytic = MatrixX<S>::Zero(x.rows(), x.cols());
  {
    GradGraph<S> graph;
    auto scope = graph.activate();
    Tensor<S> y = f(xp);
    if (y.size() != 1) throw ShapeError(cat("grad_check: f must be scalar-valued, got ", shape_str(y.shape())));
    if (!std::isfinite(static_cast<double>(y.item())))
      throw ShapeError("grad_check: f(x) is not finite");
    if (y.requires_grad() && graph.contains_output(y.id())) {
      graph.backward(y);
      analytic = xp.grad();
    }
  }
  Tensor<S> xt = Tensor<S>::from_matrix(x.value());
  double max_rel = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const S orig = xt.value()(i, j);
      xt.value()(i, j) = orig + eps;
      const double fp = static_cast<double>(f(xt).item());
      xt.value()(i, j) = orig - eps;
      const double fm = static_cast<double>(f(xt).item());
      xt.value()(i, j) = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) throw ShapeError("grad_check: f(x) is not finite");
      const double fd = (fp - fm) / (2.0 * static_cast<double>(eps));
      const double an = static_cast<double>(analytic(i, j));
      const double rel = std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace ctrlgen
