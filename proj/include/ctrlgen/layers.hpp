#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ctrlgen/checkpoint.hpp"
#include "ctrlgen/ops.hpp"
#include "ctrlgen/tensor.hpp"

namespace ctrlgen {

// Affine map [B,in] -> [B,out]. Weights start uniform in +-1/sqrt(in),
// biases at zero.
template <typename S>
struct Linear {
  Tensor<S> w, b;

  static Linear init(int in, int out, Rng& rng) {
    const S k = S(1) / std::sqrt(static_cast<S>(in));
    Linear l;
    l.w = Tensor<S>::param(Tensor<S>::uniform({in, out}, -k, k, rng).value());
    l.b = Tensor<S>::param(MatrixX<S>::Zero(1, out));
    return l;
  }

  Tensor<S> operator()(const Tensor<S>& x) const {
    return add(matmul(x, w), tile_rows(b, x.rows()));
  }

  void collect(const std::string& prefix, NamedParams<S>& out) const {
    out.emplace_back(prefix + ".w", w);
    out.emplace_back(prefix + ".b", b);
  }
};

template <typename S>
struct LayerNormParams {
  Tensor<S> gain, bias;

  static LayerNormParams init(int d) {
    LayerNormParams n;
    n.gain = Tensor<S>::param(MatrixX<S>::Ones(1, d));
    n.bias = Tensor<S>::param(MatrixX<S>::Zero(1, d));
    return n;
  }

  Tensor<S> operator()(const Tensor<S>& x) const { return layer_norm(x, gain, bias); }

  void collect(const std::string& prefix, NamedParams<S>& out) const {
    out.emplace_back(prefix + ".gain", gain);
    out.emplace_back(prefix + ".bias", bias);
  }
};

// One LSTM layer with fused gate weights, gate order i, f, g, o.
template <typename S>
struct LstmCell {
  Tensor<S> wx;  // [in, 4H]
  Tensor<S> wh;  // [H, 4H]
  Tensor<S> b;   // [1, 4H]
  int hidden = 0;

  static LstmCell init(int in, int hidden, Rng& rng) {
    const S k = S(1) / std::sqrt(static_cast<S>(hidden));
    LstmCell cell;
    cell.hidden = hidden;
    cell.wx = Tensor<S>::param(Tensor<S>::uniform({in, 4 * hidden}, -k, k, rng).value());
    cell.wh = Tensor<S>::param(Tensor<S>::uniform({hidden, 4 * hidden}, -k, k, rng).value());
    cell.b = Tensor<S>::param(MatrixX<S>::Zero(1, 4 * hidden));
    return cell;
  }

  // ([B,in], [B,H], [B,H]) -> new (h, c)
  std::pair<Tensor<S>, Tensor<S>> step(const Tensor<S>& x, const Tensor<S>& h,
                                       const Tensor<S>& c) const {
    const Eigen::Index batch = x.rows();
    Tensor<S> gates = add(add(matmul(x, wx), matmul(h, wh)), tile_rows(b, batch));
    Tensor<S> i = sigmoid(slice_cols(gates, 0, hidden));
    Tensor<S> f = sigmoid(slice_cols(gates, hidden, hidden));
    Tensor<S> g = ctrlgen::tanh(slice_cols(gates, 2 * hidden, hidden));
    Tensor<S> o = sigmoid(slice_cols(gates, 3 * hidden, hidden));
    Tensor<S> c_next = add(mul(f, c), mul(i, g));
    Tensor<S> h_next = mul(o, ctrlgen::tanh(c_next));
    return {h_next, c_next};
  }

  void collect(const std::string& prefix, NamedParams<S>& out) const {
    out.emplace_back(prefix + ".wx", wx);
    out.emplace_back(prefix + ".wh", wh);
    out.emplace_back(prefix + ".b", b);
  }
};

// Multi-head attention projections. Queries always live in the model width;
// keys and values may project from a different width (cross attention).
template <typename S>
struct AttentionBlock {
  Linear<S> wq, wk, wv, wo;
  int n_heads = 1;

  static AttentionBlock init(int d_model, int d_kv, int n_heads, Rng& rng) {
    AttentionBlock a;
    a.n_heads = n_heads;
    a.wq = Linear<S>::init(d_model, d_model, rng);
    a.wk = Linear<S>::init(d_kv, d_model, rng);
    a.wv = Linear<S>::init(d_kv, d_model, rng);
    a.wo = Linear<S>::init(d_model, d_model, rng);
    return a;
  }

  Tensor<S> operator()(const Tensor<S>& q_in, const Tensor<S>& kv_in, bool causal) const {
    Tensor<S> attended = scaled_dot_product_attention(wq(q_in), wk(kv_in), wv(kv_in),
                                                      AttentionOpts{n_heads, causal});
    return wo(attended);
  }

  void collect(const std::string& prefix, NamedParams<S>& out) const {
    wq.collect(prefix + ".wq", out);
    wk.collect(prefix + ".wk", out);
    wv.collect(prefix + ".wv", out);
    wo.collect(prefix + ".wo", out);
  }
};

template <typename S>
struct FeedForward {
  Linear<S> expand, contract;

  static FeedForward init(int d, int mult, Rng& rng) {
    FeedForward f;
    f.expand = Linear<S>::init(d, d * mult, rng);
    f.contract = Linear<S>::init(d * mult, d, rng);
    return f;
  }

  Tensor<S> operator()(const Tensor<S>& x) const { return contract(relu(expand(x))); }

  void collect(const std::string& prefix, NamedParams<S>& out) const {
    expand.collect(prefix + ".expand", out);
    contract.collect(prefix + ".contract", out);
  }
};

}  // namespace ctrlgen
