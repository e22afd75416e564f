#pragma once

#include <string>
#include <vector>

#include "motionfuse/core/attention_ops.hpp"
#include "motionfuse/nn/layers.hpp"

namespace mfuse::fusion {

using nn::LayerNorm;
using nn::Linear;
using nn::Mlp;
using nn::ParamList;

// Projected multi-head attention: out = W_o attention(W_q xq, W_k xk, W_v xv).
template <class T>
struct MultiHeadAttention {
  Linear<T> wq, wk, wv, wo;
  int n_heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(int d, int heads, Rng& rng)
      : wq(d, d, rng), wk(d, d, rng), wv(d, d, rng), wo(d, d, rng), n_heads(heads) {
    check(d % heads == 0, ErrorCode::kInvalidArgument, "attention: d=", d, " heads=", heads);
  }

  Tensor<T> operator()(const Tensor<T>& xq, const Tensor<T>& xk, const Tensor<T>& xv,
                       const AttnMask* mask = nullptr, std::vector<T>* weights = nullptr) const {
    return wo(attention(wq(xq), wk(xk), wv(xv), n_heads, mask, weights));
  }

  // Output projection set to zero, so a residual block around it is the identity.
  void zero_output() {
    for (auto& v : wo.w.mutable_values()) v = T(0);
    for (auto& v : wo.b.mutable_values()) v = T(0);
  }

  void collect(const std::string& p, ParamList<T>& out) const {
    wq.collect(p + ".q", out);
    wk.collect(p + ".k", out);
    wv.collect(p + ".v", out);
    wo.collect(p + ".o", out);
  }
};

template <class T>
Tensor<T> msa(const MultiHeadAttention<T>& a, const Tensor<T>& x, std::vector<T>* weights = nullptr) {
  return a(x, x, x, nullptr, weights);
}

template <class T>
Tensor<T> mca(const MultiHeadAttention<T>& a, const Tensor<T>& x, const Tensor<T>& y,
              std::vector<T>* weights = nullptr) {
  return a(x, y, y, nullptr, weights);
}

// Cross-attention where query i may only see the context tokens allowed by
// row i of the mask; an all-false row falls back to every token.
template <class T>
Tensor<T> masked_cross_attention(const MultiHeadAttention<T>& a, const Tensor<T>& q, const Tensor<T>& z,
                                 const AttnMask& m, std::vector<T>* weights = nullptr) {
  check(m.rows == q.rows() && m.cols == z.rows(), ErrorCode::kShapeMismatch, "masked_cross_attention: mask ",
        m.rows, "x", m.cols, " for ", q.rows(), " queries and ", z.rows(), " tokens");
  return a(q, z, z, &m, weights);
}

// Pre-norm block: y = MSA(LN z) + z, z' = MLP(LN y) + y.
template <class T>
struct TransformerLayer {
  LayerNorm<T> ln1, ln2;
  MultiHeadAttention<T> attn;
  Mlp<T> mlp;

  TransformerLayer() = default;
  TransformerLayer(int d, int heads, int ffn, Rng& rng)
      : ln1(d), ln2(d), attn(d, heads, rng), mlp(d, ffn, d, 2, rng) {}

  Tensor<T> operator()(const Tensor<T>& z) const {
    const auto n = ln1(z);
    const auto y = add(msa(attn, n), z);
    return add(mlp(ln2(y)), y);
  }

  void zero_outputs() {
    attn.zero_output();
    auto& last = mlp.layers.back();
    for (auto& v : last.w.mutable_values()) v = T(0);
    for (auto& v : last.b.mutable_values()) v = T(0);
  }

  void collect(const std::string& p, ParamList<T>& out) const {
    ln1.collect(p + ".ln1", out);
    attn.collect(p + ".attn", out);
    ln2.collect(p + ".ln2", out);
    mlp.collect(p + ".mlp", out);
  }
};

}  // namespace mfuse::fusion
