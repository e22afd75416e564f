#pragma once

#include <string>
#include <vector>

#include "motionfuse/core/spatial_ops.hpp"
#include "motionfuse/fusion/attention.hpp"
#include "motionfuse/fusion/encoder.hpp"

namespace mfuse::fusion {

inline constexpr int kMovingClass = 0;
inline constexpr int kNoObjectClass = 1;

template <class T>
struct Prediction {
  Tensor<T> mask_logits;   // [N, height*width] at stride 4
  Tensor<T> class_logits;  // [N, 2]: moving object, no object
  int height = 0;
  int width = 0;
  int layer = 0;  // 0 is the prediction from the initial queries

  int n_queries() const { return class_logits.rows(); }
};

// Binarized sigmoid(mask) > 0.5 of every query, bilinearly resampled to an h x w level.
template <class T>
AttnMask attention_mask(const Prediction<T>& p, int h, int w) {
  const int n = p.n_queries();
  AttnMask m(n, h * w, false);
  std::vector<BilinearTap> taps;
  taps.reserve(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) taps.push_back(bilinear_tap(p.height, p.width, (x + 0.5) / w, (y + 0.5) / h));
  const T* data = p.mask_logits.data();
  const std::size_t hw = static_cast<std::size_t>(p.height) * p.width;
  for (int i = 0; i < n; ++i) {
    const T* row = data + i * hw;
    for (int c = 0; c < h * w; ++c) {
      const auto& t = taps[c];
      double v = 0;
      for (int k = 0; k < 4; ++k) v += t.w[k] * static_cast<double>(row[t.idx[k]]);
      m(i, c) = v > 0.0 ? 1 : 0;
    }
  }
  return m;
}

// [A | B] column-wise: query i may see A's allowed tokens then B's.
inline AttnMask concat_mask(const AttnMask& a, const AttnMask& b) {
  check(a.rows == b.rows, ErrorCode::kShapeMismatch, "concat_mask rows");
  AttnMask m(a.rows, a.cols + b.cols, false);
  for (int i = 0; i < a.rows; ++i) {
    for (int j = 0; j < a.cols; ++j) m(i, j) = a(i, j);
    for (int j = 0; j < b.cols; ++j) m(i, a.cols + j) = b(i, j);
  }
  return m;
}

// Pre-norm decoder block: masked cross-attention, self-attention, MLP.
template <class T>
struct DecoderLayer {
  LayerNorm<T> ln_cross, ln_self, ln_ffn;
  MultiHeadAttention<T> cross, self;
  Mlp<T> ffn;

  DecoderLayer() = default;
  DecoderLayer(int d, int heads, int ffn_dim, Rng& rng)
      : ln_cross(d), ln_self(d), ln_ffn(d), cross(d, heads, rng), self(d, heads, rng), ffn(d, ffn_dim, d, 2, rng) {}

  // q += W_o attn(LN(q) + qpos, keys, values)
  Tensor<T> cross_step(const Tensor<T>& q, const Tensor<T>& qpos, const Tensor<T>& keys, const Tensor<T>& values,
                       const AttnMask* mask) const {
    SiteScope site(AttentionSite::kDecoderCross);
    return add(q, cross(add(ln_cross(q), qpos), keys, values, mask));
  }

  // q += W_o attn(qk, keys, values) where qk = LN(q) + qpos is computed by the caller,
  // who also builds keys and values from it.
  Tensor<T> self_step(const Tensor<T>& q, const Tensor<T>& qk, const Tensor<T>& keys,
                      const Tensor<T>& values) const {
    SiteScope site(AttentionSite::kDecoderSelf);
    return add(q, self(qk, keys, values));
  }

  Tensor<T> ffn_step(const Tensor<T>& q) const { return add(q, ffn(ln_ffn(q))); }

  void collect(const std::string& p, ParamList<T>& o) const {
    ln_cross.collect(p + ".ln_cross", o);
    cross.collect(p + ".cross", o);
    ln_self.collect(p + ".ln_self", o);
    self.collect(p + ".self", o);
    ln_ffn.collect(p + ".ln_ffn", o);
    ffn.collect(p + ".ffn", o);
  }
};

// Learned queries, decoder layers and the class/mask heads of one stream.
template <class T>
struct QueryDecoder {
  nn::Embedding<T> query_feat, query_pos;
  std::vector<DecoderLayer<T>> layers;
  LayerNorm<T> norm;
  Linear<T> class_head;
  Mlp<T> mask_embed;

  QueryDecoder() = default;
  QueryDecoder(int n_queries, int d, int heads, int ffn_dim, int n_layers, int mask_layers, Rng& rng)
      : query_feat(n_queries, d, rng), query_pos(n_queries, d, rng), norm(d), class_head(d, 2, rng),
        mask_embed(d, d, d, mask_layers, rng) {
    for (int i = 0; i < n_layers; ++i) layers.emplace_back(d, heads, ffn_dim, rng);
  }

  int n_queries() const { return query_feat.size(); }

  // mask_features [d, h*w]
  Prediction<T> predict(const Tensor<T>& q, const Tensor<T>& mask_features, int h, int w, int layer) const {
    const auto n = norm(q);
    return {matmul(mask_embed(n), mask_features), class_head(n), h, w, layer};
  }

  void reset_class_head(Rng& rng) { class_head = Linear<T>(class_head.in_features(), 2, rng); }

  void collect(const std::string& p, ParamList<T>& o) const {
    query_feat.collect(p + ".query_feat", o);
    query_pos.collect(p + ".query_pos", o);
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(p + ".layers." + std::to_string(i), o);
    norm.collect(p + ".norm", o);
    class_head.collect(p + ".class_head", o);
    mask_embed.collect(p + ".mask_embed", o);
  }
};

// Level read by decoder layer i: strides 32, 16, 8, 32, ...
inline int decoder_level(int layer) { return kNumLevels - 1 - layer % kNumLevels; }

}  // namespace mfuse::fusion
