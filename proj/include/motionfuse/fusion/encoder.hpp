#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "motionfuse/core/attention_ops.hpp"
#include "motionfuse/fusion/backbone.hpp"
#include "motionfuse/nn/layers.hpp"

namespace mfuse::fusion {

// Token layout of the three encoder levels (strides 8, 16, 32), stacked in
// that order into one [T, d] array.
struct LevelLayout {
  std::array<int, kNumLevels> h{}, w{}, offset{};
  int total = 0;

  static LevelLayout of(int in_h, int in_w) {
    LevelLayout l;
    for (int i = 0; i < kNumLevels; ++i) {
      l.h[i] = level_size(in_h, 8 << i);
      l.w[i] = level_size(in_w, 8 << i);
      l.offset[i] = l.total;
      l.total += l.h[i] * l.w[i];
    }
    return l;
  }
  int count(int level) const { return h[level] * w[level]; }
  bool operator==(const LevelLayout&) const = default;
};

template <class T>
struct Pyramid {
  LevelLayout layout;
  Tensor<T> tokens;  // [T, d]
  Tensor<T> pos;     // [T, d] positional + level (+ modality) encoding, constant w.r.t. tokens

  Tensor<T> level(int l) const {
    return slice_rows(tokens, layout.offset[l], layout.offset[l] + layout.count(l));
  }
  Tensor<T> level_pos(int l) const {
    return slice_rows(pos, layout.offset[l], layout.offset[l] + layout.count(l));
  }
};

struct DeformInputs {
  std::shared_ptr<const DeformGeometry> geometry;
  std::shared_ptr<const std::vector<double>> ref;
};

// One stream on its own: each level is its own grid, references at pixel centres.
inline DeformInputs single_geometry(const LevelLayout& lay, int heads, int points) {
  auto g = std::make_shared<DeformGeometry>();
  g->n_heads = heads;
  g->n_points = points;
  auto ref = std::make_shared<std::vector<double>>();
  ref->reserve(static_cast<std::size_t>(lay.total) * 2);
  for (int l = 0; l < kNumLevels; ++l) {
    DeformLevel lv{lay.h[l], lay.w[l], false, {}};
    lv.cell_row.resize(static_cast<std::size_t>(lay.count(l)));
    for (int i = 0; i < lay.count(l); ++i) lv.cell_row[i] = lay.offset[l] + i;
    g->levels.push_back(std::move(lv));
    for (int y = 0; y < lay.h[l]; ++y)
      for (int x = 0; x < lay.w[l]; ++x) {
        ref->push_back((x + 0.5) / lay.w[l]);
        ref->push_back((y + 0.5) / lay.h[l]);
      }
  }
  return {g, ref};
}

// Two streams fused along x: level l becomes an h x 2w grid whose left half is
// the appearance map and right half the motion map. Value rows are
// [appearance tokens; motion tokens]. The grid wraps in x so that both halves
// see the same neighbourhood structure.
inline DeformInputs fused_geometry(const LevelLayout& lay, int heads, int points) {
  auto g = std::make_shared<DeformGeometry>();
  g->n_heads = heads;
  g->n_points = points;
  for (int l = 0; l < kNumLevels; ++l) {
    const int h = lay.h[l], w = lay.w[l];
    DeformLevel lv{h, 2 * w, true, {}};
    lv.cell_row.resize(static_cast<std::size_t>(h) * 2 * w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < 2 * w; ++x)
        lv.cell_row[static_cast<std::size_t>(y) * 2 * w + x] =
            (x < w ? 0 : lay.total) + lay.offset[l] + y * w + (x % w);
    g->levels.push_back(std::move(lv));
  }
  auto ref = std::make_shared<std::vector<double>>();
  ref->reserve(static_cast<std::size_t>(lay.total) * 4);
  for (int half = 0; half < 2; ++half)
    for (int l = 0; l < kNumLevels; ++l)
      for (int y = 0; y < lay.h[l]; ++y)
        for (int x = 0; x < lay.w[l]; ++x) {
          ref->push_back((half * lay.w[l] + x + 0.5) / (2.0 * lay.w[l]));
          ref->push_back((y + 0.5) / lay.h[l]);
        }
  return {g, ref};
}

// Pre-norm deformable attention block:
//   q = LN(x) + pos, x += W_o deform(W_v LN(x); offsets(q), weights(q)), x += FFN(LN(x)).
template <class T>
struct EncoderLayer {
  nn::LayerNorm<T> ln1, ln2;
  nn::Linear<T> value, offsets, weights, out;
  nn::Mlp<T> ffn;
  int n_heads = 1, n_points = 1;

  EncoderLayer() = default;
  EncoderLayer(int d, int heads, int points, int ffn_dim, Rng& rng)
      : ln1(d), ln2(d), value(d, d, rng), offsets(d, heads * kNumLevels * points * 2, rng),
        weights(d, heads * kNumLevels * points, rng), out(d, d, rng), ffn(d, ffn_dim, d, 2, rng),
        n_heads(heads), n_points(points) {
    reset_sampling();
  }

  // Offsets start on rings of radius 1..P pixels in H directions; equal weights.
  void reset_sampling() {
    for (auto& v : offsets.w.mutable_values()) v = T(0);
    for (auto& v : weights.w.mutable_values()) v = T(0);
    for (auto& v : weights.b.mutable_values()) v = T(0);
    auto b = offsets.b.mutable_values();
    for (int h = 0; h < n_heads; ++h) {
      const double a = 2.0 * std::numbers::pi * h / n_heads;
      double cx = std::cos(a), cy = std::sin(a);
      const double m = std::max(std::abs(cx), std::abs(cy));
      cx /= m;
      cy /= m;
      for (int l = 0; l < kNumLevels; ++l)
        for (int p = 0; p < n_points; ++p) {
          const std::size_t k = ((static_cast<std::size_t>(h) * kNumLevels + l) * n_points + p) * 2;
          b[k] = static_cast<T>(cx * (p + 1));
          b[k + 1] = static_cast<T>(cy * (p + 1));
        }
    }
  }

  struct Projected {
    Tensor<T> v, off, logits;
  };

  Projected project(const Tensor<T>& x, const Tensor<T>& pos) const {
    const auto n = ln1(x);
    const auto q = add(n, pos);
    return {value(n), offsets(q), weights(q)};
  }

  Tensor<T> finish(const Tensor<T>& x, const Tensor<T>& sampled) const {
    const auto y = add(x, out(sampled));
    return add(y, ffn(ln2(y)));
  }

  Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& pos, const DeformInputs& g) const {
    const auto p = project(x, pos);
    return finish(x, deform_attention(p.v, g.geometry, g.ref, p.off, p.logits));
  }

  void collect(const std::string& pre, nn::ParamList<T>& o) const {
    ln1.collect(pre + ".ln1", o);
    value.collect(pre + ".value", o);
    offsets.collect(pre + ".offsets", o);
    weights.collect(pre + ".weights", o);
    out.collect(pre + ".out", o);
    ln2.collect(pre + ".ln2", o);
    ffn.collect(pre + ".ffn", o);
  }
};

// Per-stream multi-scale encoder: 1x1 projections of the stride 8/16/32
// backbone maps to d, a learned level embedding, then deformable layers.
template <class T>
struct PixelEncoder {
  std::array<nn::Linear<T>, kNumLevels> input_proj;
  nn::Embedding<T> level_embed;
  std::vector<EncoderLayer<T>> layers;

  PixelEncoder() = default;
  PixelEncoder(const std::array<int, 4>& widths, int d, int heads, int points, int ffn_dim, int n_layers, Rng& rng)
      : input_proj{nn::Linear<T>(widths[1], d, rng), nn::Linear<T>(widths[2], d, rng),
                   nn::Linear<T>(widths[3], d, rng)},
        level_embed(kNumLevels, d, rng) {
    for (int i = 0; i < n_layers; ++i) layers.emplace_back(d, heads, points, ffn_dim, rng);
  }

  int d_model() const { return level_embed.table.cols(); }

  // Projected tokens and their encodings before any attention layer. `extra`
  // (a [1, d] modality vector) is added to the encodings when defined.
  Pyramid<T> embed(const std::array<Tensor<T>, 4>& feats, const Tensor<T>& extra) const {
    Pyramid<T> p;
    p.layout.total = 0;
    std::vector<Tensor<T>> toks, pos;
    for (int l = 0; l < kNumLevels; ++l) {
      const auto& f = feats[l + 1];
      p.layout.h[l] = f.dim(1);
      p.layout.w[l] = f.dim(2);
      p.layout.offset[l] = p.layout.total;
      p.layout.total += f.dim(1) * f.dim(2);
      toks.push_back(input_proj[l](nn::map_to_tokens(f)));
      auto e = add_rowvec(sine_position<T>(f.dim(1), f.dim(2), d_model()), level_embed.row(l));
      if (extra.defined()) e = add_rowvec(e, extra);
      pos.push_back(e);
    }
    p.tokens = concat_rows(toks);
    p.pos = concat_rows(pos);
    return p;
  }

  Pyramid<T> encode(const std::array<Tensor<T>, 4>& feats, const Tensor<T>& extra = {}) const {
    SiteScope site(AttentionSite::kEncoder);
    auto p = embed(feats, extra);
    if (layers.empty()) return p;
    const auto g = single_geometry(p.layout, layers[0].n_heads, layers[0].n_points);
    for (const auto& layer : layers) p.tokens = layer(p.tokens, p.pos, g);
    return p;
  }

  void collect(const std::string& pre, nn::ParamList<T>& o) const {
    for (int l = 0; l < kNumLevels; ++l) input_proj[l].collect(pre + ".input_proj" + std::to_string(l), o);
    level_embed.collect(pre + ".level_embed", o);
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(pre + ".layers." + std::to_string(i), o);
  }
};

// Encoder over the x-concatenation [appearance | motion] of both pyramids.
// Every token keeps its own stream's weights; sampling crosses the seam.
template <class T>
std::array<Pyramid<T>, 2> encode_fused(const PixelEncoder<T>& ea, const PixelEncoder<T>& em,
                                       const std::array<Tensor<T>, 4>& fa, const std::array<Tensor<T>, 4>& fm,
                                       const Tensor<T>& extra_a, const Tensor<T>& extra_m) {
  SiteScope site(AttentionSite::kEncoder);
  auto pa = ea.embed(fa, extra_a), pm = em.embed(fm, extra_m);
  check(pa.layout == pm.layout, ErrorCode::kShapeMismatch, "encoder fusion needs equal map sizes");
  check(ea.layers.size() == em.layers.size(), ErrorCode::kShapeMismatch, "encoder fusion needs equal depth");
  if (ea.layers.empty()) return {pa, pm};
  const int n = pa.layout.total;
  const auto g = fused_geometry(pa.layout, ea.layers[0].n_heads, ea.layers[0].n_points);
  for (std::size_t i = 0; i < ea.layers.size(); ++i) {
    const auto a = ea.layers[i].project(pa.tokens, pa.pos);
    const auto m = em.layers[i].project(pm.tokens, pm.pos);
    const auto s = deform_attention(concat_rows<T>({a.v, m.v}), g.geometry, g.ref, concat_rows<T>({a.off, m.off}),
                                    concat_rows<T>({a.logits, m.logits}));
    pa.tokens = ea.layers[i].finish(pa.tokens, slice_rows(s, 0, n));
    pm.tokens = em.layers[i].finish(pm.tokens, slice_rows(s, n, 2 * n));
  }
  return {pa, pm};
}

}  // namespace mfuse::fusion
