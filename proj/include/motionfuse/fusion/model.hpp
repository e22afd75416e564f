#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "motionfuse/fusion/backbone.hpp"
#include "motionfuse/fusion/config.hpp"
#include "motionfuse/fusion/decoder.hpp"
#include "motionfuse/fusion/encoder.hpp"

namespace mfuse::fusion {

// Backbone, pixel encoder, mask-feature head and query decoder of one modality.
template <class T>
struct Stream {
  Backbone<T> backbone;
  PixelEncoder<T> encoder;
  nn::Conv2d<T> lateral, mask_out;
  QueryDecoder<T> decoder;

  Stream() = default;
  Stream(const FusionConfig& c, int in_channels, Rng& rng)
      : backbone(in_channels, c.backbone_widths, rng),
        encoder(c.backbone_widths, c.d_model, c.n_heads, c.n_points, c.ffn_dim, c.n_enc_layers, rng),
        lateral(c.backbone_widths[0], c.d_model, 1, 1, 0, rng),
        mask_out(c.d_model, c.d_model, 3, 1, 1, rng),
        decoder(c.n_queries, c.d_model, c.n_heads, c.ffn_dim, c.n_dec_layers, c.mask_mlp_layers, rng) {}

  int in_channels() const { return backbone.proj.w.dim(1); }

  // Stride-4 lateral map plus the upsampled stride-8 encoder output -> [d, h4*w4].
  Tensor<T> mask_features(const Tensor<T>& c4, const Pyramid<T>& p) const {
    const int h = c4.dim(1), w = c4.dim(2);
    const auto fine = nn::tokens_to_map(p.level(0), p.layout.h[0], p.layout.w[0]);
    const auto m = mask_out(add(lateral(c4), resize_nearest(fine, h, w)));
    return reshape(m, {m.dim(0), h * w});
  }

  void collect(const std::string& p, nn::ParamList<T>& o) const {
    backbone.collect(p + ".backbone", o);
    encoder.collect(p + ".encoder", o);
    lateral.collect(p + ".lateral", o);
    mask_out.collect(p + ".mask_out", o);
    decoder.collect(p + ".decoder", o);
  }
};

template <class T>
void check_input(const Tensor<T>& x, int channels, const char* what) {
  check(x.defined(), ErrorCode::kInvalidArgument, "missing ", what, " input");
  check(x.rank() == 3 && x.dim(0) == channels, ErrorCode::kShapeMismatch, what, " input must be [", channels,
        ",H,W], got ", shape_str(x.shape()));
  for (T v : x.values()) check(std::isfinite(static_cast<double>(v)), ErrorCode::kNonFinite, what, " input is not finite");
}

// A plain one-stream masked-attention segmenter.
template <class T>
struct Segmenter {
  FusionConfig config;
  Stream<T> stream;

  Segmenter() = default;
  Segmenter(FusionConfig c, std::uint64_t seed) : config(c) {
    config.mechanism = Mechanism::kSingle;
    config.validate();
    Rng rng(seed);
    stream = Stream<T>(config, config.channels_of(config.single_stream), rng);
  }

  std::vector<Prediction<T>> forward(const Tensor<T>& x) const {
    check_input(x, stream.in_channels(), "segmenter");
    const auto feats = stream.backbone(x);
    const auto pyr = stream.encoder.encode(feats);
    const auto mf = stream.mask_features(feats[0], pyr);
    const int h4 = feats[0].dim(1), w4 = feats[0].dim(2);
    const auto& dec = stream.decoder;
    auto q = dec.query_feat.table;
    const auto& qpos = dec.query_pos.table;
    std::vector<Prediction<T>> preds{dec.predict(q, mf, h4, w4, 0)};
    for (std::size_t l = 0; l < dec.layers.size(); ++l) {
      const auto& layer = dec.layers[l];
      const int lv = decoder_level(static_cast<int>(l));
      const auto mask = attention_mask(preds.back(), pyr.layout.h[lv], pyr.layout.w[lv]);
      const auto z = pyr.level(lv);
      q = layer.cross_step(q, qpos, add(z, pyr.level_pos(lv)), z, &mask);
      const auto n = layer.ln_self(q);
      const auto nk = add(n, qpos);
      q = layer.self_step(q, nk, nk, n);
      q = layer.ffn_step(q);
      preds.push_back(dec.predict(q, mf, h4, w4, static_cast<int>(l) + 1));
    }
    return preds;
  }

  nn::ParamList<T> parameters() const {
    nn::ParamList<T> o;
    stream.collect("stream." + to_string(config.single_stream), o);
    return o;
  }
};

// Pairs query i of both streams: masks w0*m_rgb + w1*m_motion + b (a 1x1
// convolution over the two-channel stack), classes a linear map of the
// concatenated 4-vector.
template <class T>
struct FusionHead {
  Tensor<T> mask_w, mask_b;
  nn::Linear<T> cls;

  FusionHead() = default;
  explicit FusionHead(Rng& rng) : cls(4, 2, rng) { reset(); }

  void reset() {
    mask_w = Tensor<T>::parameter({2}, {T(0.5), T(0.5)});
    mask_b = Tensor<T>::parameter({1}, {T(0)});
    std::vector<T> w(8, T(0));
    w[0 * 4 + 0] = w[0 * 4 + 2] = T(0.5);
    w[1 * 4 + 1] = w[1 * 4 + 3] = T(0.5);
    cls.w = Tensor<T>::parameter({2, 4}, std::move(w));
    cls.b = Tensor<T>::parameter({2}, {T(0), T(0)});
  }

  Prediction<T> operator()(const Prediction<T>& a, const Prediction<T>& m) const {
    check(a.n_queries() == m.n_queries(), ErrorCode::kShapeMismatch, "fuse_outputs: ", a.n_queries(), " vs ",
          m.n_queries(), " queries");
    check(a.height == m.height && a.width == m.width, ErrorCode::kShapeMismatch, "fuse_outputs: mask sizes differ");
    return {weighted_sum2(a.mask_logits, m.mask_logits, mask_w, mask_b),
            cls(concat_cols<T>({a.class_logits, m.class_logits})), a.height, a.width, a.layer};
  }

  void collect(const std::string& p, nn::ParamList<T>& o) const {
    o.push_back({p + ".mask_weight", mask_w, nn::ParamKind::kWeight});
    o.push_back({p + ".mask_bias", mask_b, nn::ParamKind::kBias});
    cls.collect(p + ".class", o);
  }
};

template <class T>
Prediction<T> fuse_outputs(const FusionHead<T>& head, const Prediction<T>& a, const Prediction<T>& m) {
  return head(a, m);
}

// Shared query set through which the streams communicate under mbt.
template <class T>
struct Bottleneck {
  nn::Embedding<T> query_feat, query_pos;
  std::vector<DecoderLayer<T>> layers;

  Bottleneck() = default;
  Bottleneck(const FusionConfig& c, Rng& rng)
      : query_feat(c.n_bottleneck, c.d_model, rng), query_pos(c.n_bottleneck, c.d_model, rng) {
    for (int i = 0; i < c.n_dec_layers; ++i) layers.emplace_back(c.d_model, c.n_heads, c.ffn_dim, rng);
  }

  void collect(const std::string& p, nn::ParamList<T>& o) const {
    query_feat.collect(p + ".query_feat", o);
    query_pos.collect(p + ".query_pos", o);
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(p + ".layers." + std::to_string(i), o);
  }
};

template <class T>
struct ModelInput {
  Tensor<T> rgb;     // [3, H, W]
  Tensor<T> motion;  // [C, H, W]
};

template <class T>
struct ModelOutput {
  std::vector<Prediction<T>> fused;                   // supervised; one per decoder layer plus the initial one
  std::vector<std::vector<Prediction<T>>> streams;   // per stream, same length
};

template <class T>
struct FusionModel {
  FusionConfig config;
  std::vector<Modality> modalities;
  std::vector<Stream<T>> streams;
  nn::Embedding<T> modality_embed;  // rows: appearance, motion
  std::optional<Bottleneck<T>> bottleneck;
  std::optional<FusionHead<T>> head;

  FusionModel() = default;
  FusionModel(const FusionConfig& c, std::uint64_t seed) : config(c) {
    config.validate();
    Rng rng(seed);
    if (config.two_stream())
      modalities = {Modality::kAppearance, Modality::kMotion};
    else
      modalities = {config.single_stream};
    for (Modality m : modalities) streams.emplace_back(config, config.channels_of(m), rng);
    if (config.two_stream()) {
      if (!config.share_positional) modality_embed = nn::Embedding<T>(2, config.d_model, rng, 0.02);
      head.emplace(rng);
    }
    if (config.mechanism == Mechanism::kMbt) bottleneck.emplace(config, rng);
  }

  int n_streams() const { return static_cast<int>(streams.size()); }

  Tensor<T> modality_vector(Modality m) const {
    if (!modality_embed.table.defined()) return {};
    return modality_embed.row(m == Modality::kAppearance ? 0 : 1);
  }

  ModelOutput<T> forward(const ModelInput<T>& in) const {
    const int ns = n_streams();
    const Mechanism mech = config.mechanism;
    std::vector<std::array<Tensor<T>, 4>> feats(ns);
    for (int s = 0; s < ns; ++s) {
      const auto& x = modalities[s] == Modality::kAppearance ? in.rgb : in.motion;
      check_input(x, streams[s].in_channels(), modalities[s] == Modality::kAppearance ? "rgb" : "motion");
      feats[s] = streams[s].backbone(x);
    }
    if (ns == 2)
      check(feats[0][0].shape()[1] == feats[1][0].shape()[1] && feats[0][0].shape()[2] == feats[1][0].shape()[2],
            ErrorCode::kShapeMismatch, "rgb and motion inputs must have equal size");

    std::vector<Pyramid<T>> pyr;
    if (ns == 2 && fuses_encoder(mech)) {
      auto both = encode_fused(streams[0].encoder, streams[1].encoder, feats[0], feats[1],
                               modality_vector(modalities[0]), modality_vector(modalities[1]));
      pyr = {both[0], both[1]};
    } else {
      for (int s = 0; s < ns; ++s)
        pyr.push_back(streams[s].encoder.encode(feats[s], ns == 2 ? modality_vector(modalities[s]) : Tensor<T>{}));
    }

    const int h4 = feats[0][0].dim(1), w4 = feats[0][0].dim(2);
    std::vector<Tensor<T>> mf(ns), q(ns), qpos(ns);
    ModelOutput<T> out;
    out.streams.resize(ns);
    for (int s = 0; s < ns; ++s) {
      mf[s] = streams[s].mask_features(feats[s][0], pyr[s]);
      const auto& dec = streams[s].decoder;
      q[s] = dec.query_feat.table;
      qpos[s] = dec.query_pos.table;
      out.streams[s].push_back(dec.predict(q[s], mf[s], h4, w4, 0));
    }
    const bool cross_modal = ns == 2 && fuses_decoder(mech);
    const bool mbt = ns == 2 && mech == Mechanism::kMbt;
    if (ns == 2)
      check(streams[0].decoder.n_queries() == streams[1].decoder.n_queries(), ErrorCode::kShapeMismatch,
            "streams need equal query counts");
    Tensor<T> qb, qbpos;
    if (mbt) {
      qb = bottleneck->query_feat.table;
      qbpos = bottleneck->query_pos.table;
    }

    const int n_layers = static_cast<int>(streams[0].decoder.layers.size());
    for (int l = 0; l < n_layers; ++l) {
      const int lv = decoder_level(l);
      const int lh = pyr[0].layout.h[lv], lw = pyr[0].layout.w[lv];
      std::vector<AttnMask> masks;
      std::vector<Tensor<T>> z(ns), zk(ns);
      for (int s = 0; s < ns; ++s) {
        masks.push_back(attention_mask(out.streams[s].back(), lh, lw));
        z[s] = pyr[s].level(lv);
        zk[s] = add(z[s], pyr[s].level_pos(lv));
      }

      // masked cross-attention
      std::vector<Tensor<T>> nq(ns);
      if (cross_modal) {
        const auto keys = concat_rows(zk), values = concat_rows(z);
        const auto m = concat_mask(masks[0], masks[1]);
        for (int s = 0; s < ns; ++s) nq[s] = streams[s].decoder.layers[l].cross_step(q[s], qpos[s], keys, values, &m);
      } else if (mbt) {
        const auto bk = add(qb, qbpos);
        const AttnMask open(q[0].rows(), qb.rows(), true);
        for (int s = 0; s < ns; ++s) {
          const auto m = concat_mask(masks[s], open);
          nq[s] = streams[s].decoder.layers[l].cross_step(q[s], qpos[s], concat_rows<T>({zk[s], bk}),
                                                         concat_rows<T>({z[s], qb}), &m);
        }
        qb = bottleneck->layers[l].cross_step(qb, qbpos, concat_rows(zk), concat_rows(z), nullptr);
      } else {
        for (int s = 0; s < ns; ++s) nq[s] = streams[s].decoder.layers[l].cross_step(q[s], qpos[s], zk[s], z[s], &masks[s]);
      }
      q = nq;

      // self-attention
      std::vector<Tensor<T>> n(ns), nk(ns);
      for (int s = 0; s < ns; ++s) {
        n[s] = streams[s].decoder.layers[l].ln_self(q[s]);
        nk[s] = add(n[s], qpos[s]);
      }
      if (cross_modal) {
        const auto keys = concat_rows(nk), values = concat_rows(n);
        for (int s = 0; s < ns; ++s) nq[s] = streams[s].decoder.layers[l].self_step(q[s], nk[s], keys, values);
      } else if (mbt) {
        const auto& bl = bottleneck->layers[l];
        const auto nb = bl.ln_self(qb);
        const auto nbk = add(nb, qbpos);
        for (int s = 0; s < ns; ++s)
          nq[s] = streams[s].decoder.layers[l].self_step(q[s], nk[s], concat_rows<T>({nk[s], nbk}),
                                                        concat_rows<T>({n[s], nb}));
        qb = bl.self_step(qb, nbk, nbk, nb);
      } else {
        for (int s = 0; s < ns; ++s) nq[s] = streams[s].decoder.layers[l].self_step(q[s], nk[s], nk[s], n[s]);
      }
      q = nq;

      for (int s = 0; s < ns; ++s) {
        q[s] = streams[s].decoder.layers[l].ffn_step(q[s]);
        out.streams[s].push_back(streams[s].decoder.predict(q[s], mf[s], h4, w4, l + 1));
      }
      if (mbt) qb = bottleneck->layers[l].ffn_step(qb);
    }

    if (ns == 2) {
      for (std::size_t k = 0; k < out.streams[0].size(); ++k)
        out.fused.push_back((*head)(out.streams[0][k], out.streams[1][k]));
    } else {
      out.fused = out.streams[0];
    }
    return out;
  }

  nn::ParamList<T> parameters() const {
    nn::ParamList<T> o;
    for (int s = 0; s < n_streams(); ++s) streams[s].collect("stream." + to_string(modalities[s]), o);
    if (modality_embed.table.defined()) modality_embed.collect("modality_embed", o);
    if (bottleneck) bottleneck->collect("bottleneck", o);
    if (head) head->collect("fusion_head", o);
    return o;
  }

  Stream<T>* stream_of(Modality m) {
    for (int s = 0; s < n_streams(); ++s)
      if (modalities[s] == m) return &streams[s];
    return nullptr;
  }
};

}  // namespace mfuse::fusion
