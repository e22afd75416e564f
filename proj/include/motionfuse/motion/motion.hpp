#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "motionfuse/core/error.hpp"
#include "motionfuse/core/random.hpp"
#include "motionfuse/scene/targets.hpp"
#include "motionfuse/scene/types.hpp"

namespace mfuse::motion {

enum class MotionKind { kOpticalFlow, kSceneFlow, kEmbedding };

inline constexpr int kDefaultEmbeddingDim = 28;

inline const char* to_string(MotionKind k) {
  switch (k) {
    case MotionKind::kOpticalFlow: return "optical_flow";
    case MotionKind::kSceneFlow: return "scene_flow";
    case MotionKind::kEmbedding: return "embedding";
  }
  return "?";
}

inline MotionKind parse_kind(const std::string& s) {
  if (s == "optical_flow" || s == "of") return MotionKind::kOpticalFlow;
  if (s == "scene_flow" || s == "sf") return MotionKind::kSceneFlow;
  if (s == "embedding" || s == "emb") return MotionKind::kEmbedding;
  fail(ErrorCode::kInvalidArgument, "unknown motion kind '", s, "'");
}

inline int kind_channels(MotionKind k, int embedding_dim = kDefaultEmbeddingDim) {
  switch (k) {
    case MotionKind::kOpticalFlow: return 2;
    case MotionKind::kSceneFlow: return 6;
    case MotionKind::kEmbedding: return embedding_dim;
  }
  return 0;
}

struct ChannelRange {
  float min = 0.0f;
  float max = 0.0f;
};

// H*W*C, channels interleaved.
struct MotionField {
  MotionKind kind = MotionKind::kOpticalFlow;
  int height = 0;
  int width = 0;
  int channels = 2;
  std::vector<float> data;
  std::vector<ChannelRange> value_range;

  int pixels() const { return height * width; }
  float at(int p, int c) const { return data[static_cast<std::size_t>(p) * channels + c]; }

  void validate() const {
    check(kind != MotionKind::kEmbedding ? channels == kind_channels(kind) : channels > 0,
          ErrorCode::kInvalidArgument, "motion field: ", channels, " channels do not fit kind ", to_string(kind));
    check(data.size() == static_cast<std::size_t>(pixels()) * channels, ErrorCode::kShapeMismatch,
          "motion field: data size ", data.size(), " != ", height, "x", width, "x", channels);
    check(static_cast<int>(value_range.size()) == channels, ErrorCode::kInvalidArgument,
          "motion field: value_range needs one entry per channel");
    for (const auto& r : value_range)
      check(r.min <= r.max, ErrorCode::kInvalidArgument, "motion field: value_range min > max");
  }
};

inline std::vector<ChannelRange> observed_range(const std::vector<float>& data, int channels) {
  std::vector<ChannelRange> r(channels, {std::numeric_limits<float>::infinity(), -std::numeric_limits<float>::infinity()});
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto& c = r[i % channels];
    c.min = std::min(c.min, data[i]);
    c.max = std::max(c.max, data[i]);
  }
  for (auto& c : r)
    if (c.min > c.max) c = {0.0f, 0.0f};
  return r;
}

// Fixed seeded linear map from the per-pixel geometric quantities
// [flow(2), scene flow(6), 1/depth1, 1/depth2] to `dim` channels.
inline std::vector<float> embedding_matrix(int dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> m(static_cast<std::size_t>(dim) * 10);
  for (auto& x : m) x = static_cast<float>(normal(rng, 0.0, 1.0 / std::sqrt(10.0)));
  return m;
}

inline MotionField make_field(const scene::SceneSample& s, MotionKind kind, int embedding_dim = kDefaultEmbeddingDim,
                              std::uint64_t embedding_seed = 0x5EED) {
  MotionField f;
  f.kind = kind;
  f.height = s.height;
  f.width = s.width;
  f.channels = kind_channels(kind, embedding_dim);
  const int n = s.pixels();
  switch (kind) {
    case MotionKind::kOpticalFlow: f.data = s.flow; break;
    case MotionKind::kSceneFlow: f.data = s.scene_flow; break;
    case MotionKind::kEmbedding: {
      check(embedding_dim > 0, ErrorCode::kInvalidArgument, "embedding dim must be > 0");
      const auto m = embedding_matrix(embedding_dim, embedding_seed);
      f.data.assign(static_cast<std::size_t>(n) * embedding_dim, 0.0f);
      for (int p = 0; p < n; ++p) {
        float in[10];
        in[0] = s.flow[2 * p];
        in[1] = s.flow[2 * p + 1];
        for (int k = 0; k < 6; ++k) in[2 + k] = s.scene_flow[6 * p + k];
        in[8] = s.depth[0][p] > 0 ? 1.0f / s.depth[0][p] : 0.0f;
        in[9] = s.depth[1][p] > 0 ? 1.0f / s.depth[1][p] : 0.0f;
        for (int c = 0; c < embedding_dim; ++c) {
          float acc = 0;
          for (int k = 0; k < 10; ++k) acc += m[c * 10 + k] * in[k];
          f.data[static_cast<std::size_t>(p) * embedding_dim + c] = acc;
        }
      }
      break;
    }
  }
  f.value_range = observed_range(f.data, f.channels);
  return f;
}

struct NegativeAugConfig {
  double p_neg = 0.0;
  std::uint64_t rng_seed = 0;

  void validate() const {
    check(p_neg >= 0.0 && p_neg <= 1.0, ErrorCode::kInvalidArgument, "p_neg must lie in [0,1], got ", p_neg);
  }
};

struct NegativeResult {
  MotionField field;
  scene::TargetSet targets;
  bool is_negative = false;
};

// With probability p_neg the field becomes one constant per channel, drawn
// uniformly from that channel's value range, and the targets are emptied.
inline NegativeResult apply_negative(MotionField field, scene::TargetSet targets, double p_neg, Rng& rng) {
  check(p_neg >= 0.0 && p_neg <= 1.0, ErrorCode::kInvalidArgument, "p_neg must lie in [0,1], got ", p_neg);
  field.validate();
  // exactly one draw decides the branch, so p_neg = 0 never perturbs the field
  if (!(uniform01(rng) < p_neg)) return {std::move(field), std::move(targets), false};
  std::vector<float> value(field.channels);
  for (int c = 0; c < field.channels; ++c) {
    const auto& r = field.value_range[c];
    value[c] = static_cast<float>(uniform(rng, r.min, r.max));
  }
  for (std::size_t i = 0; i < field.data.size(); ++i) field.data[i] = value[i % field.channels];
  targets.clear();
  return {std::move(field), std::move(targets), true};
}

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> std;
  std::vector<ChannelRange> range;

  int channels() const { return static_cast<int>(mean.size()); }
};

// Accumulates per-channel moments over many fields.
class StatsAccumulator {
 public:
  explicit StatsAccumulator(int channels)
      : sum_(channels, 0.0), sq_(channels, 0.0), range_(channels, {std::numeric_limits<float>::infinity(),
                                                                  -std::numeric_limits<float>::infinity()}) {}

  void add(const MotionField& f) {
    check(f.channels == static_cast<int>(sum_.size()), ErrorCode::kShapeMismatch, "stats: channel mismatch");
    for (std::size_t i = 0; i < f.data.size(); ++i) {
      const int c = static_cast<int>(i % f.channels);
      sum_[c] += f.data[i];
      sq_[c] += static_cast<double>(f.data[i]) * f.data[i];
      range_[c].min = std::min(range_[c].min, f.data[i]);
      range_[c].max = std::max(range_[c].max, f.data[i]);
    }
    count_ += f.pixels();
  }

  ChannelStats finish() const {
    check(count_ > 0, ErrorCode::kInvalidArgument, "stats: no data");
    ChannelStats s;
    for (std::size_t c = 0; c < sum_.size(); ++c) {
      const double m = sum_[c] / count_;
      s.mean.push_back(m);
      s.std.push_back(std::sqrt(std::max(0.0, sq_[c] / count_ - m * m)));
      s.range.push_back(range_[c]);
    }
    return s;
  }

 private:
  std::vector<double> sum_, sq_;
  std::vector<ChannelRange> range_;
  long long count_ = 0;
};

inline std::vector<float> normalize_motion(const MotionField& f, const ChannelStats& st) {
  check(st.channels() == f.channels && static_cast<int>(st.std.size()) == f.channels, ErrorCode::kShapeMismatch,
        "normalize_motion: stats have ", st.channels(), " channels, field has ", f.channels);
  for (int c = 0; c < f.channels; ++c)
    check(st.std[c] > 0, ErrorCode::kZeroStd, "normalize_motion: channel ", c, " has zero std");
  std::vector<float> out(f.data.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int c = static_cast<int>(i % f.channels);
    out[i] = static_cast<float>((f.data[i] - st.mean[c]) / st.std[c]);
  }
  return out;
}

inline std::vector<float> denormalize_motion(const std::vector<float>& x, int channels, const ChannelStats& st) {
  check(st.channels() == channels, ErrorCode::kShapeMismatch, "denormalize_motion: channel mismatch");
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int c = static_cast<int>(i % channels);
    out[i] = static_cast<float>(x[i] * st.std[c] + st.mean[c]);
  }
  return out;
}

inline nlohmann::json stats_to_json(const ChannelStats& s) {
  nlohmann::json lo = nlohmann::json::array(), hi = nlohmann::json::array();
  for (const auto& r : s.range) {
    lo.push_back(r.min);
    hi.push_back(r.max);
  }
  return {{"mean", s.mean}, {"std", s.std}, {"min", lo}, {"max", hi}};
}

inline ChannelStats stats_from_json(const nlohmann::json& j) {
  ChannelStats s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.std = j.at("std").get<std::vector<double>>();
  const auto lo = j.at("min").get<std::vector<float>>(), hi = j.at("max").get<std::vector<float>>();
  check(lo.size() == s.mean.size() && hi.size() == s.mean.size() && s.std.size() == s.mean.size(),
        ErrorCode::kFormat, "stats: inconsistent channel counts");
  for (std::size_t c = 0; c < lo.size(); ++c) s.range.push_back({lo[c], hi[c]});
  return s;
}

struct DepthAlignment {
  double s = 1.0;
  double t = 0.0;
  std::vector<double> aligned;
  double residual = 0.0;  // root of the summed squared error over valid pixels
};

// Least-squares scale and shift mapping pred onto ref over valid pixels.
inline DepthAlignment align_depth(const std::vector<double>& pred, const std::vector<double>& ref,
                                  const std::vector<std::uint8_t>& valid) {
  check(pred.size() == ref.size() && pred.size() == valid.size(), ErrorCode::kShapeMismatch,
        "align_depth: size mismatch");
  // centred sums are better conditioned than the raw normal equations
  double n = 0, mp = 0, mr = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (valid[i]) {
      n += 1;
      mp += pred[i];
      mr += ref[i];
    }
  check(n >= 2, ErrorCode::kRankDeficient, "align_depth: fewer than 2 valid pixels");
  mp /= n;
  mr /= n;
  double spp = 0, spr = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (valid[i]) {
      spp += (pred[i] - mp) * (pred[i] - mp);
      spr += (pred[i] - mp) * (ref[i] - mr);
    }
  check(spp > 1e-12 * std::max(1.0, mp * mp) * n, ErrorCode::kRankDeficient,
        "align_depth: prediction is constant over the valid pixels");
  DepthAlignment a;
  a.s = spr / spp;
  a.t = mr - a.s * mp;
  a.aligned.resize(pred.size());
  double sse = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    a.aligned[i] = a.s * pred[i] + a.t;
    if (valid[i]) sse += (a.aligned[i] - ref[i]) * (a.aligned[i] - ref[i]);
  }
  a.residual = std::sqrt(sse);
  return a;
}

// Additive Gaussian noise, for estimated-motion experiments.
inline void add_noise(MotionField& f, double sigma, Rng& rng) {
  if (sigma <= 0) return;
  for (auto& v : f.data) v += static_cast<float>(normal(rng, 0.0, sigma));
}

}  // namespace mfuse::motion
