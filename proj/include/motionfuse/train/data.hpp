#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "motionfuse/fusion/model.hpp"
#include "motionfuse/motion/motion.hpp"
#include "motionfuse/scene/generator.hpp"
#include "motionfuse/scene/targets.hpp"

namespace mfuse::train {

// What a model is asked to segment.
enum class Objective { kMovable, kMoving };

inline const char* to_string(Objective o) { return o == Objective::kMovable ? "movable" : "moving"; }

inline Objective parse_objective(const std::string& s) {
  if (s == "movable") return Objective::kMovable;
  if (s == "moving") return Objective::kMoving;
  fail(ErrorCode::kInvalidSpec, "unknown objective '", s, "'");
}

inline scene::TargetSet targets_for(const scene::SceneSample& s, Objective o) {
  return o == Objective::kMovable ? scene::movable_targets(s) : scene::moving_targets(s);
}

inline constexpr float kRgbMean = 0.5f;
inline constexpr float kRgbStd = 0.25f;

// HWC interleaved -> CHW tensor.
template <class T>
Tensor<T> chw_tensor(const std::vector<float>& hwc, int h, int w, int c) {
  check(hwc.size() == static_cast<std::size_t>(h) * w * c, ErrorCode::kShapeMismatch, "chw_tensor: ", hwc.size(),
        " values for ", h, "x", w, "x", c);
  std::vector<T> v(hwc.size());
  for (int p = 0; p < h * w; ++p)
    for (int k = 0; k < c; ++k) v[static_cast<std::size_t>(k) * h * w + p] = static_cast<T>(hwc[static_cast<std::size_t>(p) * c + k]);
  return Tensor<T>({c, h, w}, std::move(v));
}

// First frame, standardized.
template <class T>
Tensor<T> rgb_tensor(const scene::SceneSample& s) {
  std::vector<float> x(s.frames[0].size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = (s.frames[0][i] - kRgbMean) / kRgbStd;
  return chw_tensor<T>(x, s.height, s.width, 3);
}

template <class T>
Tensor<T> motion_tensor(const motion::MotionField& f, const motion::ChannelStats& st) {
  return chw_tensor<T>(motion::normalize_motion(f, st), f.height, f.width, f.channels);
}

struct MotionInput {
  motion::MotionKind kind = motion::MotionKind::kOpticalFlow;
  int embedding_dim = motion::kDefaultEmbeddingDim;

  int channels() const { return motion::kind_channels(kind, embedding_dim); }
  motion::MotionField field(const scene::SceneSample& s) const { return motion::make_field(s, kind, embedding_dim); }
};

// Per-channel moments of the motion input over `n` samples of a mix. A
// channel that never varies gets std 1 so that normalization stays defined.
inline motion::ChannelStats estimate_stats(const scene::DatasetMix& mix, const MotionInput& mi, int n,
                                           std::uint64_t seed) {
  check(n > 0, ErrorCode::kInvalidArgument, "estimate_stats needs n > 0");
  motion::StatsAccumulator acc(mi.channels());
  for (int i = 0; i < n; ++i) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    acc.add(mi.field(scene::sample_mix(mix, rng)));
  }
  auto st = acc.finish();
  for (auto& s : st.std)
    if (!(s > 1e-6)) s = 1.0;
  return st;
}

template <class T>
struct Example {
  fusion::ModelInput<T> input;
  scene::TargetSet targets;
  bool negative = false;
};

struct ExampleSpec {
  bool rgb = true;
  bool motion = false;
  MotionInput motion_input;
  motion::ChannelStats stats;
  Objective objective = Objective::kMoving;
  double p_neg = 0.0;
};

// Model input and targets of one (already augmented) sample. Negative
// augmentation needs a motion input and replaces it by a constant field with
// an empty target set.
template <class T>
Example<T> make_example(const scene::SceneSample& s, const ExampleSpec& spec, Rng& rng) {
  Example<T> e;
  e.targets = targets_for(s, spec.objective);
  if (spec.rgb) e.input.rgb = rgb_tensor<T>(s);
  if (spec.motion) {
    auto r = motion::apply_negative(spec.motion_input.field(s), std::move(e.targets), spec.p_neg, rng);
    e.input.motion = motion_tensor<T>(r.field, spec.stats);
    e.targets = std::move(r.targets);
    e.negative = r.is_negative;
  }
  return e;
}

}  // namespace mfuse::train
