#pragma once

#include <string>
#include <vector>

#include "motionfuse/eval/metrics.hpp"
#include "motionfuse/eval/predictions.hpp"
#include "motionfuse/fusion/model.hpp"
#include "motionfuse/train/data.hpp"

namespace mfuse::eval {

// Sample i is drawn from the stream mix_seed(seed, i).
inline std::vector<scene::SceneSample> draw_samples(const scene::DatasetMix& mix, int n, std::uint64_t seed) {
  std::vector<scene::SceneSample> out;
  for (int i = 0; i < n; ++i) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    out.push_back(scene::sample_mix(mix, rng));
  }
  return out;
}

// Detections of the final decoder layer against the moving instances.
template <class T>
Frame predict_frame(const fusion::FusionModel<T>& model, const scene::SceneSample& s, train::ExampleSpec spec,
                    const std::string& id) {
  NoGradGuard no_grad;
  spec.p_neg = 0;
  spec.objective = train::Objective::kMoving;
  Rng rng(0);
  const auto ex = train::make_example<T>(s, spec, rng);
  const auto out = model.forward(ex.input);
  Frame f;
  f.id = id;
  f.height = s.height;
  f.width = s.width;
  f.preds = extract_detections(out.fused.back(), s.height, s.width);
  f.gts = ex.targets.masks;
  return f;
}

template <class T>
DetectionSet predict_set(const fusion::FusionModel<T>& model, const std::vector<scene::SceneSample>& samples,
                         const train::ExampleSpec& spec) {
  DetectionSet d;
  for (std::size_t i = 0; i < samples.size(); ++i) d.frames.push_back(predict_frame(model, samples[i], spec, std::to_string(i)));
  return d;
}

// Keeps frames (and their ground truth) carrying tag `t`.
inline DetectionSet subset(const DetectionSet& d, const std::vector<scene::SceneSample>& samples, scene::Tag t) {
  check(d.frames.size() == samples.size(), ErrorCode::kShapeMismatch, "subset: frame/sample count mismatch");
  DetectionSet o;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].tags.count(t)) o.frames.push_back(d.frames[i]);
  return o;
}

}  // namespace mfuse::eval
