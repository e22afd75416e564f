#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "motionfuse/fusion/checkpoint.hpp"
#include "motionfuse/fusion/model.hpp"
#include "motionfuse/loss/criterion.hpp"
#include "motionfuse/train/augment.hpp"
#include "motionfuse/train/config.hpp"
#include "motionfuse/train/data.hpp"
#include "motionfuse/train/optimizer.hpp"

namespace mfuse::train {

struct StepStats {
  long long step = 0;
  int epoch = 0;
  double lr = 0;
  double loss = 0;
  double grad_norm = 0;
  loss::LossBreakdown terms;
  int negatives = 0;
};

inline nlohmann::json to_json(const StepStats& s) {
  return {{"step", s.step},           {"epoch", s.epoch},          {"lr", s.lr},
          {"loss", s.loss},           {"loss_ce", s.terms.ce},     {"loss_dice", s.terms.dice},
          {"loss_cls", s.terms.cls},  {"loss_noobj", s.terms.noobj}, {"grad_norm", s.grad_norm},
          {"negatives", s.negatives}};
}

inline nlohmann::json to_json(const MotionInput& m) {
  return {{"kind", motion::to_string(m.kind)}, {"embedding_dim", m.embedding_dim}};
}

inline MotionInput motion_input_from_json(const nlohmann::json& j) {
  MotionInput m;
  m.kind = motion::parse_kind(j.at("kind").get<std::string>());
  m.embedding_dim = j.value("embedding_dim", m.embedding_dim);
  return m;
}

// Everything needed to rebuild the data pipeline and the model of a run.
struct RunInfo {
  fusion::FusionConfig model;
  std::uint64_t model_seed = 0;
  ExampleSpec data;
  TrainConfig train;
  std::string phase;  // "pretrain" or "finetune"
};

inline nlohmann::json run_meta(const RunInfo& r) {
  nlohmann::json j = {{"format", "motionfuse"},
                      {"phase", r.phase},
                      {"model", fusion::to_json(r.model)},
                      {"model_seed", r.model_seed},
                      {"objective", to_string(r.data.objective)},
                      {"inputs", {{"rgb", r.data.rgb}, {"motion", r.data.motion}}},
                      {"train", to_json(r.train)}};
  if (r.data.motion) {
    j["motion"] = to_json(r.data.motion_input);
    j["stats"] = motion::stats_to_json(r.data.stats);
  }
  return j;
}

inline RunInfo run_info_from_meta(const nlohmann::json& j) {
  check(j.value("format", "") == "motionfuse", ErrorCode::kFormat, "checkpoint is not a motionfuse run");
  RunInfo r;
  try {
    r.phase = j.at("phase").get<std::string>();
    r.model = fusion::fusion_config_from_json(j.at("model"));
    r.model_seed = j.at("model_seed").get<std::uint64_t>();
    r.data.objective = parse_objective(j.at("objective").get<std::string>());
    r.data.rgb = j.at("inputs").at("rgb").get<bool>();
    r.data.motion = j.at("inputs").at("motion").get<bool>();
    if (r.data.motion) {
      r.data.motion_input = motion_input_from_json(j.at("motion"));
      r.data.stats = motion::stats_from_json(j.at("stats"));
    }
    r.train = train_config_from_json(j.at("train"));
    r.data.p_neg = r.train.p_neg;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, "checkpoint header: ", e.what());
  }
  return r;
}

template <class T>
fusion::FusionModel<T> load_model(const fusion::Checkpoint& c) {
  const auto info = run_info_from_meta(c.meta);
  fusion::FusionModel<T> m(info.model, info.model_seed);
  auto params = m.parameters();
  fusion::load_params(c, params);
  return m;
}

// Minibatch loop over freshly drawn samples. Sample b of step s is generated,
// augmented, and scored from the stream mix_seed(mix_seed(seed, s), b), so a
// run is a pure function of (parameters, optimizer state, step).
template <class T>
class Trainer {
 public:
  Trainer(fusion::FusionModel<T>& model, RunInfo info, std::function<bool(const std::string&)> trainable = {})
      : model_(model), info_(std::move(info)) {
    info_.train.validate();
    info_.data.p_neg = info_.train.p_neg;
    opt_ = AdamW<T>(model_.parameters(), info_.train.optim, trainable);
  }

  const RunInfo& info() const { return info_; }
  const AdamW<T>& optimizer() const { return opt_; }
  long long steps_done() const { return step_; }
  bool done() const { return step_ >= info_.train.total_steps(); }

  // One example's loss with the current parameters (no update). Used for
  // logging and reproducibility checks.
  loss::LossResult<T> example_loss(long long step, int b) const {
    Rng rng(mix_seed(mix_seed(info_.train.seed, static_cast<std::uint64_t>(step)), static_cast<std::uint64_t>(b)));
    auto s = scene::sample_mix(info_.train.mix, rng);
    s = augment(s, info_.train.augment, rng);
    const auto ex = make_example<T>(s, info_.data, rng);
    const auto out = model_.forward(ex.input);
    auto r = loss::total_loss(out.fused, ex.targets, info_.train.loss, info_.train.points, rng);
    last_negative_ = ex.negative;
    return r;
  }

  StepStats step() {
    const auto& tc = info_.train;
    StepStats st;
    st.step = step_;
    st.epoch = tc.epoch_of(step_);
    st.lr = tc.lr_at(step_);
    opt_.zero_grad();
    for (int b = 0; b < tc.batch_size; ++b) {
      loss::LossResult<T> r;
      try {
        r = example_loss(step_, b);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kNonFinite)
          fail(ErrorCode::kDivergence, "step ", step_, ", example ", b, ": ", e.what());
        throw;
      }
      scale(r.total, static_cast<T>(1.0 / tc.batch_size)).backward();
      st.loss += static_cast<double>(r.total.item()) / tc.batch_size;
      st.terms.ce += r.terms.ce / tc.batch_size;
      st.terms.dice += r.terms.dice / tc.batch_size;
      st.terms.cls += r.terms.cls / tc.batch_size;
      st.terms.noobj += r.terms.noobj / tc.batch_size;
      st.negatives += last_negative_ ? 1 : 0;
    }
    st.grad_norm = opt_.clip();
    check(std::isfinite(st.grad_norm), ErrorCode::kDivergence, "step ", step_, ": gradient norm is not finite");
    opt_.step(st.lr);
    opt_.zero_grad();
    ++step_;
    return st;
  }

  // Runs to the end of the phase, writing one JSON line per step to `log`.
  std::vector<StepStats> run(std::ostream* log = nullptr, const std::function<void(const StepStats&)>& on_step = {}) {
    std::vector<StepStats> hist;
    while (!done()) {
      hist.push_back(step());
      if (log) *log << to_json(hist.back()).dump() << '\n' << std::flush;
      if (on_step) on_step(hist.back());
    }
    return hist;
  }

  fusion::Checkpoint checkpoint() const {
    fusion::Checkpoint c;
    c.meta = run_meta(info_);
    c.meta["step"] = step_;
    fusion::append_params(c, model_.parameters());
    opt_.save(c);
    return c;
  }

  void resume(const fusion::Checkpoint& c) {
    auto params = model_.parameters();
    fusion::load_params(c, params);
    opt_.load(c);
    step_ = c.meta.at("step").get<long long>();
  }

 private:
  fusion::FusionModel<T>& model_;
  RunInfo info_;
  AdamW<T> opt_;
  long long step_ = 0;
  mutable bool last_negative_ = false;
};

template <class T>
struct RunResult {
  fusion::FusionModel<T> model;
  fusion::Checkpoint checkpoint;
  std::vector<StepStats> history;
};

inline ExampleSpec single_spec(fusion::Modality m, const MotionInput& mi, const TrainConfig& tc) {
  ExampleSpec spec;
  spec.rgb = m == fusion::Modality::kAppearance;
  spec.motion = !spec.rgb;
  spec.motion_input = mi;
  // appearance learns every movable body, motion only the moving ones
  spec.objective = spec.rgb ? Objective::kMovable : Objective::kMoving;
  spec.p_neg = tc.p_neg;
  if (spec.motion) spec.stats = estimate_stats(tc.mix, mi, tc.stats_samples, mix_seed(tc.seed, 0x57A75));
  return spec;
}

// One-stream model of modality m trained from scratch on tc.mix.
template <class T>
RunResult<T> pretrain_single(fusion::Modality m, const MotionInput& mi, fusion::FusionConfig fc, const TrainConfig& tc,
                             std::ostream* log = nullptr) {
  fc.mechanism = fusion::Mechanism::kSingle;
  fc.single_stream = m;
  if (m == fusion::Modality::kMotion) fc.motion_channels = mi.channels();
  RunInfo info{fc, tc.seed, single_spec(m, mi, tc), tc, "pretrain"};
  RunResult<T> r{fusion::FusionModel<T>(fc, tc.seed), {}, {}};
  Trainer<T> t(r.model, info);
  r.history = t.run(log);
  r.checkpoint = t.checkpoint();
  return r;
}

inline bool frozen_in_finetune(const std::string& name) {
  const std::string rgb = "stream.rgb.", head = "stream.rgb.decoder.class_head.";
  return name.compare(0, rgb.size(), rgb) == 0 && name.compare(0, head.size(), head) != 0;
}

// Two-stream model assembled from an appearance and a motion checkpoint. The
// appearance stream is frozen except for its (re-initialized) class head.
template <class T>
fusion::FusionModel<T> assemble_fusion(const fusion::Checkpoint& rgb, const fusion::Checkpoint& mot,
                                       fusion::FusionConfig fc, std::uint64_t seed, ExampleSpec& spec) {
  const auto ra = run_info_from_meta(rgb.meta), rm = run_info_from_meta(mot.meta);
  check(ra.model.mechanism == fusion::Mechanism::kSingle && ra.model.single_stream == fusion::Modality::kAppearance,
        ErrorCode::kCheckpointMismatch, "first checkpoint is not an appearance model");
  check(rm.model.mechanism == fusion::Mechanism::kSingle && rm.model.single_stream == fusion::Modality::kMotion,
        ErrorCode::kCheckpointMismatch, "second checkpoint is not a motion model");
  check(fc.mechanism != fusion::Mechanism::kSingle, ErrorCode::kInvalidSpec, "fusion needs a two-stream mechanism");
  auto arch = [](fusion::FusionConfig c) {
    c.mechanism = fusion::Mechanism::kSingle;
    c.single_stream = fusion::Modality::kAppearance;
    c.n_bottleneck = 0;
    c.share_positional = false;
    c.rgb_channels = c.motion_channels = 0;
    return fusion::to_json(c);
  };
  check(arch(ra.model) == arch(fc) && arch(rm.model) == arch(fc), ErrorCode::kCheckpointMismatch,
        "checkpoint architectures differ from the fusion config");
  fc.rgb_channels = ra.model.rgb_channels;
  fc.motion_channels = rm.model.motion_channels;
  fusion::FusionModel<T> m(fc, seed);
  auto params = m.parameters();
  fusion::load_params(rgb, params, "stream.rgb.");
  fusion::load_params(mot, params, "stream.motion.");
  Rng rng(mix_seed(seed, 0xC1A55));
  m.stream_of(fusion::Modality::kAppearance)->decoder.reset_class_head(rng);
  m.stream_of(fusion::Modality::kMotion)->decoder.reset_class_head(rng);
  spec = {};
  spec.rgb = spec.motion = true;
  spec.motion_input = rm.data.motion_input;
  spec.stats = rm.data.stats;
  spec.objective = Objective::kMoving;
  return m;
}

template <class T>
RunResult<T> finetune_fusion(const fusion::Checkpoint& rgb, const fusion::Checkpoint& mot,
                             const fusion::FusionConfig& fc, const TrainConfig& tc, std::ostream* log = nullptr) {
  ExampleSpec spec;
  RunResult<T> r{assemble_fusion<T>(rgb, mot, fc, tc.seed, spec), {}, {}};
  spec.p_neg = tc.p_neg;
  RunInfo info{r.model.config, tc.seed, spec, tc, "finetune"};
  Trainer<T> t(r.model, info, [](const std::string& n) { return !frozen_in_finetune(n); });
  r.history = t.run(log);
  r.checkpoint = t.checkpoint();
  return r;
}

}  // namespace mfuse::train
