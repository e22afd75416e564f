#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "motionfuse/loss/criterion.hpp"
#include "motionfuse/scene/serialize.hpp"
#include "motionfuse/train/augment.hpp"
#include "motionfuse/train/optimizer.hpp"

namespace mfuse::train {

// One training phase.
struct TrainConfig {
  OptimConfig optim;
  int epochs = 30;
  int drop_epoch = 8;
  bool repeat_drop = true;  // drop every drop_epoch epochs rather than once
  int samples_per_epoch = 500;
  int batch_size = 8;
  double p_neg = 0.0;
  scene::DatasetMix mix;
  std::uint64_t seed = 0;
  loss::LossWeights loss;
  loss::PointConfig points;
  AugmentConfig augment;
  int max_steps = 0;        // > 0 stops the phase early
  int stats_samples = 64;   // samples used for motion normalization statistics

  TrainConfig() { mix.sources.push_back({}); }

  int steps_per_epoch() const { return (samples_per_epoch + batch_size - 1) / batch_size; }
  long long total_steps() const {
    const long long n = static_cast<long long>(epochs) * steps_per_epoch();
    return max_steps > 0 ? std::min<long long>(n, max_steps) : n;
  }
  int epoch_of(long long step) const { return static_cast<int>(step / steps_per_epoch()); }
  double lr_at(long long step) const { return scheduled_lr(optim.lr, epoch_of(step), drop_epoch, repeat_drop); }

  void validate() const {
    optim.validate();
    check(epochs >= 1 && samples_per_epoch >= 1 && batch_size >= 1, ErrorCode::kInvalidSpec,
          "epochs, samples_per_epoch and batch_size must be >= 1");
    check(p_neg >= 0 && p_neg <= 1, ErrorCode::kInvalidSpec, "p_neg must lie in [0,1], got ", p_neg);
    check(max_steps >= 0 && stats_samples >= 1, ErrorCode::kInvalidSpec, "max_steps/stats_samples out of range");
    mix.validate();
    loss.validate();
    points.validate();
    augment.validate();
  }

  // Single-modality pretraining at desk scale: 30 epochs of 500 samples, lr / 10 every 8 epochs.
  static TrainConfig pretrain() { return TrainConfig{}; }

  // Fusion finetuning: 10 epochs, lr / 10 once after 8, 30% negatives.
  static TrainConfig finetune() {
    TrainConfig c;
    c.epochs = 10;
    c.drop_epoch = 8;
    c.repeat_drop = false;
    c.p_neg = 0.3;
    return c;
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"lr", c.optim.lr},
          {"weight_decay", c.optim.weight_decay},
          {"backbone_lr_mult", c.optim.backbone_lr_mult},
          {"clip_norm", c.optim.clip_norm},
          {"beta1", c.optim.beta1},
          {"beta2", c.optim.beta2},
          {"eps", c.optim.eps},
          {"epochs", c.epochs},
          {"drop_epoch", c.drop_epoch},
          {"repeat_drop", c.repeat_drop},
          {"samples_per_epoch", c.samples_per_epoch},
          {"batch_size", c.batch_size},
          {"p_neg", c.p_neg},
          {"mix", scene::mix_to_json(c.mix)},
          {"seed", c.seed},
          {"loss_weights", {{"ce", c.loss.ce}, {"dice", c.loss.dice}, {"cls", c.loss.cls}, {"noobj", c.loss.noobj}}},
          {"points",
           {{"k", c.points.k}, {"oversample", c.points.oversample}, {"importance", c.points.importance}}},
          {"augment", to_json(c.augment)},
          {"max_steps", c.max_steps},
          {"stats_samples", c.stats_samples}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  check(j.is_object(), ErrorCode::kInvalidSpec, "train config must be a JSON object");
  for (auto& [k, v] : j.items()) {
    try {
      if (k == "lr") c.optim.lr = v.get<double>();
      else if (k == "weight_decay") c.optim.weight_decay = v.get<double>();
      else if (k == "backbone_lr_mult") c.optim.backbone_lr_mult = v.get<double>();
      else if (k == "clip_norm") c.optim.clip_norm = v.get<double>();
      else if (k == "beta1") c.optim.beta1 = v.get<double>();
      else if (k == "beta2") c.optim.beta2 = v.get<double>();
      else if (k == "eps") c.optim.eps = v.get<double>();
      else if (k == "epochs") c.epochs = v.get<int>();
      else if (k == "drop_epoch") c.drop_epoch = v.get<int>();
      else if (k == "repeat_drop") c.repeat_drop = v.get<bool>();
      else if (k == "samples_per_epoch") c.samples_per_epoch = v.get<int>();
      else if (k == "batch_size") c.batch_size = v.get<int>();
      else if (k == "p_neg") c.p_neg = v.get<double>();
      else if (k == "mix") c.mix = scene::mix_from_json(v);
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "loss_weights") {
        c.loss.ce = v.value("ce", c.loss.ce);
        c.loss.dice = v.value("dice", c.loss.dice);
        c.loss.cls = v.value("cls", c.loss.cls);
        c.loss.noobj = v.value("noobj", c.loss.noobj);
      } else if (k == "points") {
        c.points.k = v.value("k", c.points.k);
        c.points.oversample = v.value("oversample", c.points.oversample);
        c.points.importance = v.value("importance", c.points.importance);
      } else if (k == "augment") c.augment = augment_config_from_json(v, c.augment);
      else if (k == "max_steps") c.max_steps = v.get<int>();
      else if (k == "stats_samples") c.stats_samples = v.get<int>();
      else fail(ErrorCode::kInvalidSpec, "unknown train config key '", k, "'");
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kInvalidSpec, "train config key '", k, "': ", e.what());
    }
  }
  c.validate();
  return c;
}

}  // namespace mfuse::train
