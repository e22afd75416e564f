#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "motionfuse/fusion/checkpoint.hpp"
#include "motionfuse/nn/layers.hpp"

namespace mfuse::train {

struct OptimConfig {
  double lr = 1e-4;
  double weight_decay = 0.05;
  double backbone_lr_mult = 0.1;
  double clip_norm = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    check(lr > 0 && std::isfinite(lr), ErrorCode::kInvalidSpec, "lr must be > 0, got ", lr);
    check(weight_decay >= 0, ErrorCode::kInvalidSpec, "weight_decay must be >= 0");
    check(backbone_lr_mult >= 0, ErrorCode::kInvalidSpec, "backbone_lr_mult must be >= 0");
    check(clip_norm > 0, ErrorCode::kInvalidSpec, "clip_norm must be > 0");
    check(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && eps > 0, ErrorCode::kInvalidSpec,
          "adam betas must lie in [0,1) and eps > 0");
  }
};

inline bool is_backbone(const std::string& name) { return name.find(".backbone.") != std::string::npos; }

// Only weight matrices decay; norms, biases and embeddings do not.
inline bool decays(nn::ParamKind k) { return k == nn::ParamKind::kWeight; }

// Global 2-norm of the gradients; when it exceeds max_norm every gradient is
// scaled by max_norm / norm. Returns the norm before clipping.
template <class T>
double clip_grad_norm(std::vector<Tensor<T>>& params, double max_norm) {
  double sq = 0;
  for (auto& p : params)
    if (p.has_grad())
      for (T g : p.grad()) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double c = max_norm / norm;
    for (auto& p : params)
      if (p.has_grad())
        for (T& g : p.grad()) g = static_cast<T>(g * c);
  }
  return norm;
}

// Decoupled weight decay Adam over the trainable subset of a parameter list.
template <class T>
class AdamW {
 public:
  struct Slot {
    std::string name;
    Tensor<T> param;
    double lr_mult = 1.0;
    double weight_decay = 0.0;
    std::vector<double> m, v;
  };

  AdamW() = default;
  AdamW(const nn::ParamList<T>& params, const OptimConfig& cfg,
        const std::function<bool(const std::string&)>& trainable = {})
      : cfg_(cfg) {
    cfg_.validate();
    for (const auto& p : params) {
      const bool train = !trainable || trainable(p.name);
      auto t = p.tensor;
      t.set_requires_grad(train);
      if (!train) continue;
      Slot s{p.name, t, is_backbone(p.name) ? cfg_.backbone_lr_mult : 1.0, decays(p.kind) ? cfg_.weight_decay : 0.0,
             std::vector<double>(t.numel(), 0.0), std::vector<double>(t.numel(), 0.0)};
      slots_.push_back(std::move(s));
    }
  }

  const std::vector<Slot>& slots() const { return slots_; }
  const OptimConfig& config() const { return cfg_; }
  long long steps() const { return t_; }

  double lr_of(const std::string& name, double base_lr) const {
    for (const auto& s : slots_)
      if (s.name == name) return base_lr * s.lr_mult;
    fail(ErrorCode::kInvalidArgument, "parameter '", name, "' is not optimized");
  }

  void zero_grad() {
    for (auto& s : slots_) s.param.zero_grad();
  }

  double clip() {
    std::vector<Tensor<T>> ps;
    for (auto& s : slots_) ps.push_back(s.param);
    return clip_grad_norm(ps, cfg_.clip_norm);
  }

  // One update at base learning rate `lr`; parameters without a gradient still decay.
  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& s : slots_) {
      const double a = lr * s.lr_mult;
      auto p = s.param.mutable_values();
      const bool has = s.param.has_grad();
      const T* g = has ? s.param.grad().data() : nullptr;
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = has ? static_cast<double>(g[i]) : 0.0;
        s.m[i] = cfg_.beta1 * s.m[i] + (1 - cfg_.beta1) * gi;
        s.v[i] = cfg_.beta2 * s.v[i] + (1 - cfg_.beta2) * gi * gi;
        double x = static_cast<double>(p[i]) * (1.0 - a * s.weight_decay);
        x -= a * (s.m[i] / bc1) / (std::sqrt(s.v[i] / bc2) + cfg_.eps);
        p[i] = static_cast<T>(x);
      }
    }
  }

  // Moments are float64; each is stored as a float32 hi/lo pair under
  // "adam.{m,v}.<name>.{hi,lo}", which restores them to ~2^-48 relative.
  void save(fusion::Checkpoint& c) const {
    c.meta["optimizer"] = {{"steps", t_}};
    for (const auto& s : slots_) {
      for (int which = 0; which < 2; ++which) {
        const auto& src = which ? s.v : s.m;
        std::vector<float> hi(src.size()), lo(src.size());
        for (std::size_t i = 0; i < src.size(); ++i) {
          hi[i] = static_cast<float>(src[i]);
          lo[i] = static_cast<float>(src[i] - static_cast<double>(hi[i]));
        }
        const std::string key = std::string("adam.") + (which ? "v." : "m.") + s.name;
        c.entries.push_back({key + ".hi", s.param.shape(), std::move(hi)});
        c.entries.push_back({key + ".lo", s.param.shape(), std::move(lo)});
      }
    }
  }

  void load(const fusion::Checkpoint& c) {
    check(c.meta.contains("optimizer"), ErrorCode::kCheckpointMismatch, "checkpoint has no optimizer state");
    t_ = c.meta["optimizer"]["steps"].get<long long>();
    for (auto& s : slots_) {
      for (int which = 0; which < 2; ++which) {
        const std::string key = std::string("adam.") + (which ? "v." : "m.") + s.name;
        const auto* hi = c.find(key + ".hi");
        const auto* lo = c.find(key + ".lo");
        check(hi && lo && hi->data.size() == s.m.size() && lo->data.size() == s.m.size(),
              ErrorCode::kCheckpointMismatch, "checkpoint lacks optimizer state for '", s.name, "'");
        auto& dst = which ? s.v : s.m;
        for (std::size_t i = 0; i < dst.size(); ++i)
          dst[i] = static_cast<double>(hi->data[i]) + static_cast<double>(lo->data[i]);
      }
    }
  }

 private:
  OptimConfig cfg_;
  std::vector<Slot> slots_;
  long long t_ = 0;
};

// Step decay: lr * 0.1^k where k counts the drops passed by `epoch`. With
// `repeat` the drop recurs every drop_epoch epochs, otherwise it happens once.
inline double scheduled_lr(double lr, int epoch, int drop_epoch, bool repeat) {
  if (drop_epoch <= 0 || epoch < drop_epoch) return lr;
  const int k = repeat ? epoch / drop_epoch : 1;
  return lr * std::pow(0.1, k);
}

}  // namespace mfuse::train
