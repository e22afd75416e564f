#pragma once

#include <cmath>
#include <vector>

#include "motionfuse/core/loss_ops.hpp"
#include "motionfuse/fusion/decoder.hpp"
#include "motionfuse/loss/hungarian.hpp"
#include "motionfuse/loss/points.hpp"
#include "motionfuse/scene/targets.hpp"

namespace mfuse::loss {

using fusion::Prediction;
using scene::TargetSet;

struct LossWeights {
  double ce = 5.0;
  double dice = 5.0;
  double cls = 2.0;
  double noobj = 0.1;

  void validate() const {
    check(ce >= 0 && dice >= 0 && cls >= 0 && noobj >= 0, ErrorCode::kInvalidSpec, "loss weights must be >= 0");
  }
  LossWeights scaled(double c) const { return {ce * c, dice * c, cls * c, noobj * c}; }
};

// Weighted contributions, summed over prediction sets.
struct LossBreakdown {
  double ce = 0, dice = 0, cls = 0, noobj = 0;
  double total() const { return ce + dice + cls + noobj; }
};

// Mean binary cross-entropy of logits against 0/1 labels.
inline double bce_points(const std::vector<double>& logits, const std::vector<double>& gt) {
  double s = 0;
  for (std::size_t k = 0; k < logits.size(); ++k) s += softplus(logits[k]) - logits[k] * gt[k];
  return s / static_cast<double>(logits.size());
}

inline double dice_points(const std::vector<double>& logits, const std::vector<double>& gt) {
  std::vector<double> p(logits.size());
  for (std::size_t k = 0; k < p.size(); ++k) p[k] = stable_sigmoid(logits[k]);
  return dice_loss(p, gt);
}

// Probability of the moving-object class per query.
template <class T>
std::vector<double> moving_probability(const Prediction<T>& p) {
  std::vector<double> out(p.n_queries());
  for (int i = 0; i < p.n_queries(); ++i) {
    const double a = p.class_logits.at(i, fusion::kMovingClass), b = p.class_logits.at(i, fusion::kNoObjectClass);
    out[i] = 1.0 / (1.0 + std::exp(b - a));
  }
  return out;
}

// Per-query sample points and what they read from the prediction and every target.
struct PointSamples {
  int k = 0;
  std::vector<std::vector<double>> coords;               // [query] -> 2K
  std::vector<std::vector<double>> logits;               // [query] -> K
  std::vector<std::vector<std::vector<double>>> gt;      // [query][target] -> K
};

template <class T>
PointSamples sample_for_matching(const Prediction<T>& p, const TargetSet& t, const PointConfig& pc, Rng& rng) {
  PointSamples s;
  s.k = pc.k;
  const std::size_t hw = static_cast<std::size_t>(p.height) * p.width;
  for (int i = 0; i < p.n_queries(); ++i) {
    const T* map = p.mask_logits.data() + i * hw;
    auto pts = sample_points(map, p.height, p.width, pc, rng);
    std::vector<double> lg(pc.k);
    for (int k = 0; k < pc.k; ++k) lg[k] = read_map(map, p.height, p.width, pts[2 * k], pts[2 * k + 1]);
    std::vector<std::vector<double>> g(t.size(), std::vector<double>(pc.k));
    for (int j = 0; j < t.size(); ++j)
      for (int k = 0; k < pc.k; ++k) g[j][k] = read_binary(t.masks[j], t.height, t.width, pts[2 * k], pts[2 * k + 1]);
    s.coords.push_back(std::move(pts));
    s.logits.push_back(std::move(lg));
    s.gt.push_back(std::move(g));
  }
  return s;
}

// cost(i, j) = -w_cls p_i(moving) + w_ce CE(i, j) + w_dice Dice(i, j) on query i's points.
template <class T>
CostMatrix matching_cost(const Prediction<T>& p, const PointSamples& s, int n_targets, const LossWeights& w) {
  CostMatrix c(p.n_queries(), n_targets);
  const auto prob = moving_probability(p);
  for (int i = 0; i < c.rows; ++i)
    for (int j = 0; j < c.cols; ++j)
      c(i, j) = -w.cls * prob[i] + w.ce * bce_points(s.logits[i], s.gt[i][j]) +
                w.dice * dice_points(s.logits[i], s.gt[i][j]);
  return c;
}

template <class T>
struct LossResult {
  Tensor<T> total;
  LossBreakdown terms;
  std::vector<MatchAssignment> matches;  // one per prediction set
};

// Loss of one prediction set against the targets, independently matched.
template <class T>
Tensor<T> set_loss(const Prediction<T>& p, const TargetSet& t, const LossWeights& w, const PointConfig& pc, Rng& rng,
                   LossBreakdown& terms, MatchAssignment& match) {
  const int nq = p.n_queries();
  match = {};
  std::vector<int> labels(nq, fusion::kNoObjectClass);
  std::vector<T> cw(nq, static_cast<T>(w.noobj));
  std::vector<Tensor<T>> parts;
  if (!t.empty()) {
    check(t.height > 0 && t.width > 0, ErrorCode::kShapeMismatch, "target masks have no size");
    const auto s = sample_for_matching(p, t, pc, rng);
    match = hungarian_match(matching_cost(p, s, t.size(), w));
    std::vector<int> rows;
    auto coords = std::make_shared<std::vector<double>>();
    std::vector<T> gt;
    for (auto [i, j] : match.pairs) {
      labels[i] = fusion::kMovingClass;
      cw[i] = static_cast<T>(w.cls);
      rows.push_back(i);
      coords->insert(coords->end(), s.coords[i].begin(), s.coords[i].end());
      for (double g : s.gt[i][j]) gt.push_back(static_cast<T>(g));
    }
    const auto pts = point_sample(p.mask_logits, p.height, p.width, rows, coords, pc.k);
    const auto ce = scale(sigmoid_bce(pts, gt), static_cast<T>(w.ce));
    const auto dice = scale(sigmoid_dice(pts, gt), static_cast<T>(w.dice));
    terms.ce += static_cast<double>(ce.item());
    terms.dice += static_cast<double>(dice.item());
    parts.push_back(ce);
    parts.push_back(dice);
  }
  const auto cls = weighted_cross_entropy(p.class_logits, labels, cw);
  // split the class term into its matched and no-object shares for logging
  {
    double matched = 0, unmatched = 0;
    for (int i = 0; i < nq; ++i) {
      const double a = p.class_logits.at(i, 0), b = p.class_logits.at(i, 1);
      const double mx = std::max(a, b), lse = mx + std::log(std::exp(a - mx) + std::exp(b - mx));
      const double ce_i = lse - (labels[i] == 0 ? a : b);
      (labels[i] == fusion::kMovingClass ? matched : unmatched) += static_cast<double>(cw[i]) * ce_i;
    }
    terms.cls += matched;
    terms.noobj += unmatched;
  }
  parts.push_back(cls);
  return add_scalars(parts);
}

// Sum over every prediction set (auxiliary and final) of the set loss.
template <class T>
LossResult<T> total_loss(const std::vector<Prediction<T>>& preds, const TargetSet& t, const LossWeights& w,
                         const PointConfig& pc, Rng& rng) {
  check(!preds.empty(), ErrorCode::kInvalidArgument, "total_loss needs at least one prediction set");
  w.validate();
  LossResult<T> r;
  std::vector<Tensor<T>> sets;
  for (const auto& p : preds) {
    r.matches.emplace_back();
    sets.push_back(set_loss(p, t, w, pc, rng, r.terms, r.matches.back()));
  }
  r.total = add_scalars(sets);
  check(std::isfinite(static_cast<double>(r.total.item())), ErrorCode::kNonFinite, "loss is not finite");
  return r;
}

}  // namespace mfuse::loss
