#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "motionfuse/core/error.hpp"

namespace mfuse::eval {

using BinaryMask = std::vector<std::uint8_t>;

struct Detection {
  BinaryMask mask;
  double confidence = 0;
};

struct Frame {
  std::string id;
  int height = 0;
  int width = 0;
  std::vector<Detection> preds;
  std::vector<BinaryMask> gts;
};

struct DetectionSet {
  std::vector<Frame> frames;

  void validate() const {
    for (const auto& f : frames) {
      const auto n = static_cast<std::size_t>(f.height) * f.width;
      check(f.height > 0 && f.width > 0, ErrorCode::kShapeMismatch, "frame '", f.id, "' has no size");
      for (const auto& d : f.preds) {
        check(d.mask.size() == n, ErrorCode::kShapeMismatch, "frame '", f.id, "': prediction mask size ",
              d.mask.size(), " != ", n);
        check(d.confidence >= 0 && d.confidence <= 1, ErrorCode::kInvalidArgument, "frame '", f.id,
              "': confidence ", d.confidence, " outside [0,1]");
      }
      for (const auto& g : f.gts)
        check(g.size() == n, ErrorCode::kShapeMismatch, "frame '", f.id, "': ground-truth mask size ", g.size(),
              " != ", n);
    }
  }
  int n_gt() const {
    int n = 0;
    for (const auto& f : frames) n += static_cast<int>(f.gts.size());
    return n;
  }
};

inline const std::vector<double>& iou_grid() {
  static const std::vector<double> g{0.01, 0.1, 0.3, 0.5, 0.75, 0.9, 0.95};
  return g;
}

inline const std::vector<double>& confidence_grid() {
  static const std::vector<double> g{0.3, 0.5, 0.7};
  return g;
}

// Literal values: 0.5 + 0.05 * i may round differently under FMA contraction
// and flip matches whose IoU lands exactly on a threshold.
inline const std::vector<double>& coco_iou_thresholds() {
  static const std::vector<double> t{0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95};
  return t;
}

inline double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  check(a.size() == b.size(), ErrorCode::kShapeMismatch, "mask_iou: sizes ", a.size(), " and ", b.size());
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += a[i] && b[i];
    uni += a[i] || b[i];
  }
  return uni ? static_cast<double>(inter) / uni : 0.0;
}

// ious[p][g] for predictions (rows) against ground truth (columns).
using IouMatrix = std::vector<std::vector<double>>;

struct MatchResult {
  std::vector<std::pair<int, int>> tp;  // (prediction, ground truth)
  std::vector<int> fp;
  std::vector<int> fn;
};

// Predictions are visited in the given order (confidence descending); each
// claims the unclaimed ground truth of highest IoU when that IoU >= iou_t.
// Ties go to the lower ground-truth index.
inline MatchResult match_greedy(const IouMatrix& ious, int n_gt, double iou_t) {
  check(iou_t > 0 && iou_t <= 1, ErrorCode::kInvalidArgument, "IoU threshold must lie in (0,1], got ", iou_t);
  MatchResult r;
  std::vector<bool> claimed(n_gt, false);
  for (int p = 0; p < static_cast<int>(ious.size()); ++p) {
    int best = -1;
    double best_iou = iou_t;
    for (int g = 0; g < n_gt; ++g)
      if (!claimed[g] && ious[p][g] >= best_iou && (best < 0 || ious[p][g] > best_iou)) {
        best = g;
        best_iou = ious[p][g];
      }
    if (best >= 0) {
      claimed[best] = true;
      r.tp.push_back({p, best});
    } else {
      r.fp.push_back(p);
    }
  }
  for (int g = 0; g < n_gt; ++g)
    if (!claimed[g]) r.fn.push_back(g);
  return r;
}

inline MatchResult match_detections(const std::vector<BinaryMask>& preds, const std::vector<BinaryMask>& gts,
                                    double iou_t) {
  IouMatrix m(preds.size(), std::vector<double>(gts.size()));
  for (std::size_t p = 0; p < preds.size(); ++p)
    for (std::size_t g = 0; g < gts.size(); ++g) m[p][g] = mask_iou(preds[p], gts[g]);
  return match_greedy(m, static_cast<int>(gts.size()), iou_t);
}

namespace detail {

// Per frame: prediction order by confidence (descending, stable) and the IoU
// matrix in that order.
struct FrameCache {
  std::vector<int> order;
  std::vector<double> conf;  // sorted
  IouMatrix ious;
  int n_gt = 0;
};

inline std::vector<FrameCache> cache(const DetectionSet& d) {
  d.validate();
  std::vector<FrameCache> out;
  for (const auto& f : d.frames) {
    FrameCache c;
    c.n_gt = static_cast<int>(f.gts.size());
    c.order.resize(f.preds.size());
    std::iota(c.order.begin(), c.order.end(), 0);
    std::stable_sort(c.order.begin(), c.order.end(),
                     [&](int a, int b) { return f.preds[a].confidence > f.preds[b].confidence; });
    for (int p : c.order) {
      c.conf.push_back(f.preds[p].confidence);
      std::vector<double> row(f.gts.size());
      for (std::size_t g = 0; g < f.gts.size(); ++g) row[g] = mask_iou(f.preds[p].mask, f.gts[g]);
      c.ious.push_back(std::move(row));
    }
    out.push_back(std::move(c));
  }
  return out;
}

// The leading rows whose confidence reaches conf_t.
inline IouMatrix above(const FrameCache& c, double conf_t) {
  std::size_t n = 0;
  while (n < c.conf.size() && c.conf[n] >= conf_t) ++n;
  return IouMatrix(c.ious.begin(), c.ious.begin() + static_cast<std::ptrdiff_t>(n));
}

struct Counts {
  long long tp = 0, fp = 0, fn = 0;
};

inline Counts count_cell(const std::vector<FrameCache>& fc, double iou_t, double conf_t) {
  Counts k;
  for (const auto& c : fc) {
    const auto r = match_greedy(above(c, conf_t), c.n_gt, iou_t);
    k.tp += static_cast<long long>(r.tp.size());
    k.fp += static_cast<long long>(r.fp.size());
    k.fn += static_cast<long long>(r.fn.size());
  }
  return k;
}

inline double ratio(long long a, long long b) { return b > 0 ? static_cast<double>(a) / b : 0.0; }

}  // namespace detail

struct ApResult {
  std::optional<double> ap, ap50, ap75;
};

// Area under the 101-point interpolated precision/recall curve at one IoU
// threshold, detections pooled over frames in confidence order.
inline double average_precision(const std::vector<detail::FrameCache>& fc, double iou_t) {
  struct Scored {
    double conf;
    std::size_t seq;
    bool tp;
  };
  std::vector<Scored> all;
  long long n_gt = 0;
  for (const auto& c : fc) {
    n_gt += c.n_gt;
    const auto r = match_greedy(c.ious, c.n_gt, iou_t);
    std::vector<bool> is_tp(c.ious.size(), false);
    for (auto [p, g] : r.tp) is_tp[p] = true;
    for (std::size_t p = 0; p < c.ious.size(); ++p) all.push_back({c.conf[p], all.size(), is_tp[p]});
  }
  check(n_gt > 0, ErrorCode::kInvalidArgument, "average precision needs ground truth");
  std::stable_sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) { return a.conf > b.conf; });
  std::vector<double> prec, rec;
  long long tp = 0, fp = 0;
  for (const auto& s : all) {
    (s.tp ? tp : fp) += 1;
    prec.push_back(static_cast<double>(tp) / (tp + fp));
    rec.push_back(static_cast<double>(tp) / n_gt);
  }
  for (int i = static_cast<int>(prec.size()) - 2; i >= 0; --i) prec[i] = std::max(prec[i], prec[i + 1]);
  double sum = 0;
  for (int k = 0; k <= 100; ++k) {
    const double r = k / 100.0;
    const auto it = std::lower_bound(rec.begin(), rec.end(), r);
    if (it != rec.end()) sum += prec[static_cast<std::size_t>(it - rec.begin())];
  }
  return sum / 101.0;
}

inline ApResult coco_ap(const DetectionSet& d) {
  check(!d.frames.empty(), ErrorCode::kInvalidArgument, "coco_ap needs at least one frame");
  const auto fc = detail::cache(d);
  ApResult r;
  if (d.n_gt() == 0) return r;
  const auto& ts = coco_iou_thresholds();
  double sum = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double a = average_precision(fc, ts[i]);
    sum += a;
    if (i == 0) r.ap50 = a;
    if (i == 5) r.ap75 = a;
  }
  r.ap = sum / static_cast<double>(ts.size());
  return r;
}

struct PrfResult {
  double pu = 0, ru = 0, fu = 0;
};

inline double f_score(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

// Instance precision and recall per (IoU, confidence) cell, averaged over the
// grid. Cells without predictions (or without ground truth) contribute 0.
inline PrfResult pu_ru_fu(const DetectionSet& d, const std::vector<double>& iou_set = iou_grid(),
                          const std::vector<double>& conf_set = confidence_grid()) {
  check(!iou_set.empty() && !conf_set.empty(), ErrorCode::kInvalidArgument, "pu_ru_fu needs non-empty grids");
  const auto fc = detail::cache(d);
  PrfResult r;
  for (double it : iou_set)
    for (double ct : conf_set) {
      const auto k = detail::count_cell(fc, it, ct);
      r.pu += detail::ratio(k.tp, k.tp + k.fp);
      r.ru += detail::ratio(k.tp, k.tp + k.fn);
    }
  const double n = static_cast<double>(iou_set.size() * conf_set.size());
  r.pu /= n;
  r.ru /= n;
  r.fu = f_score(r.pu, r.ru);
  return r;
}

struct FalseCounts {
  double fp_per_frame = 0, fn_per_frame = 0;
};

inline FalseCounts fp_fn(const DetectionSet& d, const std::vector<double>& iou_set = iou_grid(),
                         const std::vector<double>& conf_set = confidence_grid()) {
  check(!d.frames.empty(), ErrorCode::kInvalidArgument, "fp_fn needs at least one frame");
  check(!iou_set.empty() && !conf_set.empty(), ErrorCode::kInvalidArgument, "fp_fn needs non-empty grids");
  const auto fc = detail::cache(d);
  double fp = 0, fn = 0;
  for (double it : iou_set)
    for (double ct : conf_set) {
      const auto k = detail::count_cell(fc, it, ct);
      fp += static_cast<double>(k.fp);
      fn += static_cast<double>(k.fn);
    }
  const double cells = static_cast<double>(iou_set.size() * conf_set.size());
  const double frames = static_cast<double>(d.frames.size());
  return {fp / cells / frames, fn / cells / frames};
}

struct BgObj {
  double bg = 0, obj = 0;
};

// Pixel precision of the collapsed foreground (obj) and background (bg) over
// frames and confidence thresholds; (frame, threshold) pairs with an empty
// denominator are left out of the respective average.
inline BgObj bg_obj_precision(const DetectionSet& d, const std::vector<double>& conf_set = confidence_grid()) {
  check(!d.frames.empty(), ErrorCode::kInvalidArgument, "bg_obj_precision needs at least one frame");
  d.validate();
  double bg = 0, obj = 0;
  int nbg = 0, nobj = 0;
  for (const auto& f : d.frames) {
    const std::size_t n = static_cast<std::size_t>(f.height) * f.width;
    BinaryMask gt(n, 0);
    for (const auto& g : f.gts)
      for (std::size_t i = 0; i < n; ++i) gt[i] |= g[i];
    for (double ct : conf_set) {
      BinaryMask fg(n, 0);
      for (const auto& p : f.preds)
        if (p.confidence >= ct)
          for (std::size_t i = 0; i < n; ++i) fg[i] |= p.mask[i];
      long long f_all = 0, f_hit = 0, b_all = 0, b_hit = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (fg[i]) {
          ++f_all;
          f_hit += gt[i] ? 1 : 0;
        } else {
          ++b_all;
          b_hit += gt[i] ? 0 : 1;
        }
      }
      if (f_all) {
        obj += static_cast<double>(f_hit) / f_all;
        ++nobj;
      }
      if (b_all) {
        bg += static_cast<double>(b_hit) / b_all;
        ++nbg;
      }
    }
  }
  return {nbg ? bg / nbg : 0.0, nobj ? obj / nobj : 0.0};
}

struct MetricReport {
  std::optional<double> ap, ap50, ap75;
  double bg = 0, obj = 0;
  double pu = 0, ru = 0, fu = 0;
  double fp_per_frame = 0, fn_per_frame = 0;
  int frames = 0;
  int gt_instances = 0;
};

inline MetricReport evaluate(const DetectionSet& d) {
  MetricReport r;
  const auto ap = coco_ap(d);
  r.ap = ap.ap;
  r.ap50 = ap.ap50;
  r.ap75 = ap.ap75;
  const auto bo = bg_obj_precision(d);
  r.bg = bo.bg;
  r.obj = bo.obj;
  const auto prf = pu_ru_fu(d);
  r.pu = prf.pu;
  r.ru = prf.ru;
  r.fu = prf.fu;
  const auto ff = fp_fn(d);
  r.fp_per_frame = ff.fp_per_frame;
  r.fn_per_frame = ff.fn_per_frame;
  r.frames = static_cast<int>(d.frames.size());
  r.gt_instances = d.n_gt();
  return r;
}

inline nlohmann::json to_json(const MetricReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"AP", opt(r.ap)},         {"AP50", opt(r.ap50)}, {"AP75", opt(r.ap75)},
          {"bg", r.bg},              {"obj", r.obj},        {"Pu", r.pu},
          {"Ru", r.ru},              {"Fu", r.fu},          {"FP_per_frame", r.fp_per_frame},
          {"FN_per_frame", r.fn_per_frame}, {"frames", r.frames}, {"gt_instances", r.gt_instances}};
}

}  // namespace mfuse::eval
