#pragma once

// Brute-force reference implementations used by the unit tests and the
// acceptance runner. They share no code with the library beyond its data types.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "motionfuse/core/random.hpp"
#include "motionfuse/eval/metrics.hpp"
#include "motionfuse/loss/hungarian.hpp"

namespace oracle {

using mfuse::eval::BinaryMask;
using mfuse::eval::DetectionSet;

inline double iou(const BinaryMask& a, const BinaryMask& b) {
  int i = 0, u = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    i += (a[k] && b[k]) ? 1 : 0;
    u += (a[k] || b[k]) ? 1 : 0;
  }
  return u == 0 ? 0.0 : static_cast<double>(i) / u;
}

// Minimum-cost assignment of min(rows, cols) pairs by enumerating every injection.
inline double min_assignment_cost(const std::vector<std::vector<double>>& c) {
  const int r = static_cast<int>(c.size());
  if (r == 0) return 0;
  const int k = static_cast<int>(c[0].size());
  const bool tr = r > k;
  const int a = tr ? k : r, b = tr ? r : k;
  auto at = [&](int i, int j) { return tr ? c[j][i] : c[i][j]; };
  std::vector<int> cols(b);
  std::iota(cols.begin(), cols.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  // every ordered choice of a of the b columns appears as a prefix of some permutation
  do {
    double s = 0;
    for (int i = 0; i < a; ++i) s += at(i, cols[i]);
    best = std::min(best, s);
  } while (std::next_permutation(cols.begin(), cols.end()));
  return best;
}

// Greedy confidence-ordered matching restated as an optimization: among all
// partial injections prediction -> ground truth with IoU >= t, take the one
// whose sequence of (IoU, -gt index) per prediction, in confidence order, is
// lexicographically largest (unmatched ranks below any match).
struct Match {
  std::vector<int> gt_of;  // per prediction in the given order, -1 = unmatched
  int tp = 0, fp = 0, fn = 0;
};

inline Match lexmax_match(const std::vector<std::vector<double>>& ious, int n_gt, double t) {
  const int np = static_cast<int>(ious.size());
  std::vector<int> cur(np, -1), best;
  std::vector<bool> used(n_gt, false);
  auto key_less = [&](const std::vector<int>& x, const std::vector<int>& y) {
    for (int p = 0; p < np; ++p) {
      const double kx = x[p] < 0 ? -1.0 : ious[p][x[p]], ky = y[p] < 0 ? -1.0 : ious[p][y[p]];
      if (kx != ky) return kx < ky;
      const int gx = x[p] < 0 ? n_gt : x[p], gy = y[p] < 0 ? n_gt : y[p];
      if (gx != gy) return gx > gy;
    }
    return false;
  };
  std::function<void(int)> rec = [&](int p) {
    if (p == np) {
      if (best.empty() && np > 0) best = cur;
      else if (np > 0 && key_less(best, cur)) best = cur;
      return;
    }
    cur[p] = -1;
    rec(p + 1);
    for (int g = 0; g < n_gt; ++g)
      if (!used[g] && ious[p][g] >= t) {
        used[g] = true;
        cur[p] = g;
        rec(p + 1);
        used[g] = false;
        cur[p] = -1;
      }
  };
  rec(0);
  Match m;
  m.gt_of = np ? best : std::vector<int>{};
  for (int g : m.gt_of) (g >= 0 ? m.tp : m.fp) += 1;
  m.fn = n_gt - m.tp;
  return m;
}

struct Pred {
  int frame;
  int index;
  double conf;
};

// Predictions of a frame with confidence >= c, in descending confidence.
inline std::vector<int> ranked(const mfuse::eval::Frame& f, double c) {
  std::vector<int> idx;
  for (int i = 0; i < static_cast<int>(f.preds.size()); ++i)
    if (f.preds[i].confidence >= c) idx.push_back(i);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return f.preds[a].confidence > f.preds[b].confidence; });
  return idx;
}

inline Match frame_match(const mfuse::eval::Frame& f, double iou_t, double conf_t, std::vector<int>* order = nullptr) {
  const auto idx = ranked(f, conf_t);
  std::vector<std::vector<double>> m;
  for (int i : idx) {
    std::vector<double> row;
    for (const auto& g : f.gts) row.push_back(iou(f.preds[i].mask, g));
    m.push_back(row);
  }
  if (order) *order = idx;
  return lexmax_match(m, static_cast<int>(f.gts.size()), iou_t);
}

// 101-point interpolated AP: for every recall level r the best precision over
// all cut-offs of the ranked list reaching recall r.
inline double ap_at(const DetectionSet& d, double t) {
  struct Item {
    double conf;
    bool tp;
  };
  std::vector<Item> items;
  int n_gt = 0;
  for (const auto& f : d.frames) {
    n_gt += static_cast<int>(f.gts.size());
    std::vector<int> order;
    const auto m = frame_match(f, t, -1.0, &order);
    for (std::size_t k = 0; k < order.size(); ++k) items.push_back({f.preds[order[k]].confidence, m.gt_of[k] >= 0});
  }
  std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.conf > b.conf; });
  double sum = 0;
  for (int k = 0; k <= 100; ++k) {
    const double r = k / 100.0;
    double best = 0;
    int tp = 0;
    for (std::size_t n = 0; n < items.size(); ++n) {
      tp += items[n].tp ? 1 : 0;
      const double rec = static_cast<double>(tp) / n_gt, prec = static_cast<double>(tp) / (n + 1);
      if (rec >= r) best = std::max(best, prec);
    }
    sum += best;
  }
  return sum / 101.0;
}

inline mfuse::eval::MetricReport report(const DetectionSet& d) {
  using namespace mfuse::eval;
  MetricReport r;
  int n_gt = 0;
  for (const auto& f : d.frames) n_gt += static_cast<int>(f.gts.size());
  if (n_gt > 0) {
    double s = 0;
    const double ts[10] = {0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95};
    for (int i = 0; i < 10; ++i) {
      const double a = ap_at(d, ts[i]);
      s += a;
      if (i == 0) r.ap50 = a;
      if (i == 5) r.ap75 = a;
    }
    r.ap = s / 10.0;
  }
  const std::vector<double> ious{0.01, 0.1, 0.3, 0.5, 0.75, 0.9, 0.95}, confs{0.3, 0.5, 0.7};
  double fp = 0, fn = 0;
  for (double it : ious)
    for (double ct : confs) {
      int tp = 0, f_p = 0, f_n = 0;
      for (const auto& f : d.frames) {
        const auto m = frame_match(f, it, ct);
        tp += m.tp;
        f_p += m.fp;
        f_n += m.fn;
      }
      r.pu += tp + f_p ? static_cast<double>(tp) / (tp + f_p) : 0.0;
      r.ru += tp + f_n ? static_cast<double>(tp) / (tp + f_n) : 0.0;
      fp += f_p;
      fn += f_n;
    }
  r.pu /= 21.0;
  r.ru /= 21.0;
  r.fu = r.pu + r.ru > 0 ? 2 * r.pu * r.ru / (r.pu + r.ru) : 0.0;
  r.fp_per_frame = fp / 21.0 / static_cast<double>(d.frames.size());
  r.fn_per_frame = fn / 21.0 / static_cast<double>(d.frames.size());

  double bg = 0, obj = 0;
  int nb = 0, no = 0;
  for (const auto& f : d.frames)
    for (double ct : confs) {
      int fg_n = 0, fg_hit = 0, bg_n = 0, bg_hit = 0;
      for (std::size_t px = 0; px < static_cast<std::size_t>(f.height) * f.width; ++px) {
        bool pf = false, gf = false;
        for (const auto& p : f.preds) pf = pf || (p.confidence >= ct && p.mask[px]);
        for (const auto& g : f.gts) gf = gf || g[px];
        if (pf) {
          ++fg_n;
          fg_hit += gf;
        } else {
          ++bg_n;
          bg_hit += !gf;
        }
      }
      if (fg_n) {
        obj += static_cast<double>(fg_hit) / fg_n;
        ++no;
      }
      if (bg_n) {
        bg += static_cast<double>(bg_hit) / bg_n;
        ++nb;
      }
    }
  r.bg = nb ? bg / nb : 0.0;
  r.obj = no ? obj / no : 0.0;
  r.frames = static_cast<int>(d.frames.size());
  r.gt_instances = n_gt;
  return r;
}

// Small random blob masks (union of 1-3 rectangles) on an h x w grid.
inline BinaryMask random_mask(mfuse::Rng& rng, int h, int w) {
  BinaryMask m(static_cast<std::size_t>(h) * w, 0);
  const int n = mfuse::uniform_int(rng, 1, 3);
  for (int k = 0; k < n; ++k) {
    const int x0 = mfuse::uniform_int(rng, 0, w - 1), y0 = mfuse::uniform_int(rng, 0, h - 1);
    const int x1 = std::min(w, x0 + mfuse::uniform_int(rng, 1, 4)), y1 = std::min(h, y0 + mfuse::uniform_int(rng, 1, 4));
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) m[static_cast<std::size_t>(y) * w + x] = 1;
  }
  return m;
}

// Frames with <= 4 predictions and <= 4 ground-truth masks. Some predictions
// are perturbed copies of ground truth so that every IoU range is exercised.
// Confidences are distinct multiples of 1/1000 so that ranking is unambiguous,
// with a few placed exactly on the confidence grid.
inline DetectionSet random_dataset(mfuse::Rng& rng, int frames = 3, int h = 8, int w = 8) {
  DetectionSet d;
  std::vector<int> used;
  auto conf = [&]() {
    for (;;) {
      int c = mfuse::bernoulli(rng, 0.15) ? std::vector<int>{300, 500, 700}[mfuse::uniform_int(rng, 0, 2)]
                                         : mfuse::uniform_int(rng, 0, 1000);
      if (std::find(used.begin(), used.end(), c) == used.end()) {
        used.push_back(c);
        return c / 1000.0;
      }
    }
  };
  for (int f = 0; f < frames; ++f) {
    mfuse::eval::Frame fr;
    fr.id = std::to_string(f);
    fr.height = h;
    fr.width = w;
    const int ng = mfuse::uniform_int(rng, 0, 4), np = mfuse::uniform_int(rng, 0, 4);
    for (int g = 0; g < ng; ++g) fr.gts.push_back(random_mask(rng, h, w));
    for (int p = 0; p < np; ++p) {
      BinaryMask m;
      if (ng > 0 && mfuse::bernoulli(rng, 0.6)) {
        m = fr.gts[mfuse::uniform_int(rng, 0, ng - 1)];
        for (auto& v : m)
          if (mfuse::bernoulli(rng, 0.1)) v ^= 1;
      } else {
        m = random_mask(rng, h, w);
      }
      fr.preds.push_back({m, conf()});
    }
    d.frames.push_back(std::move(fr));
  }
  return d;
}

}  // namespace oracle
