#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "motionfuse/core/random.hpp"
#include "motionfuse/core/spatial_ops.hpp"

namespace mfuse::loss {

struct PointConfig {
  int k = 12544;
  double oversample = 3.0;
  double importance = 0.75;

  void validate() const {
    check(k >= 1, ErrorCode::kInvalidSpec, "point count K must be >= 1");
    check(oversample >= 1.0, ErrorCode::kInvalidSpec, "oversample ratio must be >= 1");
    check(importance >= 0.0 && importance <= 1.0, ErrorCode::kInvalidSpec, "importance ratio must lie in [0, 1]");
  }
};

// Bilinear read of an h x w logit map at normalized (x, y).
template <class T>
double read_map(const T* map, int h, int w, double x, double y) {
  const auto t = bilinear_tap(h, w, x, y);
  double v = 0;
  for (int k = 0; k < 4; ++k) v += t.w[k] * static_cast<double>(map[t.idx[k]]);
  return v;
}

// K points in [0,1]^2 as (x, y) pairs: round(importance*K) of them are the
// most uncertain (smallest |logit|) of round(oversample*K) uniform proposals,
// the rest fresh uniform draws.
template <class T>
std::vector<double> sample_points(const T* logits, int h, int w, const PointConfig& pc, Rng& rng) {
  pc.validate();
  const int n_prop = std::max(pc.k, static_cast<int>(std::lround(pc.oversample * pc.k)));
  const int n_imp = std::min(pc.k, static_cast<int>(std::lround(pc.importance * pc.k)));
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(pc.k) * 2);
  if (n_imp > 0) {
    std::vector<double> prop(static_cast<std::size_t>(n_prop) * 2), unc(n_prop);
    for (int i = 0; i < n_prop; ++i) {
      prop[2 * i] = uniform01(rng);
      prop[2 * i + 1] = uniform01(rng);
      unc[i] = std::abs(read_map(logits, h, w, prop[2 * i], prop[2 * i + 1]));
    }
    std::vector<int> idx(n_prop);
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + n_imp, idx.end(),
                      [&](int a, int b) { return unc[a] != unc[b] ? unc[a] < unc[b] : a < b; });
    for (int i = 0; i < n_imp; ++i) {
      out.push_back(prop[2 * idx[i]]);
      out.push_back(prop[2 * idx[i] + 1]);
    }
  }
  for (int i = n_imp; i < pc.k; ++i) {
    out.push_back(uniform01(rng));
    out.push_back(uniform01(rng));
  }
  return out;
}

// Nearest-pixel read of a full-resolution binary mask.
inline double read_binary(const std::vector<std::uint8_t>& m, int h, int w, double x, double y) {
  const int px = std::clamp(static_cast<int>(std::floor(x * w)), 0, w - 1);
  const int py = std::clamp(static_cast<int>(std::floor(y * h)), 0, h - 1);
  return m[static_cast<std::size_t>(py) * w + px] ? 1.0 : 0.0;
}

}  // namespace mfuse::loss
