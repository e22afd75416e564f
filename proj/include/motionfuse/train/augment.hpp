#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include <nlohmann/json.hpp>

#include "motionfuse/core/random.hpp"
#include "motionfuse/scene/types.hpp"

namespace mfuse::train {

inline constexpr int kMinCrop = 32;

// Random scaling, then cropping, then horizontal flipping, applied jointly to
// every per-pixel quantity of a sample.
struct AugmentConfig {
  bool enabled = true;
  double scale_min = 0.75;
  double scale_max = 1.25;
  double p_crop = 0.5;
  double crop_min = 0.6;  // crop side as a fraction of the scaled side
  double p_flip = 0.5;

  void validate() const {
    check(scale_min > 0 && scale_max >= scale_min, ErrorCode::kInvalidSpec, "augment scale range is invalid");
    check(crop_min > 0 && crop_min <= 1, ErrorCode::kInvalidSpec, "augment crop_min must lie in (0,1]");
    for (double p : {p_crop, p_flip})
      check(p >= 0 && p <= 1, ErrorCode::kInvalidSpec, "augment probability out of [0,1]");
  }
};

inline nlohmann::json to_json(const AugmentConfig& a) {
  return {{"enabled", a.enabled}, {"scale_min", a.scale_min}, {"scale_max", a.scale_max},
          {"p_crop", a.p_crop},   {"crop_min", a.crop_min},   {"p_flip", a.p_flip}};
}

inline AugmentConfig augment_config_from_json(const nlohmann::json& j, AugmentConfig a = {}) {
  check(j.is_object(), ErrorCode::kInvalidSpec, "augment config must be a JSON object");
  for (auto& [k, v] : j.items()) {
    if (k == "enabled") a.enabled = v.get<bool>();
    else if (k == "scale_min") a.scale_min = v.get<double>();
    else if (k == "scale_max") a.scale_max = v.get<double>();
    else if (k == "p_crop") a.p_crop = v.get<double>();
    else if (k == "crop_min") a.crop_min = v.get<double>();
    else if (k == "p_flip") a.p_flip = v.get<double>();
    else fail(ErrorCode::kInvalidSpec, "unknown augment key '", k, "'");
  }
  a.validate();
  return a;
}

namespace detail {

// Output pixel -> source pixel for every per-pixel array of a sample.
template <class Map>
scene::SceneSample remap(const scene::SceneSample& s, int h, int w, Map&& src_of) {
  scene::SceneSample o = s;
  o.height = h;
  o.width = w;
  const int n = h * w;
  auto take = [&](const auto& in, int ch) {
    std::decay_t<decltype(in)> out(static_cast<std::size_t>(n) * ch);
    for (int p = 0; p < n; ++p) {
      const int q = src_of(p % w, p / w);
      for (int c = 0; c < ch; ++c) out[static_cast<std::size_t>(p) * ch + c] = in[static_cast<std::size_t>(q) * ch + c];
    }
    return out;
  };
  for (int f = 0; f < 2; ++f) {
    o.frames[f] = take(s.frames[f], 3);
    o.depth[f] = take(s.depth[f], 1);
  }
  o.flow = take(s.flow, 2);
  o.scene_flow = take(s.scene_flow, 6);
  o.instance_mask = take(s.instance_mask, 1);
  o.valid = take(s.valid, 1);
  // the body list describes the unaugmented view only
  o.bodies.clear();
  return o;
}

// Drops labels of instances that no longer cover any pixel.
inline void prune_labels(scene::SceneSample& s) {
  std::set<int> present(s.instance_mask.begin(), s.instance_mask.end());
  for (auto* m : {&s.motion_labels, &s.movable})
    for (auto it = m->begin(); it != m->end();) it = present.count(it->first) ? std::next(it) : m->erase(it);
  for (auto it = s.class_names.begin(); it != s.class_names.end();)
    it = present.count(it->first) ? std::next(it) : s.class_names.erase(it);
}

}  // namespace detail

// Mirror about the vertical axis. Image flow (u, v) -> (-u, v). Scene flow is
// the world motion conjugated by the reflection S = diag(-1, 1, 1): rotation
// vector (wx, wy, wz) -> (wx, -wy, -wz), translation (tx, ty, tz) -> (-tx, ty, tz).
inline scene::SceneSample flip_horizontal(const scene::SceneSample& s) {
  const int w = s.width;
  auto o = detail::remap(s, s.height, w, [&](int x, int y) { return y * w + (w - 1 - x); });
  for (int p = 0; p < o.pixels(); ++p) {
    o.flow[2 * p] = -o.flow[2 * p];
    float* sf = &o.scene_flow[6 * static_cast<std::size_t>(p)];
    sf[1] = -sf[1];
    sf[2] = -sf[2];
    sf[3] = -sf[3];
  }
  auto& cam = o.camera;
  cam.principal.x() = (w - 1) - cam.principal.x();
  const scene::Mat3 S = scene::Vec3(-1, 1, 1).asDiagonal();
  cam.pose_delta.R = S * cam.pose_delta.R * S;
  cam.pose_delta.t = S * cam.pose_delta.t;
  return o;
}

// Nearest-neighbour resampling to h x w (RGB bilinear). Image flow scales with
// the image; depth and scene flow are metric and unchanged.
inline scene::SceneSample rescale(const scene::SceneSample& s, int h, int w) {
  check(h >= kMinCrop && w >= kMinCrop, ErrorCode::kCropTooSmall, "rescale to ", h, "x", w, " is below ", kMinCrop,
        "x", kMinCrop);
  const double sx = static_cast<double>(w) / s.width, sy = static_cast<double>(h) / s.height;
  auto src = [&](int x, double scale, int size) {
    return std::clamp(static_cast<int>(std::floor((x + 0.5) / scale)), 0, size - 1);
  };
  auto o = detail::remap(s, h, w, [&](int x, int y) { return src(y, sy, s.height) * s.width + src(x, sx, s.width); });
  for (int f = 0; f < 2; ++f)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double fx = std::clamp((x + 0.5) / sx - 0.5, 0.0, s.width - 1.0);
        const double fy = std::clamp((y + 0.5) / sy - 0.5, 0.0, s.height - 1.0);
        const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
        const int x1 = std::min(x0 + 1, s.width - 1), y1 = std::min(y0 + 1, s.height - 1);
        const double ax = fx - x0, ay = fy - y0;
        for (int c = 0; c < 3; ++c) {
          auto at = [&](int yy, int xx) { return s.frames[f][(static_cast<std::size_t>(yy) * s.width + xx) * 3 + c]; };
          o.frames[f][(static_cast<std::size_t>(y) * w + x) * 3 + c] = static_cast<float>(
              (1 - ay) * ((1 - ax) * at(y0, x0) + ax * at(y0, x1)) + ay * ((1 - ax) * at(y1, x0) + ax * at(y1, x1)));
        }
      }
  for (int p = 0; p < o.pixels(); ++p) {
    o.flow[2 * p] = static_cast<float>(o.flow[2 * p] * sx);
    o.flow[2 * p + 1] = static_cast<float>(o.flow[2 * p + 1] * sy);
  }
  detail::prune_labels(o);
  auto& cam = o.camera;
  cam.focal *= sx;
  cam.principal = {(cam.principal.x() + 0.5) * sx - 0.5, (cam.principal.y() + 0.5) * sy - 0.5};
  cam.height = h;
  cam.width = w;
  return o;
}

inline scene::SceneSample crop(const scene::SceneSample& s, int x0, int y0, int w, int h) {
  check(w >= kMinCrop && h >= kMinCrop, ErrorCode::kCropTooSmall, "crop ", w, "x", h, " is below ", kMinCrop, "x",
        kMinCrop);
  check(x0 >= 0 && y0 >= 0 && x0 + w <= s.width && y0 + h <= s.height, ErrorCode::kInvalidArgument, "crop window (",
        x0, ",", y0, ",", w, ",", h, ") leaves the ", s.width, "x", s.height, " image");
  auto o = detail::remap(s, h, w, [&](int x, int y) { return (y0 + y) * s.width + x0 + x; });
  detail::prune_labels(o);
  o.camera.principal -= scene::Vec2(x0, y0);
  o.camera.height = h;
  o.camera.width = w;
  return o;
}

inline scene::SceneSample augment(const scene::SceneSample& s, const AugmentConfig& a, Rng& rng) {
  a.validate();
  if (!a.enabled) return s;
  // drawn sizes are clamped to kMinCrop so that small images stay usable
  auto size = [](double v, int hi) { return std::clamp(static_cast<int>(std::lround(v)), std::min(kMinCrop, hi), hi); };
  const double sc = uniform(rng, a.scale_min, a.scale_max);
  auto o = rescale(s, std::max(kMinCrop, static_cast<int>(std::lround(s.height * sc))),
                   std::max(kMinCrop, static_cast<int>(std::lround(s.width * sc))));
  if (bernoulli(rng, a.p_crop)) {
    const int cw = size(o.width * uniform(rng, a.crop_min, 1.0), o.width);
    const int ch = size(o.height * uniform(rng, a.crop_min, 1.0), o.height);
    const int x0 = uniform_int(rng, 0, o.width - cw);
    const int y0 = uniform_int(rng, 0, o.height - ch);
    o = crop(o, x0, y0, cw, ch);
  }
  if (bernoulli(rng, a.p_flip)) o = flip_horizontal(o);
  return o;
}

}  // namespace mfuse::train
