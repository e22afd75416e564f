#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

#include "motionfuse/core/random.hpp"
#include "motionfuse/scene/types.hpp"

namespace mfuse::scene {

using Rgb = std::array<double, 3>;

inline double lattice_value(std::int64_t i, std::int64_t j, std::uint64_t seed) {
  std::uint64_t h = mix_seed(seed, static_cast<std::uint64_t>(i) * 0x9E3779B97F4A7C15ULL ^
                                       static_cast<std::uint64_t>(j) * 0xC2B2AE3D27D4EB4FULL);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// Smoothly interpolated lattice noise in [0,1].
inline double value_noise(double x, double y, std::uint64_t seed) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto i = static_cast<std::int64_t>(fx), j = static_cast<std::int64_t>(fy);
  double tx = x - fx, ty = y - fy;
  tx = tx * tx * (3 - 2 * tx);
  ty = ty * ty * (3 - 2 * ty);
  const double a = lattice_value(i, j, seed), b = lattice_value(i + 1, j, seed);
  const double c = lattice_value(i, j + 1, seed), d = lattice_value(i + 1, j + 1, seed);
  return (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
}

inline double fractal_noise(double x, double y, std::uint64_t seed) {
  return 0.65 * value_noise(x, y, seed) + 0.35 * value_noise(2.1 * x + 17.3, 2.1 * y - 5.1, seed ^ 0xABCDEFULL);
}

inline Rgb hsv_to_rgb(double h, double s, double v) {
  h = std::fmod(h, 360.0);
  if (h < 0) h += 360.0;
  const double c = v * s, x = c * (1 - std::abs(std::fmod(h / 60.0, 2.0) - 1)), m = v - c;
  Rgb rgb{};
  switch (static_cast<int>(h / 60.0)) {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
  }
  for (auto& ch : rgb) ch += m;
  return rgb;
}

// Each shape class draws from its own hue band, so appearance alone carries
// a class cue; value noise adds per-body texture.
inline Rgb body_color(const RigidBody& b, double u, double v) {
  double h_lo = 0, h_hi = 40, s = 0.75;
  switch (b.shape) {
    case ShapeKind::kDisc: h_lo = 0, h_hi = 40; break;
    case ShapeKind::kTriangle: h_lo = 60, h_hi = 120; break;
    case ShapeKind::kComposite: h_lo = 280, h_hi = 330; break;
    case ShapeKind::kRectangle: h_lo = 190, h_hi = 240, s = 0.35; break;
  }
  const double pick = lattice_value(3, 7, b.texture_seed);
  const double hue = h_lo + (h_hi - h_lo) * pick;
  const double n = fractal_noise(4.0 * u, 4.0 * v, b.texture_seed);
  return hsv_to_rgb(hue, s, 0.45 + 0.5 * n);
}

inline Rgb background_color(double x, double y, std::uint64_t seed) {
  const double n = fractal_noise(2.5 * x, 2.5 * y, seed);
  const double m = value_noise(0.6 * x + 3.0, 0.6 * y + 9.0, seed ^ 0x55ULL);
  return hsv_to_rgb(25.0 + 30.0 * m, 0.2, 0.3 + 0.45 * n);
}

}  // namespace mfuse::scene
