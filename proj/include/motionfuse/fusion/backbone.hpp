#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "motionfuse/fusion/config.hpp"
#include "motionfuse/nn/layers.hpp"

namespace mfuse::fusion {

using nn::Conv2d;

// Strided conv net: a 1x1 input projection, then maps at strides 4, 8, 16, 32.
template <class T>
struct Backbone {
  Conv2d<T> proj;
  Conv2d<T> stem_a, stem_b;
  std::array<Conv2d<T>, 3> stages;

  Backbone() = default;
  Backbone(int in_channels, const std::array<int, 4>& w, Rng& rng)
      : proj(in_channels, w[0], 1, 1, 0, rng),
        stem_a(w[0], w[0], 3, 2, 1, rng),
        stem_b(w[0], w[0], 3, 2, 1, rng),
        stages{Conv2d<T>(w[0], w[1], 3, 2, 1, rng), Conv2d<T>(w[1], w[2], 3, 2, 1, rng),
               Conv2d<T>(w[2], w[3], 3, 2, 1, rng)} {}

  // [C,H,W] -> maps at strides {4, 8, 16, 32}.
  std::array<Tensor<T>, 4> operator()(const Tensor<T>& x) const {
    std::array<Tensor<T>, 4> out;
    out[0] = relu(stem_b(relu(stem_a(proj(x)))));
    for (int i = 0; i < 3; ++i) out[i + 1] = relu(stages[i](out[i]));
    return out;
  }

  void collect(const std::string& p, nn::ParamList<T>& out) const {
    proj.collect(p + ".proj", out);
    stem_a.collect(p + ".stem_a", out);
    stem_b.collect(p + ".stem_b", out);
    for (int i = 0; i < 3; ++i) stages[i].collect(p + ".stage" + std::to_string(i + 1), out);
  }
};

inline int ceil_div(int a, int b) { return (a + b - 1) / b; }

// Sizes of the stride-s map for an input of height h.
inline int level_size(int in, int stride) {
  int s = in;
  for (int k = stride; k > 1; k /= 2) s = ceil_div(s, 2);
  return s;
}

// 2D sine encoding [h*w, d]: the first d/2 channels encode y, the rest x,
// alternating sin/cos over geometrically spaced frequencies.
template <class T>
Tensor<T> sine_position(int h, int w, int d) {
  const int half = d / 2;
  std::vector<T> v(static_cast<std::size_t>(h) * w * d);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      T* row = v.data() + (static_cast<std::size_t>(y) * w + x) * d;
      const double ey = (y + 0.5) / h * 2.0 * std::numbers::pi;
      const double ex = (x + 0.5) / w * 2.0 * std::numbers::pi;
      for (int i = 0; i < half; ++i) {
        const double f = std::pow(10000.0, 2.0 * (i / 2) / half);
        row[i] = static_cast<T>(i % 2 == 0 ? std::sin(ey / f) : std::cos(ey / f));
        row[half + i] = static_cast<T>(i % 2 == 0 ? std::sin(ex / f) : std::cos(ex / f));
      }
    }
  return Tensor<T>({h * w, d}, std::move(v));
}

}  // namespace mfuse::fusion
