#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "motionfuse/core/ops.hpp"

namespace mfuse {

inline int conv_out_size(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// x [C,H,W], w [O,C,k,k], b [O] (optional) -> [O,Ho,Wo]; im2col + GEMM.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride,
                 int pad) {
  detail::require_rank(x.rank(), 3, "conv2d");
  detail::require_rank(w.rank(), 4, "conv2d");
  const int c = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int o = w.dim(0), k = w.dim(2);
  check(w.dim(1) == c && w.dim(3) == k, ErrorCode::kShapeMismatch, "conv2d: x ",
        shape_str(x.shape()), " w ", shape_str(w.shape()));
  const int ho = conv_out_size(h, k, stride, pad), wo = conv_out_size(wd, k, stride, pad);
  check(ho > 0 && wo > 0, ErrorCode::kShapeMismatch, "conv2d: empty output");
  const int ck = c * k * k, hw = ho * wo;
  const bool has_bias = b.defined();

  auto cols = std::make_shared<std::vector<T>>(static_cast<std::size_t>(ck) * hw, T(0));
  const T* xd = x.data();
  for (int ch = 0; ch < c; ++ch)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols->data() + static_cast<std::size_t>((ch * k + ky) * k + kx) * hw;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= wd) continue;
            row[oy * wo + ox] = xd[(static_cast<std::size_t>(ch) * h + iy) * wd + ix];
          }
        }
      }

  std::vector<T> out(static_cast<std::size_t>(o) * hw);
  MatMap<T> om(out.data(), o, hw);
  om.noalias() = CMatMap<T>(w.data(), o, ck) * CMatMap<T>(cols->data(), ck, hw);
  if (has_bias) om.colwise() += CVecMap<T>(b.data(), o);

  return make_result<T>(
      {o, ho, wo}, std::move(out), {&x, &w, has_bias ? &b : nullptr},
      [xn = x.node_ptr(), wn = w.node_ptr(), bn = has_bias ? b.node_ptr() : nullptr, cols, c, h,
       wd, o, k, ho, wo, ck, hw, stride, pad](Node<T>& node) {
        CMatMap<T> g(node.grad.data(), o, hw);
        if (wn->requires_grad)
          detail::gmap(*wn, o, ck).noalias() += g * CMatMap<T>(cols->data(), ck, hw).transpose();
        if (bn && bn->requires_grad) VecMap<T>(bn->grad_data(), o) += g.rowwise().sum();
        if (!xn->requires_grad) return;
        RowMat<T> dcols = CMatMap<T>(wn->value.data(), o, ck).transpose() * g;
        T* gx = xn->grad_data();
        for (int ch = 0; ch < c; ++ch)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const T* row = dcols.data() + static_cast<std::size_t>((ch * k + ky) * k + kx) * hw;
              for (int oy = 0; oy < ho; ++oy) {
                const int iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= h) continue;
                for (int ox = 0; ox < wo; ++ox) {
                  const int ix = ox * stride - pad + kx;
                  if (ix < 0 || ix >= wd) continue;
                  gx[(static_cast<std::size_t>(ch) * h + iy) * wd + ix] += row[oy * wo + ox];
                }
              }
            }
      });
}

// Nearest-neighbour resize of x [C,H,W] to [C,ho,wo].
template <class T>
Tensor<T> resize_nearest(const Tensor<T>& x, int ho, int wo) {
  detail::require_rank(x.rank(), 3, "resize_nearest");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  std::vector<int> src(static_cast<std::size_t>(ho) * wo);
  for (int y = 0; y < ho; ++y)
    for (int xx = 0; xx < wo; ++xx) {
      const int sy = std::min(h - 1, static_cast<int>(std::floor((y + 0.5) * h / ho)));
      const int sx = std::min(w - 1, static_cast<int>(std::floor((xx + 0.5) * w / wo)));
      src[static_cast<std::size_t>(y) * wo + xx] = sy * w + sx;
    }
  std::vector<T> out(static_cast<std::size_t>(c) * ho * wo);
  for (int ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < src.size(); ++i)
      out[ch * src.size() + i] = x.data()[static_cast<std::size_t>(ch) * h * w + src[i]];
  return make_result<T>({c, ho, wo}, std::move(out), {&x},
                        [xn = x.node_ptr(), src = std::move(src), c, h, w](Node<T>& o) {
                          T* g = xn->grad_data();
                          for (int ch = 0; ch < c; ++ch)
                            for (std::size_t i = 0; i < src.size(); ++i)
                              g[static_cast<std::size_t>(ch) * h * w + src[i]] +=
                                  o.grad[ch * src.size() + i];
                        });
}

// Bilinear read of a [h,w] map at normalized (x,y) in [0,1]^2 using the
// pixel-centre convention; coordinates are clamped to the border.
struct BilinearTap {
  int idx[4];
  double w[4];
};

inline BilinearTap bilinear_tap(int h, int w, double nx, double ny) {
  const double px = std::clamp(nx * w - 0.5, 0.0, static_cast<double>(w - 1));
  const double py = std::clamp(ny * h - 0.5, 0.0, static_cast<double>(h - 1));
  const int x0 = static_cast<int>(std::floor(px)), y0 = static_cast<int>(std::floor(py));
  const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double ax = px - x0, ay = py - y0;
  return {{y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1},
          {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay}};
}

// For each selected row r of maps [N, h*w], read K points -> [R, K].
// pts holds R*K (x,y) pairs in [0,1].
template <class T>
Tensor<T> point_sample(const Tensor<T>& maps, int h, int w, std::vector<int> rows,
                       std::shared_ptr<const std::vector<double>> pts, int k) {
  detail::require_rank(maps.rank(), 2, "point_sample");
  check(maps.cols() == h * w, ErrorCode::kShapeMismatch, "point_sample: map width");
  const int r = static_cast<int>(rows.size());
  check(static_cast<int>(pts->size()) == r * k * 2, ErrorCode::kShapeMismatch,
        "point_sample: points");
  auto taps = std::make_shared<std::vector<BilinearTap>>(static_cast<std::size_t>(r) * k);
  std::vector<T> out(static_cast<std::size_t>(r) * k);
  for (int i = 0; i < r; ++i) {
    const T* m = maps.data() + static_cast<std::size_t>(rows[i]) * h * w;
    for (int j = 0; j < k; ++j) {
      const std::size_t q = static_cast<std::size_t>(i) * k + j;
      const auto tap = bilinear_tap(h, w, (*pts)[2 * q], (*pts)[2 * q + 1]);
      (*taps)[q] = tap;
      T v = 0;
      for (int c = 0; c < 4; ++c) v += static_cast<T>(tap.w[c]) * m[tap.idx[c]];
      out[q] = v;
    }
  }
  return make_result<T>({r, k}, std::move(out), {&maps},
                        [mn = maps.node_ptr(), rows = std::move(rows), taps, h, w, k](Node<T>& o) {
                          T* g = mn->grad_data();
                          for (std::size_t i = 0; i < rows.size(); ++i) {
                            T* gm = g + static_cast<std::size_t>(rows[i]) * h * w;
                            for (int j = 0; j < k; ++j) {
                              const std::size_t q = i * k + j;
                              const auto& tap = (*taps)[q];
                              for (int c = 0; c < 4; ++c)
                                gm[tap.idx[c]] += static_cast<T>(tap.w[c]) * o.grad[q];
                            }
                          }
                        });
}

}  // namespace mfuse
