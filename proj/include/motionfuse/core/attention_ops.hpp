#pragma once

// Fused attention kernels with hand-written backward passes:
//   * scaled dot-product multi-head attention with an optional boolean mask
//   * multi-scale deformable attention (bilinear sampling at learned offsets)
// Both report how many query/key pairs they evaluate to an optional
// thread-local AttentionCounter.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <vector>

#include "motionfuse/core/ops.hpp"

namespace mfuse {

enum class AttentionSite { kEncoder = 0, kDecoderCross = 1, kDecoderSelf = 2 };

struct AttentionCounter {
  std::array<std::int64_t, 3> pairs{0, 0, 0};
  AttentionSite site = AttentionSite::kDecoderCross;

  std::int64_t total() const { return pairs[0] + pairs[1] + pairs[2]; }
  std::int64_t at(AttentionSite s) const { return pairs[static_cast<int>(s)]; }
  void add(std::int64_t n) { pairs[static_cast<int>(site)] += n; }
};

namespace detail {
inline thread_local AttentionCounter* g_counter = nullptr;
}

// Installs a counter for the current thread for the guard's lifetime.
class CountingScope {
 public:
  explicit CountingScope(AttentionCounter* c) : prev_(detail::g_counter) { detail::g_counter = c; }
  ~CountingScope() { detail::g_counter = prev_; }
  CountingScope(const CountingScope&) = delete;
  CountingScope& operator=(const CountingScope&) = delete;

 private:
  AttentionCounter* prev_;
};

// Tags pairs counted inside the scope with `site`.
class SiteScope {
 public:
  explicit SiteScope(AttentionSite s) {
    if (detail::g_counter) {
      prev_ = detail::g_counter->site;
      detail::g_counter->site = s;
    }
  }
  ~SiteScope() {
    if (detail::g_counter) detail::g_counter->site = prev_;
  }
  SiteScope(const SiteScope&) = delete;
  SiteScope& operator=(const SiteScope&) = delete;

 private:
  AttentionSite prev_ = AttentionSite::kDecoderCross;
};

inline void count_pairs(std::int64_t n) {
  if (detail::g_counter) detail::g_counter->add(n);
}

// Row-major [rows, cols] boolean mask; 1 = query may attend to key.
struct AttnMask {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> allow;

  AttnMask() = default;
  AttnMask(int r, int c, bool fill = true)
      : rows(r), cols(c), allow(static_cast<std::size_t>(r) * c, fill ? 1 : 0) {}
  std::uint8_t& operator()(int r, int c) { return allow[static_cast<std::size_t>(r) * cols + c]; }
  std::uint8_t operator()(int r, int c) const {
    return allow[static_cast<std::size_t>(r) * cols + c];
  }
};

// Multi-head scaled dot-product attention on projected inputs.
// q [Tq,d], k [Tk,d], v [Tk,d] -> [Tq,d]; heads split d into equal slices.
// Masked-out logits become -inf; a row with no allowed key attends to all keys.
// If `weights_out` is given it receives the softmax maps [heads, Tq, Tk].
template <class T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, int n_heads,
                    const AttnMask* mask = nullptr, std::vector<T>* weights_out = nullptr) {
  detail::require_rank(q.rank(), 2, "attention");
  detail::require_rank(k.rank(), 2, "attention");
  detail::require_rank(v.rank(), 2, "attention");
  const int tq = q.rows(), tk = k.rows(), d = q.cols();
  check(k.cols() == d && v.cols() == d && v.rows() == tk, ErrorCode::kShapeMismatch,
        "attention: q ", shape_str(q.shape()), " k ", shape_str(k.shape()), " v ",
        shape_str(v.shape()));
  check(n_heads > 0 && d % n_heads == 0, ErrorCode::kInvalidArgument, "attention: d=", d,
        " not divisible by heads=", n_heads);
  check(tk > 0, ErrorCode::kShapeMismatch, "attention: no keys");
  if (mask)
    check(mask->rows == tq && mask->cols == tk, ErrorCode::kShapeMismatch,
          "attention: mask ", mask->rows, "x", mask->cols, " for ", tq, "x", tk);
  for (const Tensor<T>* t : {&q, &k, &v})
    for (T x : t->values())
      check(std::isfinite(static_cast<double>(x)), ErrorCode::kNonFinite,
            "attention: non-finite input");

  count_pairs(static_cast<std::int64_t>(tq) * tk);

  const int dh = d / n_heads;
  const T sc = T(1) / std::sqrt(static_cast<T>(dh));
  using Stride = Eigen::OuterStride<>;
  using CHead = Eigen::Map<const RowMat<T>, 0, Stride>;
  using Head = Eigen::Map<RowMat<T>, 0, Stride>;

  std::vector<std::uint8_t> row_open(static_cast<std::size_t>(tq), 1);
  if (mask) {
    for (int i = 0; i < tq; ++i) {
      bool any = false;
      for (int j = 0; j < tk && !any; ++j) any = (*mask)(i, j) != 0;
      row_open[i] = any ? 0 : 1;
    }
  }

  auto probs = std::make_shared<std::vector<T>>(static_cast<std::size_t>(n_heads) * tq * tk);
  std::vector<T> out(static_cast<std::size_t>(tq) * d);
  for (int h = 0; h < n_heads; ++h) {
    CHead qh(q.data() + h * dh, tq, dh, Stride(d));
    CHead kh(k.data() + h * dh, tk, dh, Stride(d));
    CHead vh(v.data() + h * dh, tk, dh, Stride(d));
    MatMap<T> p(probs->data() + static_cast<std::size_t>(h) * tq * tk, tq, tk);
    p.noalias() = (qh * kh.transpose()) * sc;
    for (int i = 0; i < tq; ++i) {
      T mx = -std::numeric_limits<T>::infinity();
      for (int j = 0; j < tk; ++j) {
        if (mask && !row_open[i] && !(*mask)(i, j)) {
          p(i, j) = -std::numeric_limits<T>::infinity();
        } else {
          mx = std::max(mx, p(i, j));
        }
      }
      T s = 0;
      for (int j = 0; j < tk; ++j) {
        const T e = std::isinf(p(i, j)) ? T(0) : std::exp(p(i, j) - mx);
        p(i, j) = e;
        s += e;
      }
      p.row(i) /= s;
    }
    Head(out.data() + h * dh, tq, dh, Stride(d)).noalias() = p * vh;
  }
  if (weights_out) *weights_out = *probs;

  return make_result<T>(
      {tq, d}, std::move(out), {&q, &k, &v},
      [qn = q.node_ptr(), kn = k.node_ptr(), vn = v.node_ptr(), probs, n_heads, tq, tk, d, dh,
       sc](Node<T>& o) {
        RowMat<T> dp(tq, tk);
        for (int h = 0; h < n_heads; ++h) {
          CMatMap<T> p(probs->data() + static_cast<std::size_t>(h) * tq * tk, tq, tk);
          CHead go(o.grad.data() + h * dh, tq, dh, Stride(d));
          CHead qh(qn->value.data() + h * dh, tq, dh, Stride(d));
          CHead kh(kn->value.data() + h * dh, tk, dh, Stride(d));
          CHead vh(vn->value.data() + h * dh, tk, dh, Stride(d));
          if (vn->requires_grad)
            Head(vn->grad_data() + h * dh, tk, dh, Stride(d)).noalias() += p.transpose() * go;
          if (!qn->requires_grad && !kn->requires_grad) continue;
          dp.noalias() = go * vh.transpose();
          // softmax backward: ds = p * (dp - rowsum(dp * p))
          for (int i = 0; i < tq; ++i) {
            const T dot = (dp.row(i).array() * p.row(i).array()).sum();
            dp.row(i) = (p.row(i).array() * (dp.row(i).array() - dot)).matrix();
          }
          dp *= sc;
          if (qn->requires_grad)
            Head(qn->grad_data() + h * dh, tq, dh, Stride(d)).noalias() += dp * kh;
          if (kn->requires_grad)
            Head(kn->grad_data() + h * dh, tk, dh, Stride(d)).noalias() += dp.transpose() * qh;
        }
      });
}

// ---------------------------------------------------------------------------
// Multi-scale deformable attention

// One sampling grid. `cell_row[y*w + x]` is the row of the value tensor that
// holds that cell (or -1 for an empty cell). With `wrap_x` the grid is
// periodic along x, otherwise samples outside the grid read zero.
struct DeformLevel {
  int h = 0;
  int w = 0;
  bool wrap_x = false;
  std::vector<int> cell_row;
};

struct DeformGeometry {
  int n_heads = 0;
  int n_points = 0;
  std::vector<DeformLevel> levels;
};

namespace detail {
struct Corner {
  int row;       // value row or -1
  double w;      // bilinear weight
  double dw_dx;  // derivative of w wrt pixel x
  double dw_dy;
};

inline void bilinear_corners(const DeformLevel& lv, double px, double py,
                             std::array<Corner, 4>& out) {
  const double fx = std::floor(px), fy = std::floor(py);
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
  const double ax = px - fx, ay = py - fy;
  const int xs[2] = {x0, x0 + 1};
  const int ys[2] = {y0, y0 + 1};
  const double wx[2] = {1.0 - ax, ax};
  const double wy[2] = {1.0 - ay, ay};
  const double dwx[2] = {-1.0, 1.0};
  const double dwy[2] = {-1.0, 1.0};
  int k = 0;
  for (int iy = 0; iy < 2; ++iy) {
    for (int ix = 0; ix < 2; ++ix, ++k) {
      int x = xs[ix];
      const int y = ys[iy];
      if (lv.wrap_x) x = ((x % lv.w) + lv.w) % lv.w;
      int row = -1;
      if (y >= 0 && y < lv.h && x >= 0 && x < lv.w)
        row = lv.cell_row[static_cast<std::size_t>(y) * lv.w + x];
      out[k] = {row, wx[ix] * wy[iy], dwx[ix] * wy[iy], wx[ix] * dwy[iy]};
    }
  }
}
}  // namespace detail

// value [Nv, d]; ref [Tq*2] normalized (x,y) in [0,1];
// offsets [Tq, heads*levels*points*2] in level pixel units;
// logits [Tq, heads*levels*points], softmax-normalized per head over levels*points.
// Returns [Tq, d].
template <class T>
Tensor<T> deform_attention(const Tensor<T>& value, std::shared_ptr<const DeformGeometry> geo,
                           std::shared_ptr<const std::vector<double>> ref,
                           const Tensor<T>& offsets, const Tensor<T>& logits) {
  const int nh = geo->n_heads, np = geo->n_points;
  const int nl = static_cast<int>(geo->levels.size());
  const int d = value.cols();
  const int tq = offsets.rows();
  check(nh > 0 && d % nh == 0, ErrorCode::kInvalidArgument, "deform_attention: heads");
  check(offsets.cols() == nh * nl * np * 2 && logits.cols() == nh * nl * np &&
            logits.rows() == tq && static_cast<int>(ref->size()) == tq * 2,
        ErrorCode::kShapeMismatch, "deform_attention: offsets ", shape_str(offsets.shape()),
        " logits ", shape_str(logits.shape()));
  const int dh = d / nh;
  const int lp = nl * np;

  count_pairs(static_cast<std::int64_t>(tq) * nl * np);

  // softmax weights per (query, head)
  auto attw = std::make_shared<std::vector<T>>(logits.vec());
  for (int i = 0; i < tq; ++i) {
    for (int h = 0; h < nh; ++h) {
      T* a = attw->data() + (static_cast<std::size_t>(i) * nh + h) * lp;
      T mx = a[0];
      for (int j = 1; j < lp; ++j) mx = std::max(mx, a[j]);
      T s = 0;
      for (int j = 0; j < lp; ++j) s += (a[j] = std::exp(a[j] - mx));
      for (int j = 0; j < lp; ++j) a[j] /= s;
    }
  }

  auto pixel_xy = [geo, ref, nh, np, lp](int i, int h, int l, int p, const T* off, double& px,
                                         double& py) {
    const auto& lv = geo->levels[l];
    const std::size_t base = ((static_cast<std::size_t>(i) * nh + h) * lp + l * np + p) * 2;
    px = (*ref)[2 * i] * lv.w + static_cast<double>(off[base]) - 0.5;
    py = (*ref)[2 * i + 1] * lv.h + static_cast<double>(off[base + 1]) - 0.5;
  };

  std::vector<T> out(static_cast<std::size_t>(tq) * d, T(0));
  std::array<detail::Corner, 4> cs;
  const T* vdat = value.data();
  const T* off = offsets.data();
  for (int i = 0; i < tq; ++i) {
    for (int h = 0; h < nh; ++h) {
      T* o = out.data() + static_cast<std::size_t>(i) * d + h * dh;
      const T* a = attw->data() + (static_cast<std::size_t>(i) * nh + h) * lp;
      for (int l = 0; l < nl; ++l) {
        for (int p = 0; p < np; ++p) {
          double px, py;
          pixel_xy(i, h, l, p, off, px, py);
          detail::bilinear_corners(geo->levels[l], px, py, cs);
          const T aw = a[l * np + p];
          for (const auto& c : cs) {
            if (c.row < 0 || c.w == 0.0) continue;
            const T s = aw * static_cast<T>(c.w);
            const T* vr = vdat + static_cast<std::size_t>(c.row) * d + h * dh;
            for (int ch = 0; ch < dh; ++ch) o[ch] += s * vr[ch];
          }
        }
      }
    }
  }

  return make_result<T>(
      {tq, d}, std::move(out), {&value, &offsets, &logits},
      [vn = value.node_ptr(), on = offsets.node_ptr(), ln = logits.node_ptr(), geo, ref, attw, nh,
       np, nl, lp, d, dh, tq, pixel_xy](Node<T>& o) {
        T* gv = vn->requires_grad ? vn->grad_data() : nullptr;
        T* go_off = on->requires_grad ? on->grad_data() : nullptr;
        T* gl = ln->requires_grad ? ln->grad_data() : nullptr;
        const T* vdat = vn->value.data();
        const T* off = on->value.data();
        std::array<detail::Corner, 4> cs;
        std::vector<T> sample(static_cast<std::size_t>(dh));
        std::vector<T> da(static_cast<std::size_t>(lp));
        for (int i = 0; i < tq; ++i) {
          for (int h = 0; h < nh; ++h) {
            const T* g = o.grad.data() + static_cast<std::size_t>(i) * d + h * dh;
            const T* a = attw->data() + (static_cast<std::size_t>(i) * nh + h) * lp;
            for (int l = 0; l < nl; ++l) {
              for (int p = 0; p < np; ++p) {
                double px, py;
                pixel_xy(i, h, l, p, off, px, py);
                detail::bilinear_corners(geo->levels[l], px, py, cs);
                const T aw = a[l * np + p];
                std::fill(sample.begin(), sample.end(), T(0));
                T dx = 0, dy = 0;
                for (const auto& c : cs) {
                  if (c.row < 0) continue;
                  const T* vr = vdat + static_cast<std::size_t>(c.row) * d + h * dh;
                  T gdotv = 0;
                  for (int ch = 0; ch < dh; ++ch) {
                    sample[ch] += static_cast<T>(c.w) * vr[ch];
                    gdotv += g[ch] * vr[ch];
                  }
                  dx += static_cast<T>(c.dw_dx) * gdotv;
                  dy += static_cast<T>(c.dw_dy) * gdotv;
                  if (gv && c.w != 0.0) {
                    T* gvr = gv + static_cast<std::size_t>(c.row) * d + h * dh;
                    const T s = aw * static_cast<T>(c.w);
                    for (int ch = 0; ch < dh; ++ch) gvr[ch] += s * g[ch];
                  }
                }
                T gs = 0;
                for (int ch = 0; ch < dh; ++ch) gs += g[ch] * sample[ch];
                da[l * np + p] = gs;
                if (go_off) {
                  const std::size_t base =
                      ((static_cast<std::size_t>(i) * nh + h) * lp + l * np + p) * 2;
                  go_off[base] += aw * dx;
                  go_off[base + 1] += aw * dy;
                }
              }
            }
            if (gl) {
              T dot = 0;
              for (int j = 0; j < lp; ++j) dot += da[j] * a[j];
              T* glr = gl + (static_cast<std::size_t>(i) * nh + h) * lp;
              for (int j = 0; j < lp; ++j) glr[j] += a[j] * (da[j] - dot);
            }
          }
        }
      });
}

}  // namespace mfuse
