#pragma once

// Differentiable primitives. Matrices are rank-2 row-major [rows, cols];
// feature maps are rank-3 [C, H, W].

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "motionfuse/core/tensor.hpp"

namespace mfuse {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using CMatMap = Eigen::Map<const RowMat<T>>;
template <class T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <class T>
using CVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

namespace detail {
inline void require_rank(int got, int want, const char* op) {
  check(got == want, ErrorCode::kShapeMismatch, op, ": expected rank ", want, ", got ", got);
}
template <class T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  check(a.shape() == b.shape(), ErrorCode::kShapeMismatch, op, ": ", shape_str(a.shape()),
        " vs ", shape_str(b.shape()));
}
template <class T>
CMatMap<T> cmap(const Tensor<T>& t) {
  return CMatMap<T>(t.data(), t.rows(), t.cols());
}
template <class T>
MatMap<T> gmap(Node<T>& n, int r, int c) {
  return MatMap<T>(n.grad_data(), r, c);
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank(a.rank(), 2, "matmul");
  detail::require_rank(b.rank(), 2, "matmul");
  check(a.cols() == b.rows(), ErrorCode::kShapeMismatch, "matmul: ", shape_str(a.shape()),
        " x ", shape_str(b.shape()));
  const int m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<T> out(static_cast<std::size_t>(m) * n);
  MatMap<T>(out.data(), m, n).noalias() = detail::cmap(a) * detail::cmap(b);
  return make_result<T>({m, n}, std::move(out), {&a, &b},
                        [an = a.node_ptr(), bn = b.node_ptr(), m, k, n](Node<T>& o) {
                          CMatMap<T> g(o.grad.data(), m, n);
                          if (an->requires_grad)
                            detail::gmap(*an, m, k).noalias() +=
                                g * CMatMap<T>(bn->value.data(), k, n).transpose();
                          if (bn->requires_grad)
                            detail::gmap(*bn, k, n).noalias() +=
                                CMatMap<T>(an->value.data(), m, k).transpose() * g;
                        });
}

// a [m,k] times b[n,k]^T -> [m,n]
template <class T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank(a.rank(), 2, "matmul_nt");
  detail::require_rank(b.rank(), 2, "matmul_nt");
  check(a.cols() == b.cols(), ErrorCode::kShapeMismatch, "matmul_nt: ", shape_str(a.shape()),
        " x ", shape_str(b.shape()), "^T");
  const int m = a.rows(), k = a.cols(), n = b.rows();
  std::vector<T> out(static_cast<std::size_t>(m) * n);
  MatMap<T>(out.data(), m, n).noalias() = detail::cmap(a) * detail::cmap(b).transpose();
  return make_result<T>({m, n}, std::move(out), {&a, &b},
                        [an = a.node_ptr(), bn = b.node_ptr(), m, k, n](Node<T>& o) {
                          CMatMap<T> g(o.grad.data(), m, n);
                          if (an->requires_grad)
                            detail::gmap(*an, m, k).noalias() +=
                                g * CMatMap<T>(bn->value.data(), n, k);
                          if (bn->requires_grad)
                            detail::gmap(*bn, n, k).noalias() +=
                                g.transpose() * CMatMap<T>(an->value.data(), m, k);
                        });
}

// x [m,in] * w[out,in]^T + b[out]
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  detail::require_rank(x.rank(), 2, "linear");
  check(w.rank() == 2 && w.cols() == x.cols(), ErrorCode::kShapeMismatch, "linear: x ",
        shape_str(x.shape()), " w ", shape_str(w.shape()));
  const int m = x.rows(), in = x.cols(), out_dim = w.rows();
  const bool has_bias = b.defined();
  if (has_bias)
    check(b.numel() == out_dim, ErrorCode::kShapeMismatch, "linear: bias ",
          shape_str(b.shape()));
  std::vector<T> out(static_cast<std::size_t>(m) * out_dim);
  MatMap<T> o(out.data(), m, out_dim);
  o.noalias() = detail::cmap(x) * CMatMap<T>(w.data(), out_dim, in).transpose();
  if (has_bias) o.rowwise() += CVecMap<T>(b.data(), out_dim).transpose();
  return make_result<T>(
      {m, out_dim}, std::move(out), {&x, &w, has_bias ? &b : nullptr},
      [xn = x.node_ptr(), wn = w.node_ptr(), bn = has_bias ? b.node_ptr() : nullptr, m, in,
       out_dim](Node<T>& o) {
        CMatMap<T> g(o.grad.data(), m, out_dim);
        if (xn->requires_grad)
          detail::gmap(*xn, m, in).noalias() += g * CMatMap<T>(wn->value.data(), out_dim, in);
        if (wn->requires_grad)
          detail::gmap(*wn, out_dim, in).noalias() +=
              g.transpose() * CMatMap<T>(xn->value.data(), m, in);
        if (bn && bn->requires_grad)
          VecMap<T>(bn->grad_data(), out_dim) += g.colwise().sum().transpose();
      });
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
  detail::require_rank(a.rank(), 2, "transpose");
  const int r = a.rows(), c = a.cols();
  std::vector<T> out(static_cast<std::size_t>(r) * c);
  MatMap<T>(out.data(), c, r) = detail::cmap(a).transpose();
  return make_result<T>({c, r}, std::move(out), {&a}, [an = a.node_ptr(), r, c](Node<T>& o) {
    detail::gmap(*an, r, c) += CMatMap<T>(o.grad.data(), c, r).transpose();
  });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  check(shape_numel(shape) == a.numel(), ErrorCode::kShapeMismatch, "reshape: ",
        shape_str(a.shape()), " -> ", shape_str(shape));
  return make_result<T>(std::move(shape), a.vec(), {&a}, [an = a.node_ptr()](Node<T>& o) {
    T* g = an->grad_data();
    for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Elementwise

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same(a, b, "add");
  std::vector<T> out(a.vec());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.vec()[i];
  return make_result<T>(a.shape(), std::move(out), {&a, &b},
                        [an = a.node_ptr(), bn = b.node_ptr()](Node<T>& o) {
                          for (auto* n : {an.get(), bn.get()}) {
                            if (!n->requires_grad) continue;
                            T* g = n->grad_data();
                            for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
                          }
                        });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same(a, b, "sub");
  std::vector<T> out(a.vec());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.vec()[i];
  return make_result<T>(a.shape(), std::move(out), {&a, &b},
                        [an = a.node_ptr(), bn = b.node_ptr()](Node<T>& o) {
                          if (an->requires_grad) {
                            T* g = an->grad_data();
                            for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
                          }
                          if (bn->requires_grad) {
                            T* g = bn->grad_data();
                            for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] -= o.grad[i];
                          }
                        });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same(a, b, "mul");
  std::vector<T> out(a.vec());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.vec()[i];
  return make_result<T>(a.shape(), std::move(out), {&a, &b},
                        [an = a.node_ptr(), bn = b.node_ptr()](Node<T>& o) {
                          if (an->requires_grad) {
                            T* g = an->grad_data();
                            for (std::size_t i = 0; i < o.grad.size(); ++i)
                              g[i] += o.grad[i] * bn->value[i];
                          }
                          if (bn->requires_grad) {
                            T* g = bn->grad_data();
                            for (std::size_t i = 0; i < o.grad.size(); ++i)
                              g[i] += o.grad[i] * an->value[i];
                          }
                        });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  std::vector<T> out(a.vec());
  for (auto& v : out) v *= s;
  return make_result<T>(a.shape(), std::move(out), {&a}, [an = a.node_ptr(), s](Node<T>& o) {
    T* g = an->grad_data();
    for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += s * o.grad[i];
  });
}

// x [m,n] + v[n] broadcast over rows
template <class T>
Tensor<T> add_rowvec(const Tensor<T>& x, const Tensor<T>& v) {
  detail::require_rank(x.rank(), 2, "add_rowvec");
  check(v.numel() == x.cols(), ErrorCode::kShapeMismatch, "add_rowvec: ", shape_str(x.shape()),
        " + ", shape_str(v.shape()));
  const int m = x.rows(), n = x.cols();
  std::vector<T> out(x.vec());
  MatMap<T>(out.data(), m, n).rowwise() += CVecMap<T>(v.data(), n).transpose();
  return make_result<T>(x.shape(), std::move(out), {&x, &v},
                        [xn = x.node_ptr(), vn = v.node_ptr(), m, n](Node<T>& o) {
                          CMatMap<T> g(o.grad.data(), m, n);
                          if (xn->requires_grad) detail::gmap(*xn, m, n) += g;
                          if (vn->requires_grad)
                            VecMap<T>(vn->grad_data(), n) += g.colwise().sum().transpose();
                        });
}

// x [C, H*W...] + v[C] broadcast over the trailing dims
template <class T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& v) {
  const int c = x.dim(0);
  check(v.numel() == c, ErrorCode::kShapeMismatch, "add_channel_bias");
  const auto plane = static_cast<std::size_t>(x.numel() / c);
  std::vector<T> out(x.vec());
  for (int ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < plane; ++i) out[ch * plane + i] += v[ch];
  return make_result<T>(x.shape(), std::move(out), {&x, &v},
                        [xn = x.node_ptr(), vn = v.node_ptr(), c, plane](Node<T>& o) {
                          if (xn->requires_grad) {
                            T* g = xn->grad_data();
                            for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
                          }
                          if (vn->requires_grad) {
                            T* g = vn->grad_data();
                            for (int ch = 0; ch < c; ++ch) {
                              T s = 0;
                              for (std::size_t i = 0; i < plane; ++i) s += o.grad[ch * plane + i];
                              g[ch] += s;
                            }
                          }
                        });
}

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.vec());
  for (auto& v : out) v = v > T(0) ? v : T(0);
  return make_result<T>(a.shape(), std::move(out), {&a}, [an = a.node_ptr()](Node<T>& o) {
    T* g = an->grad_data();
    for (std::size_t i = 0; i < o.grad.size(); ++i)
      if (an->value[i] > T(0)) g[i] += o.grad[i];
  });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  std::vector<T> out(a.vec());
  for (auto& v : out) v = T(1) / (T(1) + std::exp(-v));
  auto res = make_result<T>(a.shape(), std::move(out), {&a}, nullptr);
  if (res.requires_grad()) {
    Node<T>* self = res.node();
    self->backward = [an = a.node_ptr()](Node<T>& o) {
      T* g = an->grad_data();
      for (std::size_t i = 0; i < o.grad.size(); ++i)
        g[i] += o.grad[i] * o.value[i] * (T(1) - o.value[i]);
    };
  }
  return res;
}

// Row-wise layer normalization over the last dimension of x [m,n].
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5)) {
  detail::require_rank(x.rank(), 2, "layer_norm");
  const int m = x.rows(), n = x.cols();
  check(gamma.numel() == n && beta.numel() == n, ErrorCode::kShapeMismatch, "layer_norm");
  std::vector<T> out(static_cast<std::size_t>(m) * n);
  auto xhat = std::make_shared<std::vector<T>>(out.size());
  auto rstd = std::make_shared<std::vector<T>>(m);
  for (int i = 0; i < m; ++i) {
    const T* row = x.data() + static_cast<std::size_t>(i) * n;
    T mean = 0;
    for (int j = 0; j < n; ++j) mean += row[j];
    mean /= n;
    T var = 0;
    for (int j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= n;
    const T r = T(1) / std::sqrt(var + eps);
    (*rstd)[i] = r;
    for (int j = 0; j < n; ++j) {
      const T h = (row[j] - mean) * r;
      (*xhat)[static_cast<std::size_t>(i) * n + j] = h;
      out[static_cast<std::size_t>(i) * n + j] = h * gamma[j] + beta[j];
    }
  }
  return make_result<T>(
      x.shape(), std::move(out), {&x, &gamma, &beta},
      [xn = x.node_ptr(), gn = gamma.node_ptr(), bn = beta.node_ptr(), xhat, rstd, m,
       n](Node<T>& o) {
        T* gx = xn->requires_grad ? xn->grad_data() : nullptr;
        T* gg = gn->requires_grad ? gn->grad_data() : nullptr;
        T* gb = bn->requires_grad ? bn->grad_data() : nullptr;
        for (int i = 0; i < m; ++i) {
          const T* go = o.grad.data() + static_cast<std::size_t>(i) * n;
          const T* h = xhat->data() + static_cast<std::size_t>(i) * n;
          T sum_dh = 0, sum_dh_h = 0;
          for (int j = 0; j < n; ++j) {
            const T dh = go[j] * gn->value[j];
            sum_dh += dh;
            sum_dh_h += dh * h[j];
            if (gg) gg[j] += go[j] * h[j];
            if (gb) gb[j] += go[j];
          }
          if (!gx) continue;
          const T r = (*rstd)[i] / n;
          for (int j = 0; j < n; ++j) {
            const T dh = go[j] * gn->value[j];
            gx[static_cast<std::size_t>(i) * n + j] += r * (n * dh - sum_dh - h[j] * sum_dh_h);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Structural

template <class T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  check(!parts.empty(), ErrorCode::kInvalidArgument, "concat_rows: no inputs");
  const int c = parts.front().cols();
  int total = 0;
  std::vector<T> out;
  for (const auto& p : parts) {
    detail::require_rank(p.rank(), 2, "concat_rows");
    check(p.cols() == c, ErrorCode::kShapeMismatch, "concat_rows: column mismatch ", p.cols(),
          " vs ", c);
    total += p.rows();
    out.insert(out.end(), p.vec().begin(), p.vec().end());
  }
  std::vector<std::shared_ptr<Node<T>>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node_ptr());
  return make_result_v<T>({total, c}, std::move(out), parts, [nodes](Node<T>& o) {
    std::size_t off = 0;
    for (const auto& n : nodes) {
      if (n->requires_grad) {
        T* g = n->grad_data();
        for (std::size_t i = 0; i < n->value.size(); ++i) g[i] += o.grad[off + i];
      }
      off += n->value.size();
    }
  });
}

template <class T>
Tensor<T> slice_rows(const Tensor<T>& a, int r0, int r1) {
  detail::require_rank(a.rank(), 2, "slice_rows");
  check(0 <= r0 && r0 <= r1 && r1 <= a.rows(), ErrorCode::kShapeMismatch, "slice_rows: [", r0,
        ",", r1, ") of ", a.rows());
  const int c = a.cols();
  std::vector<T> out(a.data() + static_cast<std::size_t>(r0) * c,
                     a.data() + static_cast<std::size_t>(r1) * c);
  return make_result<T>({r1 - r0, c}, std::move(out), {&a},
                        [an = a.node_ptr(), r0, c](Node<T>& o) {
                          T* g = an->grad_data() + static_cast<std::size_t>(r0) * c;
                          for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
                        });
}

template <class T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  check(!parts.empty(), ErrorCode::kInvalidArgument, "concat_cols: no inputs");
  const int r = parts.front().rows();
  std::vector<int> widths;
  int total = 0;
  for (const auto& p : parts) {
    detail::require_rank(p.rank(), 2, "concat_cols");
    check(p.rows() == r, ErrorCode::kShapeMismatch, "concat_cols: row mismatch");
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<T> out(static_cast<std::size_t>(r) * total);
  int off = 0;
  for (const auto& p : parts) {
    MatMap<T>(out.data(), r, total).middleCols(off, p.cols()) = detail::cmap(p);
    off += p.cols();
  }
  std::vector<std::shared_ptr<Node<T>>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node_ptr());
  return make_result_v<T>({r, total}, std::move(out), parts,
                          [nodes, widths, r, total](Node<T>& o) {
                            CMatMap<T> g(o.grad.data(), r, total);
                            int off = 0;
                            for (std::size_t k = 0; k < nodes.size(); ++k) {
                              if (nodes[k]->requires_grad)
                                detail::gmap(*nodes[k], r, widths[k]) +=
                                    g.middleCols(off, widths[k]);
                              off += widths[k];
                            }
                          });
}

template <class T>
Tensor<T> slice_cols(const Tensor<T>& a, int c0, int c1) {
  detail::require_rank(a.rank(), 2, "slice_cols");
  check(0 <= c0 && c0 <= c1 && c1 <= a.cols(), ErrorCode::kShapeMismatch, "slice_cols");
  const int r = a.rows(), c = a.cols(), w = c1 - c0;
  std::vector<T> out(static_cast<std::size_t>(r) * w);
  MatMap<T>(out.data(), r, w) = detail::cmap(a).middleCols(c0, w);
  return make_result<T>({r, w}, std::move(out), {&a}, [an = a.node_ptr(), r, c, c0, w](Node<T>& o) {
    detail::gmap(*an, r, c).middleCols(c0, w) += CMatMap<T>(o.grad.data(), r, w);
  });
}

// out[i] = a[idx[i]] (rows)
template <class T>
Tensor<T> gather_rows(const Tensor<T>& a, std::vector<int> idx) {
  detail::require_rank(a.rank(), 2, "gather_rows");
  const int c = a.cols();
  std::vector<T> out(idx.size() * static_cast<std::size_t>(c));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    check(idx[i] >= 0 && idx[i] < a.rows(), ErrorCode::kShapeMismatch, "gather_rows: index");
    std::copy_n(a.data() + static_cast<std::size_t>(idx[i]) * c, c, out.data() + i * c);
  }
  const int n = static_cast<int>(idx.size());
  return make_result<T>({n, c}, std::move(out), {&a},
                        [an = a.node_ptr(), idx = std::move(idx), c](Node<T>& o) {
                          T* g = an->grad_data();
                          for (std::size_t i = 0; i < idx.size(); ++i)
                            for (int j = 0; j < c; ++j)
                              g[static_cast<std::size_t>(idx[i]) * c + j] += o.grad[i * c + j];
                        });
}

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  T s = 0;
  for (T v : a.values()) s += v;
  return make_result<T>({1}, {s}, {&a}, [an = a.node_ptr()](Node<T>& o) {
    T* g = an->grad_data();
    for (std::size_t i = 0; i < an->value.size(); ++i) g[i] += o.grad[0];
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

// Sum of scalar tensors; an empty list yields a constant zero.
template <class T>
Tensor<T> add_scalars(const std::vector<Tensor<T>>& terms) {
  T s = 0;
  for (const auto& t : terms) s += t.item();
  std::vector<std::shared_ptr<Node<T>>> nodes;
  for (const auto& t : terms) nodes.push_back(t.node_ptr());
  return make_result_v<T>({1}, {s}, terms, [nodes](Node<T>& o) {
    for (const auto& n : nodes)
      if (n->requires_grad) n->grad_data()[0] += o.grad[0];
  });
}

// w[0]*a + w[1]*b + bias[0]; all learnable.
template <class T>
Tensor<T> weighted_sum2(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& w,
                        const Tensor<T>& bias) {
  detail::require_same(a, b, "weighted_sum2");
  check(w.numel() == 2 && bias.numel() == 1, ErrorCode::kShapeMismatch, "weighted_sum2");
  std::vector<T> out(a.vec().size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = w[0] * a.vec()[i] + w[1] * b.vec()[i] + bias[0];
  return make_result<T>(
      a.shape(), std::move(out), {&a, &b, &w, &bias},
      [an = a.node_ptr(), bn = b.node_ptr(), wn = w.node_ptr(), cn = bias.node_ptr()](Node<T>& o) {
        const T w0 = wn->value[0], w1 = wn->value[1];
        T gw0 = 0, gw1 = 0, gc = 0;
        T* ga = an->requires_grad ? an->grad_data() : nullptr;
        T* gb = bn->requires_grad ? bn->grad_data() : nullptr;
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
          const T g = o.grad[i];
          if (ga) ga[i] += w0 * g;
          if (gb) gb[i] += w1 * g;
          gw0 += g * an->value[i];
          gw1 += g * bn->value[i];
          gc += g;
        }
        if (wn->requires_grad) {
          wn->grad_data()[0] += gw0;
          wn->grad_data()[1] += gw1;
        }
        if (cn->requires_grad) cn->grad_data()[0] += gc;
      });
}

}  // namespace mfuse
