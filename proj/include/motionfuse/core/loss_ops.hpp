#pragma once

#include <cmath>
#include <memory>
#include <span>
#include <vector>

#include "motionfuse/core/ops.hpp"

namespace mfuse {

inline constexpr double kDiceSmooth = 1.0;

template <class T>
T softplus(T x) {
  return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <class T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

// Dice loss on probabilities: 1 - (2*sum(p*g) + 1) / (sum(p) + sum(g) + 1).
inline double dice_loss(std::span<const double> pred, std::span<const double> gt) {
  check(pred.size() == gt.size() && !pred.empty(), ErrorCode::kShapeMismatch, "dice_loss");
  double pg = 0, p = 0, g = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    pg += pred[i] * gt[i];
    p += pred[i];
    g += gt[i];
  }
  return 1.0 - (2.0 * pg + kDiceSmooth) / (p + g + kDiceSmooth);
}

// Sum over rows of the mean binary cross-entropy with logits.
// logits [R,K]; targets R*K values in {0,1}.
template <class T>
Tensor<T> sigmoid_bce(const Tensor<T>& logits, std::vector<T> targets) {
  const int r = logits.rows(), k = logits.cols();
  check(static_cast<int>(targets.size()) == r * k, ErrorCode::kShapeMismatch, "sigmoid_bce");
  T total = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const T x = logits.vec()[i];
    total += softplus(x) - x * targets[i];
  }
  total /= k;
  return make_result<T>({1}, {total}, {&logits},
                        [ln = logits.node_ptr(), t = std::move(targets), k](Node<T>& o) {
                          T* g = ln->grad_data();
                          const T s = o.grad[0] / k;
                          for (std::size_t i = 0; i < t.size(); ++i)
                            g[i] += s * (stable_sigmoid(ln->value[i]) - t[i]);
                        });
}

// Sum over rows of the dice loss of sigmoid(logits) against targets.
template <class T>
Tensor<T> sigmoid_dice(const Tensor<T>& logits, std::vector<T> targets) {
  const int r = logits.rows(), k = logits.cols();
  check(static_cast<int>(targets.size()) == r * k, ErrorCode::kShapeMismatch, "sigmoid_dice");
  auto num = std::make_shared<std::vector<T>>(r);
  auto den = std::make_shared<std::vector<T>>(r);
  T total = 0;
  for (int i = 0; i < r; ++i) {
    T pg = 0, ps = 0, gs = 0;
    for (int j = 0; j < k; ++j) {
      const std::size_t q = static_cast<std::size_t>(i) * k + j;
      const T p = stable_sigmoid(logits.vec()[q]);
      pg += p * targets[q];
      ps += p;
      gs += targets[q];
    }
    (*num)[i] = T(2) * pg + T(kDiceSmooth);
    (*den)[i] = ps + gs + T(kDiceSmooth);
    total += T(1) - (*num)[i] / (*den)[i];
  }
  return make_result<T>({1}, {total}, {&logits},
                        [ln = logits.node_ptr(), t = std::move(targets), num, den, r,
                         k](Node<T>& o) {
                          T* g = ln->grad_data();
                          for (int i = 0; i < r; ++i) {
                            const T n = (*num)[i], d = (*den)[i];
                            for (int j = 0; j < k; ++j) {
                              const std::size_t q = static_cast<std::size_t>(i) * k + j;
                              const T p = stable_sigmoid(ln->value[q]);
                              const T dl_dp = -(T(2) * t[q] * d - n) / (d * d);
                              g[q] += o.grad[0] * dl_dp * p * (T(1) - p);
                            }
                          }
                        });
}

// sum_i weights[i] * CE(softmax(logits[i]), labels[i]); logits [N,C].
template <class T>
Tensor<T> weighted_cross_entropy(const Tensor<T>& logits, std::vector<int> labels,
                                 std::vector<T> weights) {
  const int n = logits.rows(), c = logits.cols();
  check(static_cast<int>(labels.size()) == n && static_cast<int>(weights.size()) == n,
        ErrorCode::kShapeMismatch, "weighted_cross_entropy");
  auto probs = std::make_shared<std::vector<T>>(logits.vec());
  T total = 0;
  for (int i = 0; i < n; ++i) {
    T* row = probs->data() + static_cast<std::size_t>(i) * c;
    T mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    T s = 0;
    for (int j = 0; j < c; ++j) s += std::exp(row[j] - mx);
    const T lse = mx + std::log(s);
    total += weights[i] * (lse - row[labels[i]]);
    for (int j = 0; j < c; ++j) row[j] = std::exp(row[j] - lse);
  }
  return make_result<T>({1}, {total}, {&logits},
                        [ln = logits.node_ptr(), probs, labels = std::move(labels),
                         weights = std::move(weights), n, c](Node<T>& o) {
                          T* g = ln->grad_data();
                          for (int i = 0; i < n; ++i)
                            for (int j = 0; j < c; ++j) {
                              const std::size_t q = static_cast<std::size_t>(i) * c + j;
                              const T y = (j == labels[i]) ? T(1) : T(0);
                              g[q] += o.grad[0] * weights[i] * ((*probs)[q] - y);
                            }
                        });
}

}  // namespace mfuse
