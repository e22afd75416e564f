#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "motionfuse/core/ops.hpp"
#include "motionfuse/core/random.hpp"
#include "motionfuse/core/spatial_ops.hpp"

namespace mfuse::nn {

// Decides weight decay and the optimizer group a parameter lands in.
enum class ParamKind { kWeight, kBias, kNorm, kEmbedding };

template <class T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
  ParamKind kind;
};

template <class T>
using ParamList = std::vector<NamedParam<T>>;

template <class T>
Tensor<T> uniform_param(Shape shape, double bound, Rng& rng) {
  std::vector<T> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = static_cast<T>(uniform(rng, -bound, bound));
  return Tensor<T>::parameter(std::move(shape), std::move(v));
}

template <class T>
Tensor<T> const_param(Shape shape, T value) {
  std::vector<T> v(static_cast<std::size_t>(shape_numel(shape)), value);
  return Tensor<T>::parameter(std::move(shape), std::move(v));
}

template <class T>
struct Linear {
  Tensor<T> w;
  Tensor<T> b;

  Linear() = default;
  Linear(int in, int out, Rng& rng, bool bias = true) {
    const double bound = std::sqrt(6.0 / (in + out));
    w = uniform_param<T>({out, in}, bound, rng);
    if (bias) b = const_param<T>({out}, T(0));
  }

  int in_features() const { return w.cols(); }
  int out_features() const { return w.rows(); }
  Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, w, b); }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    out.push_back({prefix + ".weight", w, ParamKind::kWeight});
    if (b.defined()) out.push_back({prefix + ".bias", b, ParamKind::kBias});
  }
};

template <class T>
struct LayerNorm {
  Tensor<T> gamma;
  Tensor<T> beta;

  LayerNorm() = default;
  explicit LayerNorm(int d) : gamma(const_param<T>({d}, T(1))), beta(const_param<T>({d}, T(0))) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gamma, beta); }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    out.push_back({prefix + ".gamma", gamma, ParamKind::kNorm});
    out.push_back({prefix + ".beta", beta, ParamKind::kNorm});
  }
};

// Stack of linear layers with ReLU between them (none after the last).
template <class T>
struct Mlp {
  std::vector<Linear<T>> layers;

  Mlp() = default;
  Mlp(int in, int hidden, int out, int n_layers, Rng& rng) {
    for (int i = 0; i < n_layers; ++i) {
      const int a = i == 0 ? in : hidden;
      const int b = i + 1 == n_layers ? out : hidden;
      layers.emplace_back(a, b, rng);
    }
  }

  Tensor<T> operator()(Tensor<T> x) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      x = layers[i](x);
      if (i + 1 < layers.size()) x = relu(x);
    }
    return x;
  }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    for (std::size_t i = 0; i < layers.size(); ++i)
      layers[i].collect(prefix + ".layers." + std::to_string(i), out);
  }
};

template <class T>
struct Conv2d {
  Tensor<T> w;
  Tensor<T> b;
  int stride = 1;
  int pad = 0;

  Conv2d() = default;
  Conv2d(int in, int out, int k, int stride_, int pad_, Rng& rng)
      : stride(stride_), pad(pad_) {
    // He-uniform for ReLU nets
    const double bound = std::sqrt(6.0 / (in * k * k));
    w = uniform_param<T>({out, in, k, k}, bound, rng);
    b = const_param<T>({out}, T(0));
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, w, b, stride, pad); }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    out.push_back({prefix + ".weight", w, ParamKind::kWeight});
    out.push_back({prefix + ".bias", b, ParamKind::kBias});
  }
};

// Learned table of row vectors (queries, level or modality embeddings).
template <class T>
struct Embedding {
  Tensor<T> table;

  Embedding() = default;
  Embedding(int n, int d, Rng& rng, double stddev = 1.0) {
    std::vector<T> v(static_cast<std::size_t>(n) * d);
    for (auto& x : v) x = static_cast<T>(normal(rng, 0.0, stddev));
    table = Tensor<T>::parameter({n, d}, std::move(v));
  }

  int size() const { return table.rows(); }
  Tensor<T> row(int i) const { return slice_rows(table, i, i + 1); }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    out.push_back({prefix, table, ParamKind::kEmbedding});
  }
};

// [C,H,W] feature map -> [H*W, C] tokens.
template <class T>
Tensor<T> map_to_tokens(const Tensor<T>& x) {
  return transpose(reshape(x, {x.dim(0), x.dim(1) * x.dim(2)}));
}

// [H*W, C] tokens -> [C,H,W] feature map.
template <class T>
Tensor<T> tokens_to_map(const Tensor<T>& t, int h, int w) {
  return reshape(transpose(t), {t.cols(), h, w});
}

}  // namespace mfuse::nn
