#pragma once

// Dense row-major tensors with a define-by-run reverse-mode tape.
//
// A Tensor is a cheap handle to a shared Node. Ops (see ops.hpp) record a
// backward closure on their output when gradients are enabled and at least
// one input requires them. Calling backward() on a scalar walks the graph in
// reverse topological order and accumulates into Node::grad.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "motionfuse/core/error.hpp"

namespace mfuse {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::int64_t{1},
                         [](std::int64_t a, int b) { return a * b; });
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

template <class T>
struct Node {
  std::vector<T> value;
  std::vector<T> grad;
  Shape shape;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  T* grad_data() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad.data();
  }
};

namespace detail {
inline thread_local bool g_grad_enabled = true;
}

inline bool grad_enabled() { return detail::g_grad_enabled; }

class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::g_grad_enabled) { detail::g_grad_enabled = false; }
  ~NoGradGuard() { detail::g_grad_enabled = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <class T>
class Tensor {
 public:
  using Scalar = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0)) : node_(std::make_shared<Node<T>>()) {
    node_->value.assign(static_cast<std::size_t>(shape_numel(shape)), fill);
    node_->shape = std::move(shape);
  }

  Tensor(Shape shape, std::vector<T> values) : node_(std::make_shared<Node<T>>()) {
    check(static_cast<std::int64_t>(values.size()) == shape_numel(shape),
          ErrorCode::kShapeMismatch, "tensor: ", values.size(),
          " values for shape ", shape_str(shape));
    node_->value = std::move(values);
    node_->shape = std::move(shape);
  }

  static Tensor parameter(Shape shape, std::vector<T> values) {
    Tensor t(std::move(shape), std::move(values));
    t.node_->requires_grad = true;
    return t;
  }

  static Tensor from_node(std::shared_ptr<Node<T>> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape.at(static_cast<std::size_t>(i < 0 ? rank() + i : i)); }
  std::int64_t numel() const { return static_cast<std::int64_t>(node_->value.size()); }
  int rows() const { return dim(0); }
  int cols() const { return rank() >= 2 ? dim(1) : 1; }

  const T* data() const { return node_->value.data(); }
  // Mutating values of a tensor that is already part of a recorded graph
  // invalidates that graph; only do it on leaves between steps.
  T* mutable_data() { return node_->value.data(); }
  std::span<const T> values() const { return node_->value; }
  std::span<T> mutable_values() { return node_->value; }
  const std::vector<T>& vec() const { return node_->value; }

  T operator[](std::int64_t i) const { return node_->value[static_cast<std::size_t>(i)]; }
  T at(int r, int c) const { return node_->value[static_cast<std::size_t>(r) * cols() + c]; }
  T item() const {
    check(numel() == 1, ErrorCode::kShapeMismatch, "item() on tensor of shape ",
          shape_str(shape()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool r) { node_->requires_grad = r; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<T> grad() { return {node_->grad_data(), node_->value.size()}; }
  std::span<const T> grad() const { return {node_->grad_data(), node_->value.size()}; }
  void zero_grad() { node_->grad.clear(); }

  // Copy of the values with no history.
  Tensor detach() const { return Tensor(shape(), node_->value); }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

  void backward() const {
    check(numel() == 1, ErrorCode::kShapeMismatch,
          "backward() requires a scalar, got ", shape_str(shape()));
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->inputs.size()) {
        Node<T>* child = n->inputs[next++].get();
        if (child->requires_grad && seen.insert(child).second) stack.push_back({child, 0});
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    node_->grad_data()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<T>* n = *it;
      if (n->backward && !n->grad.empty()) n->backward(*n);
    }
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Builds an op output, recording `bw` only when some input needs a gradient.
template <class T, class Backward>
Tensor<T> make_result(Shape shape, std::vector<T> value,
                      std::initializer_list<const Tensor<T>*> inputs, Backward&& bw) {
  Tensor<T> out(std::move(shape), std::move(value));
  if (!grad_enabled()) return out;
  bool any = false;
  for (const Tensor<T>* in : inputs)
    if (in && in->defined() && in->requires_grad()) any = true;
  if (!any) return out;
  Node<T>* n = out.node();
  n->requires_grad = true;
  for (const Tensor<T>* in : inputs)
    if (in && in->defined()) n->inputs.push_back(in->node_ptr());
  n->backward = std::forward<Backward>(bw);
  return out;
}

template <class T, class Backward>
Tensor<T> make_result_v(Shape shape, std::vector<T> value,
                        const std::vector<Tensor<T>>& inputs, Backward&& bw) {
  Tensor<T> out(std::move(shape), std::move(value));
  if (!grad_enabled()) return out;
  bool any = std::any_of(inputs.begin(), inputs.end(),
                         [](const Tensor<T>& t) { return t.requires_grad(); });
  if (!any) return out;
  Node<T>* n = out.node();
  n->requires_grad = true;
  for (const auto& in : inputs) n->inputs.push_back(in.node_ptr());
  n->backward = std::forward<Backward>(bw);
  return out;
}

}  // namespace mfuse
