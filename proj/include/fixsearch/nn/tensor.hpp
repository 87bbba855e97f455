#ifndef FIXSEARCH_NN_TENSOR_HPP
#define FIXSEARCH_NN_TENSOR_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "fixsearch/common.hpp"

namespace fixsearch::nn {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) {
    if (d <= 0) throw ShapeError("non-positive extent in shape");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

namespace detail {

/// Thread-local switch: when false, ops record no graph (inference mode).
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // allocated lazily, same size as values
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::int64_t numel() const { return static_cast<std::int64_t>(values.size()); }

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
};

}  // namespace detail

/// Temporarily disables graph recording (forward-only evaluation).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

/// Dense float64 N-D array with an optional gradient slot. Copying a Tensor
/// copies a handle to shared storage; ops build the autograd graph through
/// these handles.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return from_values(std::move(shape), {}, requires_grad, true);
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    auto t = zeros(std::move(shape), requires_grad);
    for (auto& v : t.node_->values) v = value;
    return t;
  }

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
    return from_values(std::move(shape), std::move(values), requires_grad, false);
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return from({1}, {value}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node()->shape; }
  std::int64_t numel() const { return node()->numel(); }
  std::int64_t dim(std::size_t i) const { return node()->shape.at(i); }

  std::vector<double>& values() { return node()->values; }
  const std::vector<double>& values() const { return node()->values; }
  double* data() { return node()->values.data(); }
  const double* data() const { return node()->values.data(); }

  bool requires_grad() const { return node()->requires_grad; }
  void set_requires_grad(bool rg) {
    if (rg && node()->backward_fn)
      throw UsageError("set_requires_grad: only leaf tensors can be marked");
    node()->requires_grad = rg;
  }

  bool has_grad() const { return node()->grad.size() == node()->values.size(); }

  std::vector<double>& grad() {
    node()->ensure_grad();
    return node()->grad;
  }
  const std::vector<double>& grad() const {
    node()->ensure_grad();
    return node()->grad;
  }

  void zero_grad() {
    node()->ensure_grad();
    std::fill(node()->grad.begin(), node()->grad.end(), 0.0);
  }

  double item() const {
    if (numel() != 1) throw UsageError("item: tensor has " + std::to_string(numel()) + " elements");
    return node()->values[0];
  }

  /// Reverse-mode sweep from a scalar. Gradients accumulate into every
  /// reachable tensor with requires_grad; repeated calls without zero_grad
  /// keep accumulating.
  void backward() const {
    if (numel() != 1) throw UsageError("backward: loss must be scalar, shape " + shape_str(shape()));
    // Iterative post-order topological sort over parents.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, child] = stack.back();
      if (child < n->parents.size()) {
        detail::Node* p = n->parents[child].get();
        ++child;
        if (visited.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    // Interior (non-leaf) gradients are scratch space for this sweep; only
    // leaf tensors accumulate across repeated backward calls.
    for (detail::Node* n : order)
      if (n->backward_fn) {
        n->ensure_grad();
        std::fill(n->grad.begin(), n->grad.end(), 0.0);
      }
    node_->ensure_grad();
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      detail::Node* n = *it;
      if (n->backward_fn) n->backward_fn(*n);
    }
  }

  std::shared_ptr<detail::Node> node_ptr() const { return node_; }

  /// Builds a result tensor wired into the graph. parents and backward_fn are
  /// dropped when grad recording is off or no parent needs gradients.
  static Tensor make_op(Shape shape, std::vector<double> values,
                        std::vector<std::shared_ptr<detail::Node>> parents,
                        std::function<void(detail::Node&)> backward_fn) {
    Tensor t = from_values(std::move(shape), std::move(values), false, false);
    bool needs = false;
    if (detail::grad_mode())
      for (const auto& p : parents)
        if (p->requires_grad || p->backward_fn) needs = true;
    if (needs) {
      t.node_->requires_grad = true;
      t.node_->parents = std::move(parents);
      t.node_->backward_fn = std::move(backward_fn);
    }
    return t;
  }

 private:
  static Tensor from_values(Shape shape, std::vector<double> values, bool requires_grad, bool zero) {
    const std::int64_t n = shape_numel(shape);
    if (zero) values.assign(static_cast<std::size_t>(n), 0.0);
    else if (static_cast<std::int64_t>(values.size()) != n)
      throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                       shape_str(shape));
    Tensor t;
    t.node_ = std::make_shared<detail::Node>();
    t.node_->shape = std::move(shape);
    t.node_->values = std::move(values);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  const std::shared_ptr<detail::Node>& node() const {
    if (!node_) throw UsageError("use of undefined Tensor");
    return node_;
  }

  std::shared_ptr<detail::Node> node_;
};

}  // namespace fixsearch::nn

#endif  // FIXSEARCH_NN_TENSOR_HPP
