#pragma once

// Dense row-major tensors with reverse-mode differentiation.
//
// A Tensor is a cheap handle onto a shared graph node. Ops create new nodes;
// values are never mutated after an op produces them. Only leaves (parameters)
// are updated in place, and only by the optimizer.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <iostream>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

namespace ftfd {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

/// Raised when operand shapes are incompatible. The message names the op and
/// the offending dimension.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

[[noreturn]] inline void shape_fail(std::string_view op, const std::string& what) {
  throw ShapeError(std::string(op) + ": " + what);
}

// Non-fatal diagnostics (e.g. eval-mode batch norm without running statistics).
using WarningHandler = std::function<void(std::string_view)>;

inline WarningHandler& warning_handler() {
  static WarningHandler handler = [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };
  return handler;
}

inline void warn(std::string_view msg) {
  if (warning_handler()) warning_handler()(msg);
}

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

inline bool grad_enabled() { return grad_mode_flag(); }

/// Disables graph recording for its lifetime (inference, optimizer updates).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(grad_mode_flag()) { grad_mode_flag() = false; }
  ~NoGradGuard() { grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;  // null for leaves
  std::string_view op = "leaf";

  bool is_leaf() const { return !backward; }

  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T{0});
    return grad;
  }

  Node& input(std::size_t i) { return *inputs[i]; }
};

template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    if (numel(shape) != values.size()) {
      shape_fail("tensor", "shape " + to_string(shape) + " holds " + std::to_string(numel(shape)) +
                               " values, got " + std::to_string(values.size()));
    }
    for (auto d : shape) {
      if (d == 0) shape_fail("tensor", "zero-sized dimension in " + to_string(shape));
    }
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor full(Shape shape, T v, bool requires_grad = false) {
    const auto n = numel(shape);
    return from(std::move(shape), std::vector<T>(n, v), requires_grad);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), T{0}, requires_grad);
  }

  static Tensor scalar(T v, bool requires_grad = false) { return from({}, {v}, requires_grad); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->value.size(); }

  std::span<const T> data() const { return node_->value; }
  const std::vector<T>& values() const { return node_->value; }
  T operator[](std::size_t i) const { return node_->value[i]; }
  T item() const {
    if (size() != 1) shape_fail("item", "tensor of shape " + to_string(shape()) + " is not a scalar");
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient accumulated by backward(); zeros if nothing reached this tensor.
  std::vector<T> grad() const {
    return has_grad() ? node_->grad : std::vector<T>(size(), T{0});
  }
  void zero_grad() { node_->grad.clear(); }

  /// In-place access for leaves; used by optimizers and initializers only.
  std::span<T> mutable_data() {
    if (!node_->is_leaf()) throw std::logic_error("mutable_data() on a non-leaf tensor");
    return node_->value;
  }

  /// A fresh leaf with the same values and no history.
  Tensor detach() const { return from(shape(), node_->value, false); }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Builds an op output. The backward closure is attached only when recording is
/// enabled and some input requires a gradient.
template <class T>
Tensor<T> make_result(std::string_view op, Shape shape, std::vector<T> values,
                      std::initializer_list<const Tensor<T>*> inputs,
                      std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->op = op;
  bool tracked = false;
  if (grad_enabled()) {
    for (const auto* in : inputs) tracked = tracked || in->requires_grad();
  }
  if (tracked) {
    node->requires_grad = true;
    for (const auto* in : inputs) node->inputs.push_back(in->node_ptr());
    node->backward = std::move(backward);
  }
  return Tensor<T>(std::move(node));
}

template <class T>
Tensor<T> make_result(std::string_view op, Shape shape, std::vector<T> values,
                      const std::vector<Tensor<T>>& inputs, std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->op = op;
  bool tracked = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) tracked = tracked || in.requires_grad();
  }
  if (tracked) {
    node->requires_grad = true;
    for (const auto& in : inputs) node->inputs.push_back(in.node_ptr());
    node->backward = std::move(backward);
  }
  return Tensor<T>(std::move(node));
}

/// Ordered record of the differentiable ops reachable from a root, in
/// topological order (inputs before outputs). Replaying walks it in reverse.
template <class T>
class GradTape {
 public:
  static GradTape record(const Tensor<T>& root) {
    GradTape tape;
    if (!root.requires_grad()) return tape;
    std::unordered_set<const Node<T>*> seen;
    // Iterative post-order DFS; deep graphs would overflow a recursive walk.
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(root.node(), 0);
    seen.insert(root.node());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->inputs.size()) {
        Node<T>* child = node->inputs[next++].get();
        if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
      } else {
        if (!node->is_leaf()) tape.ops_.push_back(node);
        tape.nodes_.push_back(node);
        stack.pop_back();
      }
    }
    tape.root_ = root.node_ptr();
    return tape;
  }

  std::size_t size() const { return ops_.size(); }
  const std::vector<Node<T>*>& ops() const { return ops_; }

  void replay() {
    if (!root_) return;
    for (auto* op : ops_) op->grad.clear();
    root_->grad_buffer()[0] += T{1};
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
      Node<T>* op = *it;
      if (!op->grad.empty()) op->backward(*op);
    }
  }

 private:
  std::shared_ptr<Node<T>> root_;
  std::vector<Node<T>*> ops_;
  std::vector<Node<T>*> nodes_;
};

/// Accumulates d(loss)/d(leaf) into every tracked leaf reachable from `loss`.
template <class T>
void backward(const Tensor<T>& loss) {
  if (loss.size() != 1) {
    shape_fail("backward", "loss must be a scalar, got shape " + to_string(loss.shape()));
  }
  GradTape<T>::record(loss).replay();
}

}  // namespace ftfd
