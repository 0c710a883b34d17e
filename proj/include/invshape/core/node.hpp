#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "invshape/core/array.hpp"

namespace invshape {

namespace detail {

struct NodeData;
using NodePtr = std::shared_ptr<NodeData>;

// Pushes `self.grad` into the gradients of `self.parents`.
using BackwardFn = std::function<void(NodeData& self)>;

struct NodeData {
  Array value;
  Array grad;
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  BackwardFn backward;

  Array& grad_buffer() {
    if (grad.empty() && value.size() != 0) grad = Array(value.shape());
    return grad;
  }
};

}  // namespace detail

/// Handle to a value in the computation graph. Copies share the node.
class Node {
 public:
  Node() = default;

  static Node constant(Array value) { return Node(std::move(value), false); }
  static Node variable(Array value) { return Node(std::move(value), true); }

  bool valid() const { return static_cast<bool>(d_); }
  const Array& value() const { return d_->value; }
  const Shape& shape() const { return d_->value.shape(); }
  std::size_t size() const { return d_->value.size(); }
  bool requires_grad() const { return d_->requires_grad; }

  bool has_grad() const { return !d_->grad.empty(); }
  /// Accumulated gradient; zeros of the value shape if none was propagated.
  const Array& grad() const { return d_->grad_buffer(); }
  void zero_grad() { d_->grad = Array(); }

  /// Leaf-only mutation hooks used by optimizers and initializers.
  Array& mutable_value() { return d_->value; }
  Array& mutable_grad() { return d_->grad_buffer(); }
  void set_requires_grad(bool flag) { d_->requires_grad = flag; }

  const detail::NodePtr& data() const { return d_; }

  /// Builds an interior node. Parents that do not require gradients are
  /// dropped from the graph; if none require them the result is a constant.
  static Node make(Array value, std::vector<Node> parents,
                   detail::BackwardFn backward) {
    Node out(std::move(value), false);
    bool any = false;
    for (const Node& p : parents) any = any || p.requires_grad();
    if (any) {
      out.d_->requires_grad = true;
      out.d_->parents.reserve(parents.size());
      for (const Node& p : parents) out.d_->parents.push_back(p.d_);
      out.d_->backward = std::move(backward);
    }
    return out;
  }

 private:
  Node(Array value, bool requires_grad)
      : d_(std::make_shared<detail::NodeData>()) {
    d_->value = std::move(value);
    d_->requires_grad = requires_grad;
  }

  detail::NodePtr d_;
};

/// Reverse-mode sweep from a scalar output. Gradients accumulate into every
/// ancestor that requires them; leaves keep theirs until zero_grad().
inline void backward(const Node& output) {
  if (output.size() != 1)
    fail<ShapeError>("backward: output must be scalar, got shape ",
                     shape_str(output.shape()));
  if (!output.requires_grad()) return;

  // Iterative post-order DFS yields a topological order.
  std::vector<detail::NodeData*> order;
  std::unordered_set<detail::NodeData*> seen;
  std::vector<std::pair<detail::NodeData*, std::size_t>> stack;
  stack.emplace_back(output.data().get(), 0);
  seen.insert(output.data().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::NodeData* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second)
        stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  output.data()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::NodeData* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

}  // namespace invshape
