#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "wrnlab/tensor.hpp"

namespace wrnlab {

using NodeId = std::size_t;

// Reverse-mode recording of primitive operations. Nodes are appended in
// evaluation order, so index order is a topological order and the backward
// sweep simply walks indices downward from the root.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, NodeId)>;

  NodeId leaf(BasicTensor<T> value, bool requires_grad, std::string label = "leaf") {
    nodes_.push_back(Node{std::move(label), std::move(value), {}, requires_grad, {}, {}});
    return nodes_.size() - 1;
  }

  // The new node requires a gradient iff any parent does; when none does the
  // backward closure is dropped.
  NodeId record(std::string op, BasicTensor<T> value, std::vector<NodeId> parents, BackwardFn backward) {
    bool needs = false;
    for (NodeId p : parents) needs = needs || nodes_.at(p).requires_grad;
    nodes_.push_back(Node{std::move(op), std::move(value), {}, needs, std::move(parents),
                          needs ? std::move(backward) : BackwardFn{}});
    return nodes_.size() - 1;
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  const BasicTensor<T>& value(NodeId id) const { return nodes_.at(id).value; }
  const std::string& op(NodeId id) const { return nodes_.at(id).op; }
  const std::vector<NodeId>& parents(NodeId id) const { return nodes_.at(id).parents; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
  bool has_grad(NodeId id) const { return !nodes_.at(id).grad.empty(); }

  // Gradient accumulator for a node, allocated as zeros on first access.
  BasicTensor<T>& grad(NodeId id) {
    Node& n = nodes_.at(id);
    if (n.grad.empty()) n.grad = BasicTensor<T>::zeros_like(n.value);
    return n.grad;
  }

  // Seeds d(root)/d(root) = 1 and propagates to every node that requires a
  // gradient. Each reachable node's closure runs exactly once.
  void backward(NodeId root) {
    if (root >= nodes_.size()) throw Error("backward: root node does not exist");
    if (nodes_[root].value.numel() != 1) {
      throw Error("backward: root node '" + nodes_[root].op + "' is not a scalar (shape " +
                  shape_string(nodes_[root].value.shape()) + ")");
    }
    for (auto& n : nodes_) n.grad = BasicTensor<T>{};
    visit_order_.clear();
    if (!nodes_[root].requires_grad) return;
    grad(root)[0] = T{1};
    for (NodeId i = root + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty()) continue;
      visit_order_.push_back(i);
      if (n.backward) n.backward(*this, i);
    }
  }

  const std::vector<NodeId>& last_visit_order() const noexcept { return visit_order_; }

 private:
  struct Node {
    std::string op;
    BasicTensor<T> value;
    BasicTensor<T> grad;
    bool requires_grad = false;
    std::vector<NodeId> parents;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::vector<NodeId> visit_order_;
};

}  // namespace wrnlab
