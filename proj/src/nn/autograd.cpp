#include "catseq/nn/autograd.hpp"

#include <unordered_set>

#include "catseq/error.hpp"

namespace catseq::nn {

Tensor& Node::ensure_grad() {
  if (!grad.same_shape(value)) {
    grad = Tensor(value.shape(), 0.0);
  }
  return grad;
}

Var Var::constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var Var::parameter(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->ensure_grad();
  return Var(std::move(node));
}

void Var::zero_grad() {
  if (node_) {
    node_->ensure_grad().fill(0.0);
  }
}

void Var::backward() {
  if (!node_) {
    fail(ErrorKind::kInvalidArgument, "backward on an undefined variable");
  }
  if (node_->value.size() != 1) {
    fail(ErrorKind::kInvalidArgument, "backward needs a scalar, got shape " +
                                          shape_string(node_->value.shape()));
  }
  if (!node_->requires_grad) {
    return;
  }
  // Iterative post-order DFS gives a topological order of the subgraph.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  node_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward) {
      node->ensure_grad();
      node->backward(*node);
    }
  }
}

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const auto& p : parents) {
    if (p.requires_grad()) {
      node->requires_grad = true;
    }
  }
  if (node->requires_grad) {
    node->parents.reserve(parents.size());
    for (auto& p : parents) {
      node->parents.push_back(p.node());
    }
    node->backward = std::move(backward);
  }
  return Var(std::move(node));
}

}  // namespace catseq::nn
