#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "catseq/nn/tensor.hpp"

namespace catseq::nn {

/// One value in a computation graph. Ops record their parents and a closure
/// that pushes the node's gradient back into them.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Tensor& ensure_grad();
};

/// Shared handle to a graph node. Copies alias the same node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Tensor value);
  static Var parameter(Tensor value);

  bool defined() const noexcept { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  Tensor& grad() { return node_->ensure_grad(); }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  const std::shared_ptr<Node>& node() const noexcept { return node_; }

  void zero_grad();
  /// Reverse-mode sweep from a scalar. Gradients accumulate into every
  /// reachable node that requires them.
  void backward();

 private:
  std::shared_ptr<Node> node_;
};

/// Builds an op result. requires_grad is inherited from the parents; the
/// backward closure is dropped when no parent needs a gradient.
Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward);

}  // namespace catseq::nn
