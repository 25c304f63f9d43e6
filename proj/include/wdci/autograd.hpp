#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "wdci/tensor.hpp"

WDCI_NAMESPACE_BEGIN

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of the dynamically recorded computation graph.
struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward;

  /// Gradient buffer, zero-initialised on first use.
  Tensor& grad_buffer();
};

/// Handle to a graph node. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  /// Direct access for optimizer updates; not recorded.
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  Tensor& grad_buffer() { return node_->grad_buffer(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  const Shape& shape() const { return node_->value.shape(); }
  real item() const { return node_->value.item(); }
  void zero_grad() { node_->grad = Tensor(); }

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

/// Reverse-mode sweep from a scalar root. Leaf gradients accumulate;
/// intermediate gradients are released once consumed.
void backward(const Var& root);

bool grad_enabled();

/// Disables graph recording for its lifetime (per thread).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Wraps an op result. `fn` receives the result node and must accumulate
/// into the grad buffers of those parents that require gradients. Nothing is
/// recorded when no input requires a gradient or recording is disabled.
Var make_result(Tensor value, const std::vector<Var>& inputs, std::function<void(Node&)> fn);

WDCI_NAMESPACE_END
