#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "scl/tensor.hpp"

namespace scl {

using NodeId = int32_t;

// Define-by-run tape. Nodes are appended in topological order (every input
// precedes its consumers) and backward() walks them once in reverse. A node
// may carry a gradient hook; when present it replaces the chain-rule
// backward for that node's inputs. Hooks are the single extension point the
// masking pipeline uses to redefine gradients.
class Graph {
 public:
  struct Node;
  using BackwardFn = std::function<void(Graph&, Node&)>;

  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<NodeId> inputs;
    BackwardFn backward;
    BackwardFn hook;
    const char* op = "leaf";
  };

  NodeId leaf(Tensor value);

  NodeId add(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, float s);
  NodeId relu(NodeId x);
  NodeId matmul(NodeId a, NodeId b);
  NodeId transpose(NodeId a);
  NodeId concat_cols(NodeId a, NodeId b);
  NodeId sum(NodeId x);
  NodeId conv2d(NodeId input, NodeId kernel, int stride, int padding);
  // Mean of -log softmax(logits)[label] over the batch, max-stabilized.
  NodeId cross_entropy(NodeId logits, std::vector<int> labels);
  // Mean of squared differences over all elements.
  NodeId mse(NodeId pred, NodeId target);
  // w = w_tilde (.) H(m_tilde). Default backward is the plain chain rule
  // (grad masked onto w_tilde, nothing onto m_tilde); masked layers install
  // a hook that redefines both input gradients.
  NodeId masked_weight(NodeId w_tilde, NodeId m_tilde);

  // Escape hatch for layer-defined nodes (batch norm).
  NodeId custom(Tensor value, std::vector<NodeId> inputs, BackwardFn backward, const char* op);

  void set_hook(NodeId id, BackwardFn hook);

  // Populates grad for every node the loss depends on. Loss must be scalar.
  void backward(NodeId loss);

  const Tensor& value(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }
  const Tensor& grad(NodeId id) const { return nodes_[static_cast<size_t>(id)].grad; }
  Node& node(NodeId id) { return nodes_[static_cast<size_t>(id)]; }
  size_t size() const { return nodes_.size(); }

  // Accumulates g into the input's gradient buffer, allocating on first use.
  void accumulate(NodeId id, const Tensor& g);

 private:
  NodeId push(Node n);
  // Deque keeps node references stable while ops append.
  std::deque<Node> nodes_;
};

// Central difference (f(x+h*e_i) - f(x-h*e_i)) / (2h) per element. The
// verification oracle for every backward implementation. The quotient uses
// the realized float steps in double so the oracle's own error stays far
// below the evaluation noise of f.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, float h);

}  // namespace scl
