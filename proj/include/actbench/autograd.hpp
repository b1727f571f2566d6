#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "actbench/tensor.hpp"

namespace actbench {

/// What a learnable buffer is for. Activation parameters are tracked apart
/// from weights so that swapping the activation can be checked not to alter
/// the weight layout.
enum class ParamRole { kWeight, kBias, kNorm, kActivation };

/// A learnable tensor owned by a model, with its accumulated gradient.
struct Parameter {
  std::string name;
  ParamRole role = ParamRole::kWeight;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string name, ParamRole role, Tensor value);

  void zero_grad() { grad.fill(0.0); }
};

using NodeId = std::size_t;

/// Linear record of one forward pass.
///
/// Nodes are appended in evaluation order, so every input id of node k is
/// smaller than k and a reverse sweep over the ids is a valid reverse
/// topological order. A tape is single-use scratch: build it, call
/// backward() at most once, then discard or clear() it.
class Tape {
 public:
  /// Called during backward with the node's own id; reads the node's output
  /// gradient and accumulates into its inputs' gradients.
  using BackwardFn = std::function<void(Tape&, NodeId)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  /// Leaf that never receives a gradient.
  NodeId constant(Tensor value);
  /// Leaf whose gradient stays on the tape (see grad()).
  NodeId variable(Tensor value);
  /// Leaf bound to a model parameter; backward adds into `param.grad`.
  /// The parameter must outlive the tape.
  NodeId parameter(Parameter& param);

  /// Appends an operation result. The node requires grad when any input
  /// does; `backward_fn` is dropped otherwise, and always when the tape was
  /// created with gradients disabled.
  NodeId record(std::string op, Tensor value, std::vector<NodeId> inputs, BackwardFn backward_fn);

  const Tensor& value(NodeId id) const { return node(id).value; }
  bool requires_grad(NodeId id) const { return node(id).requires_grad; }
  const std::string& op(NodeId id) const { return node(id).op; }
  const std::vector<NodeId>& inputs(NodeId id) const { return node(id).inputs; }
  std::size_t size() const { return nodes_.size(); }
  bool grad_enabled() const { return grad_enabled_; }

  /// Gradient buffer of a node, zero-initialised on first access.
  std::span<double> grad(NodeId id);
  /// Gradient of a node after backward(); empty if none reached it.
  std::span<const double> grad_or_empty(NodeId id) const;

  /// Reverse-mode sweep from a one-element node. Gradients sum over fan-out.
  void backward(NodeId loss);

  /// Ids whose backward function ran during the last backward(), in order.
  const std::vector<NodeId>& last_backward_order() const { return visit_order_; }

  void clear();

 private:
  struct Node {
    std::string op;
    Tensor value;
    std::vector<double> grad;
    std::vector<NodeId> inputs;
    BackwardFn backward_fn;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  const Node& node(NodeId id) const;
  Node& node(NodeId id);

  std::vector<Node> nodes_;
  std::vector<NodeId> visit_order_;
  bool grad_enabled_;
};

}  // namespace actbench
