#include "actbench/autograd.hpp"

#include <algorithm>

#include "actbench/errors.hpp"

namespace actbench {

Parameter::Parameter(std::string name, ParamRole role, Tensor value)
    : name(std::move(name)), role(role), value(std::move(value)) {
  grad = Tensor(this->value.shape(), 0.0);
}

const Tape::Node& Tape::node(NodeId id) const {
  if (id >= nodes_.size()) throw ContractError("tape node id " + std::to_string(id) + " out of range");
  return nodes_[id];
}

Tape::Node& Tape::node(NodeId id) {
  if (id >= nodes_.size()) throw ContractError("tape node id " + std::to_string(id) + " out of range");
  return nodes_[id];
}

NodeId Tape::constant(Tensor value) {
  nodes_.push_back(Node{"constant", std::move(value), {}, {}, {}, nullptr, false});
  return nodes_.size() - 1;
}

NodeId Tape::variable(Tensor value) {
  nodes_.push_back(Node{"variable", std::move(value), {}, {}, {}, nullptr, grad_enabled_});
  return nodes_.size() - 1;
}

NodeId Tape::parameter(Parameter& param) {
  nodes_.push_back(Node{"parameter", param.value, {}, {}, {}, &param, grad_enabled_});
  return nodes_.size() - 1;
}

NodeId Tape::record(std::string op, Tensor value, std::vector<NodeId> inputs, BackwardFn backward_fn) {
  const NodeId self = nodes_.size();
  bool needs = false;
  for (NodeId in : inputs) {
    if (in >= self) throw ContractError("op '" + op + "' refers to a node that does not precede it");
    needs = needs || nodes_[in].requires_grad;
  }
  needs = needs && grad_enabled_;
  if (!needs) backward_fn = nullptr;
  nodes_.push_back(Node{std::move(op), std::move(value), {}, std::move(inputs), std::move(backward_fn), nullptr, needs});
  return self;
}

std::span<double> Tape::grad(NodeId id) {
  Node& n = node(id);
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

std::span<const double> Tape::grad_or_empty(NodeId id) const { return node(id).grad; }

void Tape::backward(NodeId loss) {
  Node& root = node(loss);
  if (root.value.size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + shape_to_string(root.value.shape()));
  }
  visit_order_.clear();
  if (!root.requires_grad) return;
  grad(loss)[0] += 1.0;
  for (NodeId k = loss + 1; k-- > 0;) {
    Node& n = nodes_[k];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.param != nullptr) {
      auto& dst = n.param->grad.storage();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
    }
    if (n.backward_fn) {
      visit_order_.push_back(k);
      n.backward_fn(*this, k);
    }
  }
}

void Tape::clear() {
  nodes_.clear();
  visit_order_.clear();
}

}  // namespace actbench
