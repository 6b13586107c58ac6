#include "morphctl/numerics/tape.hpp"

namespace morphctl {

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false, nullptr, 0});
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::param(ParamStore& store, ParamId id) {
  nodes_.push_back(Node{store[id].value, {}, {}, record_grad_, &store, id});
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::record(Tensor value, std::vector<int> inputs, BackwardFn backward) {
  bool needs = false;
  if (record_grad_) {
    for (int in : inputs) needs = needs || nodes_[in].requires_grad;
  }
  Node node{std::move(value), {}, {}, needs, nullptr, 0};
  if (needs) {
    node.inputs = std::move(inputs);
    node.backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw std::invalid_argument("backward: variable from another tape");
  if (nodes_[loss.id].value.size() != 1) {
    throw ShapeError("backward requires a one-element loss, got shape " +
                     shape_string(nodes_[loss.id].value.shape()));
  }
  if (!nodes_[loss.id].requires_grad) return;

  std::vector<Tensor> grads(nodes_.size());
  grads[loss.id] = Tensor(nodes_[loss.id].value.shape(), 1.0);

  std::vector<Tensor*> slots;
  for (int i = loss.id; i >= 0; --i) {
    Node& node = nodes_[i];
    if (!node.requires_grad || grads[i].empty()) continue;
    if (node.store != nullptr) {
      Tensor& acc = (*node.store)[node.param].grad;
      const Tensor& g = grads[i];
      for (std::size_t k = 0; k < g.size(); ++k) acc[k] += g[k];
      continue;
    }
    slots.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const int in = node.inputs[k];
      if (!nodes_[in].requires_grad) continue;
      if (grads[in].empty()) grads[in] = Tensor(nodes_[in].value.shape(), 0.0);
      slots[k] = &grads[in];
    }
    node.backward(grads[i], slots);
    grads[i] = Tensor();
  }
}

}  // namespace morphctl
