#pragma once

#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "morphctl/numerics/param_store.hpp"
#include "morphctl/numerics/tensor.hpp"

namespace morphctl {

class Tape;

// Handle to a node recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& value() const;
  bool valid() const { return tape != nullptr && id >= 0; }
};

// Receives the output gradient and one gradient slot per declared input.
// A slot is null when that input does not require a gradient.
using BackwardFn =
    std::function<void(const Tensor& grad_out, std::span<Tensor* const> grad_in)>;

// Records one forward pass. Nodes are appended in evaluation order, so the
// reverse of the node list is a valid reverse topological order.
class Tape {
 public:
  // With record_grad = false no backward closures are kept (inference).
  explicit Tape(bool record_grad = true) : record_grad_(record_grad) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf bound to a stored parameter; backward adds into its grad.
  Var param(ParamStore& store, ParamId id);
  Var param(ParamStore& store, const std::string& name) {
    return param(store, store.id(name));
  }

  Var record(Tensor value, std::vector<int> inputs, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  const Tensor& value(int id) const { return nodes_[id].value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  bool recording() const { return record_grad_; }
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 for a one-element loss and propagates to every
  // parameter leaf. Parameter gradients accumulate; call zero_grad to reset.
  void backward(Var loss);

 private:
  struct Node {
    Tensor value;
    std::vector<int> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    ParamStore* store = nullptr;
    ParamId param = 0;
  };
  std::deque<Node> nodes_;  // stable references across appends
  bool record_grad_;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

}  // namespace morphctl
