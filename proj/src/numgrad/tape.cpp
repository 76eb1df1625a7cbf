#include "querynet/numgrad/tape.hpp"

namespace querynet::numgrad {

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, true});
  return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false});
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  bool tracked = false;
  for (const Var& in : inputs) {
    if (in.tape != this) throw std::invalid_argument("tape: operand recorded on a different tape");
    tracked = tracked || nodes_[in.id].requires_grad;
  }
  Node node{std::move(value), {}, {}, tracked};
  if (tracked) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad(std::size_t id) {
  Node& node = nodes_.at(id);
  if (node.grad.shape() != node.value.shape() || node.grad.size() != node.value.size()) {
    node.grad = Tensor(node.value.shape(), 0.0f);
  }
  return node.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw std::invalid_argument("tape: loss belongs to a different tape");
  if (nodes_.at(loss.id).value.size() != 1) {
    throw NonScalarLoss("backward: loss must be scalar, got shape " + shape_string(nodes_[loss.id].value.shape()));
  }
  for (Node& node : nodes_) node.grad = Tensor();
  grad(loss.id)[0] = 1.0f;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.backward || node.grad.size() == 0) continue;
    node.backward(*this, id);
  }
}

}  // namespace querynet::numgrad
