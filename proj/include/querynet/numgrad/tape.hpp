#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include "querynet/numgrad/tensor.hpp"

namespace querynet::numgrad {

class NonScalarLoss : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Reverse-mode record of primitive applications.
///
/// Nodes are appended in evaluation order, so every input id is smaller than
/// the id of the node consuming it. backward() walks ids in decreasing order,
/// which guarantees a node's adjoint is complete before it is propagated.
/// Nodes that do not depend on any gradient-tracked leaf keep no backward
/// closure, so inference through constant parameters costs nothing extra.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  /// Leaf whose gradient is tracked (inputs and trainable parameters).
  Var variable(Tensor value);
  /// Leaf excluded from differentiation.
  Var constant(Tensor value);
  /// Output of a primitive applied to `inputs`.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  /// Adjoint accumulator of a node; allocated as zeros on first access.
  Tensor& grad(std::size_t id);
  const Tensor& grad(Var v) { return grad(v.id); }

  /// Seeds d(loss)/d(loss) = 1 and propagates adjoints to every tracked leaf.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->value(id); }

}  // namespace querynet::numgrad
