#pragma once

#include <functional>
#include <vector>

#include "sokd/tensor.hpp"

namespace sokd {

// Eager reverse-mode autodiff tape. Each op computes its value immediately
// and records a pullback; backward() walks the tape in reverse and
// accumulates exact gradients into the registered Parameters.
//
// Supported primitives: matmul, add (same-shape or row-broadcast), relu,
// log, exp, row-wise softmax, elementwise multiply, scale-by-constant,
// mean, sum, square, absolute value, max-reduction.
class Tape {
 public:
  using Id = std::size_t;

  // Leaf with no gradient tracking.
  Id constant(Tensor value);
  // Leaf bound to a Parameter; backward() accumulates into p.gradient.
  Id param(Parameter& p);

  // a: (m x k), b: (k x n) -> (m x n)
  Id matmul(Id a, Id b);
  // same shape, or b a length-cols(a) vector broadcast to every row of a
  Id add(Id a, Id b);
  Id sub(Id a, Id b) { return add(a, scale(b, -1.0)); }
  Id relu(Id a);
  Id log(Id a);
  Id exp(Id a);
  // row-wise softmax with max subtraction; vectors are treated as one row
  Id softmax(Id a);
  Id mul(Id a, Id b);            // elementwise, same shape
  Id scale(Id a, double c);      // elementwise multiply by a constant scalar
  Id mean(Id a);                 // scalar
  Id sum(Id a);                  // scalar
  Id square(Id a);
  Id abs(Id a);
  Id max_reduce(Id a);           // scalar; subgradient to the lowest-index max

  const Tensor& value(Id id) const { return nodes_[id].value; }

  // Seeds d(loss)/d(loss) = 1 and propagates; returns the scalar loss value.
  // Gradients are accumulated (+=) into each bound Parameter's .gradient.
  double backward(Id loss);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    Parameter* bound = nullptr;
    std::function<void(Tape&, Node&)> pullback;  // null for leaves
  };

  Id push(Tensor value, bool needs_grad, std::function<void(Tape&, Node&)> pb);
  Node& node(Id id) { return nodes_[id]; }

  std::vector<Node> nodes_;
};

}  // namespace sokd
