#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "tcm/array.hpp"

namespace tcm {

// Define-by-run reverse-mode autodiff over Array values.
//
// A Tape records primitive operations in topological order (parents always
// precede children). backward() walks the record once in reverse and
// accumulates gradients into every node that is reachable from a parameter
// leaf. StopGrad nodes cut the flow: nothing behind them receives gradient.
//
// Single-owner: a Tape must not be shared across threads while it is being
// built or differentiated.
class Tape {
 public:
  using NodeId = std::int32_t;

  enum class Op : std::uint8_t {
    kConst,
    kParam,
    kStopGrad,
    kMatmul,
    kAdd,
    kSub,
    kMul,
    kScale,       // a * k
    kAddScalar,   // a + k
    kAddRowVec,   // [m x n] + [n]
    kMulColVec,   // [m x n] .* [m x 1]
    kSqrt,
    kSqrtSafe,    // allows zero input; subgradient 0 at exactly zero
    kSilu,
    kTanh,
    kSumRows,     // [m x n] -> [m x 1]
    kReduceMean,  // -> [1]
    kConcatCols,  // [m x n1] ++ [m x n2]
  };

  NodeId constant(Array v);
  NodeId param(Array v);
  NodeId stop_grad(NodeId a);

  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double k);
  NodeId add_scalar(NodeId a, double k);
  NodeId add_rowvec(NodeId a, NodeId b);
  NodeId mul_colvec(NodeId a, NodeId b);
  NodeId sqrt(NodeId a);
  NodeId sqrt_safe(NodeId a);
  NodeId silu(NodeId a);
  NodeId tanh(NodeId a);
  NodeId sum_rows(NodeId a);
  NodeId reduce_mean(NodeId a);
  NodeId concat_cols(NodeId a, NodeId b);

  const Array& value(NodeId id) const { return values_[static_cast<std::size_t>(id)]; }
  const Array& grad(NodeId id) const;

  // root must hold exactly one element.
  void backward(NodeId root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Op op;
    NodeId a = -1;
    NodeId b = -1;
    double k = 0.0;
    bool needs_grad = false;
  };

  NodeId push(Node n, Array v);
  Array& grad_mut(NodeId id) { return grads_[static_cast<std::size_t>(id)]; }

  std::vector<Node> nodes_;
  std::vector<Array> values_;
  std::vector<Array> grads_;
};

// Max over parameter coordinates of |analytic - central difference| /
// max(1, |analytic|). `build` must construct the loss for the given
// parameter values from scratch each call (the tape is rebuilt).
double grad_check(
    const std::function<Tape::NodeId(Tape&, const std::vector<Tape::NodeId>&)>& build,
    const std::vector<Array>& params, double step);

}  // namespace tcm
