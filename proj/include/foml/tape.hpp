#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "foml/tensor.hpp"

namespace foml {

enum class Op : std::uint8_t {
  Leaf,
  Constant,
  Add,
  Sub,
  Mul,
  Scale,
  AddScalar,
  ScaleBy,
  Square,
  Pow,
  Abs,
  Sign,
  Relu,
  Step,
  Sigmoid,
  Sum,
  Mean,
  Fill,
  MatMul,
  Transpose,
  AddBias,
  BiasSum,
  BiasBroadcast,
  Reshape,
  Softmax,
  RowSumBroadcast,
  SoftmaxCrossEntropy,
  BinaryCrossEntropy,
  Conv2d,
  Conv2dInputGrad,
  Conv2dWeightGrad,
  PoolGather,
  PoolScatter,
  AvgPool,
  AvgPoolGrad,
  Custom,
};

std::string_view op_name(Op op);

// Handle to a value recorded on a Tape.
struct Var {
  int id = -1;
  friend bool operator==(Var, Var) = default;
};

// Elementwise op supplied by the caller. Only first derivatives are known, so
// a recorded gradient cannot be taken through it.
struct CustomUnary {
  std::string name;
  std::function<double(double)> f;
  std::function<double(double)> df;
};

struct NodeInfo {
  Op op = Op::Constant;
  int in0 = -1;
  int in1 = -1;
  double attr = 0.0;  // scale factor, scalar offset, exponent, or kernel size
  Shape aux;          // target / source shape for shape-changing ops
  std::size_t axis = 0;
  std::shared_ptr<const std::vector<std::size_t>> index;
  std::shared_ptr<const CustomUnary> custom;
  bool requires_grad = false;
  bool recompute_index = false;
};

// Wengert list of primitive operations. Nodes are appended in execution order,
// so every node's inputs precede it. Any value that is not a Constant and
// descends from a Leaf is differentiable.
//
// Non-finite results raise NumericError naming the offending node.
class Tape {
 public:
  Var leaf(Tensor value);
  Var constant(Tensor value);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  Var scale_by(Var a, Var scalar);
  Var square(Var a);
  // a^p; the convention 0^p = 0 for p < 0 keeps derivatives of sqrt at 0 finite.
  Var pow(Var a, double p);
  Var sqrt(Var a) { return pow(a, 0.5); }
  Var abs(Var a);
  Var relu(Var a);
  Var sigmoid(Var a);
  Var sum(Var a);
  Var mean(Var a);
  Var fill(Var scalar, Shape shape);
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var add_bias(Var x, Var b, std::size_t axis);
  Var reshape(Var a, Shape shape);
  Var softmax(Var z);
  Var softmax_cross_entropy(Var logits, Var targets);
  Var binary_cross_entropy(Var logits, Var targets);
  Var conv2d(Var x, Var w);
  Var max_pool(Var x);
  Var avg_pool(Var x);
  Var custom(std::shared_ptr<const CustomUnary> op, Var a);

  // Internal primitives that appear in backward graphs; public so that
  // recorded gradients can be built and inspected like any other node.
  Var sign(Var a);
  Var step(Var a);
  Var bias_sum(Var g, std::size_t axis);
  Var bias_broadcast(Var b, Shape shape, std::size_t axis);
  Var row_sum_broadcast(Var a);
  Var conv2d_input_grad(Var gy, Var w);
  Var conv2d_weight_grad(Var x, Var gy, std::size_t kernel);
  Var pool_gather(Var x, std::shared_ptr<const std::vector<std::size_t>> index, Shape out_shape);
  Var pool_scatter(Var g, std::shared_ptr<const std::vector<std::size_t>> index, Shape in_shape);
  Var avg_pool_grad(Var g, Shape in_shape);

  // Dispatch a registered primitive by name. Unknown names raise UnsupportedOp.
  Var apply(std::string_view name, std::span<const Var> args, double attr = 0.0);

  const Tensor& value(Var v) const { return values_.at(static_cast<std::size_t>(v.id)); }
  const NodeInfo& info(Var v) const { return infos_.at(static_cast<std::size_t>(v.id)); }
  std::size_t size() const { return infos_.size(); }
  std::vector<Var> leaves() const;

  // dLoss/dw for each w. Values only; nothing is recorded.
  std::vector<Tensor> gradient(Var loss, std::span<const Var> wrt) const;

  // Same derivative, recorded on this tape as ordinary primitives so it can be
  // differentiated again. Raises UnsupportedSecondOrder when the path crosses
  // a Custom op.
  std::vector<Var> gradient_graph(Var loss, std::span<const Var> wrt);

  // Re-evaluate every node with new leaf values (in leaf creation order).
  std::vector<Tensor> replay(std::span<const Tensor> leaf_values) const;

 private:
  Var push(NodeInfo info, Tensor value);
  bool grad_of(int a) const { return infos_[static_cast<std::size_t>(a)].requires_grad; }
  std::vector<char> on_path(int last, std::span<const Var> wrt) const;

  std::vector<NodeInfo> infos_;
  std::vector<Tensor> values_;
};

}  // namespace foml
