#include "foml/tape.hpp"

#include <algorithm>
#include <optional>
#include <unordered_map>

#include "foml/error.hpp"
#include "foml/ops.hpp"

namespace foml {

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Constant: return "constant";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::ScaleBy: return "scale_by";
    case Op::Square: return "square";
    case Op::Pow: return "pow";
    case Op::Abs: return "abs";
    case Op::Sign: return "sign";
    case Op::Relu: return "relu";
    case Op::Step: return "step";
    case Op::Sigmoid: return "sigmoid";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::Fill: return "fill";
    case Op::MatMul: return "matmul";
    case Op::Transpose: return "transpose";
    case Op::AddBias: return "add_bias";
    case Op::BiasSum: return "bias_sum";
    case Op::BiasBroadcast: return "bias_broadcast";
    case Op::Reshape: return "reshape";
    case Op::Softmax: return "softmax";
    case Op::RowSumBroadcast: return "row_sum_broadcast";
    case Op::SoftmaxCrossEntropy: return "softmax_cross_entropy";
    case Op::BinaryCrossEntropy: return "binary_cross_entropy";
    case Op::Conv2d: return "conv2d";
    case Op::Conv2dInputGrad: return "conv2d_input_grad";
    case Op::Conv2dWeightGrad: return "conv2d_weight_grad";
    case Op::PoolGather: return "pool_gather";
    case Op::PoolScatter: return "pool_scatter";
    case Op::AvgPool: return "avg_pool";
    case Op::AvgPoolGrad: return "avg_pool_grad";
    case Op::Custom: return "custom";
  }
  return "?";
}

namespace {

bool zero_derivative(Op op) { return op == Op::Sign || op == Op::Step || op == Op::Constant; }

std::string node_label(std::size_t id, const NodeInfo& n) {
  std::string s = "node #" + std::to_string(id) + " (" + std::string(op_name(n.op));
  if (n.op == Op::Custom && n.custom) s += ":" + n.custom->name;
  return s + ")";
}

Tensor evaluate(const NodeInfo& n, const Tensor* a, const Tensor* b, std::shared_ptr<const std::vector<std::size_t>>* index) {
  switch (n.op) {
    case Op::Leaf:
    case Op::Constant: throw ContractError("leaf/constant nodes are not evaluated");
    case Op::Add: return ops::add(*a, *b);
    case Op::Sub: return ops::sub(*a, *b);
    case Op::Mul: return ops::mul(*a, *b);
    case Op::Scale: return ops::scale(*a, n.attr);
    case Op::AddScalar: return ops::add_scalar(*a, n.attr);
    case Op::ScaleBy: return ops::scale_by(*a, *b);
    case Op::Square: return ops::square(*a);
    case Op::Pow: return ops::pow(*a, n.attr);
    case Op::Abs: return ops::abs(*a);
    case Op::Sign: return ops::sign(*a);
    case Op::Relu: return ops::relu(*a);
    case Op::Step: return ops::step(*a);
    case Op::Sigmoid: return ops::sigmoid(*a);
    case Op::Sum: return ops::sum(*a);
    case Op::Mean: return ops::mean(*a);
    case Op::Fill: return ops::fill(*a, n.aux);
    case Op::MatMul: return ops::matmul(*a, *b);
    case Op::Transpose: return ops::transpose(*a);
    case Op::AddBias: return ops::add_bias(*a, *b, n.axis);
    case Op::BiasSum: return ops::bias_sum(*a, n.axis);
    case Op::BiasBroadcast: return ops::bias_broadcast(*a, n.aux, n.axis);
    case Op::Reshape: return ops::reshape(*a, n.aux);
    case Op::Softmax: return ops::softmax(*a);
    case Op::RowSumBroadcast: return ops::row_sum_broadcast(*a);
    case Op::SoftmaxCrossEntropy: return ops::softmax_cross_entropy(*a, *b);
    case Op::BinaryCrossEntropy: return ops::binary_cross_entropy(*a, *b);
    case Op::Conv2d: return ops::conv2d(*a, *b);
    case Op::Conv2dInputGrad: return ops::conv2d_input_grad(*a, *b);
    case Op::Conv2dWeightGrad: return ops::conv2d_weight_grad(*a, *b, static_cast<std::size_t>(n.attr));
    case Op::PoolGather:
      if (n.recompute_index && index)
        *index = std::make_shared<const std::vector<std::size_t>>(ops::max_pool_index(*a));
      return ops::pool_gather(*a, index ? **index : *n.index, n.aux);
    case Op::PoolScatter: return ops::pool_scatter(*a, *n.index, n.aux);
    case Op::AvgPool: return ops::avg_pool(*a);
    case Op::AvgPoolGrad: return ops::avg_pool_grad(*a, n.aux);
    case Op::Custom: {
      Tensor r(a->shape());
      for (std::size_t i = 0; i < a->size(); ++i) r[i] = n.custom->f((*a)[i]);
      return r;
    }
  }
  throw UnsupportedOp("unknown op");
}

// Backward rules, written once against an algebra that either computes values
// (NumericAlgebra) or records them on the tape (RecordingAlgebra).
template <class Alg>
void backprop(int id, const NodeInfo& n, Alg& alg, const typename Alg::Value& g) {
  switch (n.op) {
    case Op::Leaf:
    case Op::Constant:
    case Op::Sign:
    case Op::Step: return;
    case Op::Add:
      alg.acc(n.in0, [&] { return g; });
      alg.acc(n.in1, [&] { return g; });
      return;
    case Op::Sub:
      alg.acc(n.in0, [&] { return g; });
      alg.acc(n.in1, [&] { return alg.scale(g, -1.0); });
      return;
    case Op::Mul:
      alg.acc(n.in0, [&] { return alg.mul(g, alg.in(n.in1)); });
      alg.acc(n.in1, [&] { return alg.mul(g, alg.in(n.in0)); });
      return;
    case Op::Scale: alg.acc(n.in0, [&] { return alg.scale(g, n.attr); }); return;
    case Op::AddScalar: alg.acc(n.in0, [&] { return g; }); return;
    case Op::ScaleBy:
      alg.acc(n.in0, [&] { return alg.scale_by(g, alg.in(n.in1)); });
      alg.acc(n.in1, [&] { return alg.sum(alg.mul(g, alg.in(n.in0))); });
      return;
    case Op::Square: alg.acc(n.in0, [&] { return alg.mul(g, alg.scale(alg.in(n.in0), 2.0)); }); return;
    case Op::Pow:
      alg.acc(n.in0, [&] {
        if (n.attr == 1.0) return g;
        return alg.mul(g, alg.scale(alg.pow(alg.in(n.in0), n.attr - 1.0), n.attr));
      });
      return;
    case Op::Abs: alg.acc(n.in0, [&] { return alg.mul(g, alg.sign(alg.in(n.in0))); }); return;
    case Op::Relu: alg.acc(n.in0, [&] { return alg.mul(g, alg.step(alg.in(n.in0))); }); return;
    case Op::Sigmoid:
      alg.acc(n.in0, [&] {
        auto y = alg.in(id);
        return alg.mul(g, alg.mul(y, alg.add_scalar(alg.scale(y, -1.0), 1.0)));
      });
      return;
    case Op::Sum: alg.acc(n.in0, [&] { return alg.fill(g, alg.shape(n.in0)); }); return;
    case Op::Mean:
      alg.acc(n.in0, [&] {
        const Shape s = alg.shape(n.in0);
        return alg.scale(alg.fill(g, s), 1.0 / static_cast<double>(shape_size(s)));
      });
      return;
    case Op::Fill: alg.acc(n.in0, [&] { return alg.reshape(alg.sum(g), alg.shape(n.in0)); }); return;
    case Op::MatMul:
      alg.acc(n.in0, [&] { return alg.matmul(g, alg.transpose(alg.in(n.in1))); });
      alg.acc(n.in1, [&] { return alg.matmul(alg.transpose(alg.in(n.in0)), g); });
      return;
    case Op::Transpose: alg.acc(n.in0, [&] { return alg.transpose(g); }); return;
    case Op::AddBias:
      alg.acc(n.in0, [&] { return g; });
      alg.acc(n.in1, [&] { return alg.bias_sum(g, n.axis); });
      return;
    case Op::BiasSum: alg.acc(n.in0, [&] { return alg.bias_broadcast(g, alg.shape(n.in0), n.axis); }); return;
    case Op::BiasBroadcast: alg.acc(n.in0, [&] { return alg.bias_sum(g, n.axis); }); return;
    case Op::Reshape: alg.acc(n.in0, [&] { return alg.reshape(g, alg.shape(n.in0)); }); return;
    case Op::Softmax:
      alg.acc(n.in0, [&] {
        auto y = alg.in(id);
        return alg.mul(y, alg.sub(g, alg.row_sum_broadcast(alg.mul(g, y))));
      });
      return;
    case Op::RowSumBroadcast: alg.acc(n.in0, [&] { return alg.row_sum_broadcast(g); }); return;
    case Op::SoftmaxCrossEntropy:
      alg.acc(n.in0, [&] {
        const double rows = static_cast<double>(alg.shape(n.in0).at(0));
        return alg.scale(alg.scale_by(alg.sub(alg.softmax(alg.in(n.in0)), alg.in(n.in1)), g), 1.0 / rows);
      });
      return;
    case Op::BinaryCrossEntropy:
      alg.acc(n.in0, [&] {
        const double rows = static_cast<double>(alg.shape(n.in0).at(0));
        return alg.scale(alg.scale_by(alg.sub(alg.sigmoid(alg.in(n.in0)), alg.in(n.in1)), g), 1.0 / rows);
      });
      return;
    case Op::Conv2d: {
      const auto k = alg.shape(n.in1).at(2);
      alg.acc(n.in0, [&] { return alg.conv2d_input_grad(g, alg.in(n.in1)); });
      alg.acc(n.in1, [&] { return alg.conv2d_weight_grad(alg.in(n.in0), g, k); });
      return;
    }
    case Op::Conv2dInputGrad: {
      const auto k = alg.shape(n.in1).at(2);
      alg.acc(n.in0, [&] { return alg.conv2d(g, alg.in(n.in1)); });
      alg.acc(n.in1, [&] { return alg.conv2d_weight_grad(g, alg.in(n.in0), k); });
      return;
    }
    case Op::Conv2dWeightGrad:
      alg.acc(n.in0, [&] { return alg.conv2d_input_grad(alg.in(n.in1), g); });
      alg.acc(n.in1, [&] { return alg.conv2d(alg.in(n.in0), g); });
      return;
    case Op::PoolGather: alg.acc(n.in0, [&] { return alg.pool_scatter(g, n.index, alg.shape(n.in0)); }); return;
    case Op::PoolScatter: alg.acc(n.in0, [&] { return alg.pool_gather(g, n.index, alg.shape(n.in0)); }); return;
    case Op::AvgPool: alg.acc(n.in0, [&] { return alg.avg_pool_grad(g, alg.shape(n.in0)); }); return;
    case Op::AvgPoolGrad: alg.acc(n.in0, [&] { return alg.avg_pool(g); }); return;
    case Op::Custom: alg.custom_backward(id, n, g); return;
  }
}

struct NumericAlgebra {
  using Value = Tensor;

  const Tape& tape;
  const std::vector<char>& path;
  std::vector<std::optional<Tensor>>& adj;
  int current = -1;

  const Tensor& in(int id) const { return tape.value(Var{id}); }
  Shape shape(int id) const { return tape.value(Var{id}).shape(); }

  template <class F>
  void acc(int id, F make) {
    if (id < 0 || !path[static_cast<std::size_t>(id)]) return;
    Tensor v = make();
    if (v.first_non_finite() != v.size())
      throw NumericError("non-finite gradient flowing out of " + node_label(static_cast<std::size_t>(current),
                                                                            tape.info(Var{current})));
    auto& slot = adj[static_cast<std::size_t>(id)];
    if (slot) {
      slot = ops::add(*slot, v);
    } else {
      slot = std::move(v);
    }
  }

  void custom_backward(int, const NodeInfo& n, const Tensor& g) {
    acc(n.in0, [&] {
      const Tensor& x = in(n.in0);
      Tensor r(x.shape());
      for (std::size_t i = 0; i < x.size(); ++i) r[i] = g[i] * n.custom->df(x[i]);
      return r;
    });
  }

  Tensor add(const Tensor& a, const Tensor& b) { return ops::add(a, b); }
  Tensor sub(const Tensor& a, const Tensor& b) { return ops::sub(a, b); }
  Tensor mul(const Tensor& a, const Tensor& b) { return ops::mul(a, b); }
  Tensor scale(const Tensor& a, double c) { return ops::scale(a, c); }
  Tensor add_scalar(const Tensor& a, double c) { return ops::add_scalar(a, c); }
  Tensor scale_by(const Tensor& a, const Tensor& s) { return ops::scale_by(a, s); }
  Tensor pow(const Tensor& a, double p) { return ops::pow(a, p); }
  Tensor sign(const Tensor& a) { return ops::sign(a); }
  Tensor step(const Tensor& a) { return ops::step(a); }
  Tensor sigmoid(const Tensor& a) { return ops::sigmoid(a); }
  Tensor softmax(const Tensor& a) { return ops::softmax(a); }
  Tensor sum(const Tensor& a) { return ops::sum(a); }
  Tensor fill(const Tensor& s, const Shape& shape) { return ops::fill(s, shape); }
  Tensor reshape(const Tensor& a, const Shape& shape) { return ops::reshape(a, shape); }
  Tensor matmul(const Tensor& a, const Tensor& b) { return ops::matmul(a, b); }
  Tensor transpose(const Tensor& a) { return ops::transpose(a); }
  Tensor bias_sum(const Tensor& g, std::size_t axis) { return ops::bias_sum(g, axis); }
  Tensor bias_broadcast(const Tensor& b, const Shape& s, std::size_t axis) { return ops::bias_broadcast(b, s, axis); }
  Tensor row_sum_broadcast(const Tensor& a) { return ops::row_sum_broadcast(a); }
  Tensor conv2d(const Tensor& x, const Tensor& w) { return ops::conv2d(x, w); }
  Tensor conv2d_input_grad(const Tensor& gy, const Tensor& w) { return ops::conv2d_input_grad(gy, w); }
  Tensor conv2d_weight_grad(const Tensor& x, const Tensor& gy, std::size_t k) {
    return ops::conv2d_weight_grad(x, gy, k);
  }
  Tensor pool_gather(const Tensor& x, const std::shared_ptr<const std::vector<std::size_t>>& idx, const Shape& out) {
    return ops::pool_gather(x, *idx, out);
  }
  Tensor pool_scatter(const Tensor& g, const std::shared_ptr<const std::vector<std::size_t>>& idx, const Shape& in) {
    return ops::pool_scatter(g, *idx, in);
  }
  Tensor avg_pool(const Tensor& g) { return ops::avg_pool(g); }
  Tensor avg_pool_grad(const Tensor& g, const Shape& in) { return ops::avg_pool_grad(g, in); }
};

struct RecordingAlgebra {
  using Value = Var;

  Tape& tape;
  const std::vector<char>& path;
  std::vector<Var>& adj;

  Var in(int id) const { return Var{id}; }
  Shape shape(int id) const { return tape.value(Var{id}).shape(); }

  template <class F>
  void acc(int id, F make) {
    if (id < 0 || !path[static_cast<std::size_t>(id)]) return;
    Var v = make();
    auto& slot = adj[static_cast<std::size_t>(id)];
    slot = slot.id < 0 ? v : tape.add(slot, v);
  }

  void custom_backward(int id, const NodeInfo& n, Var) {
    if (n.in0 >= 0 && path[static_cast<std::size_t>(n.in0)])
      throw UnsupportedSecondOrder("cannot record a gradient through " +
                                   node_label(static_cast<std::size_t>(id), n) +
                                   ": custom ops only provide first derivatives");
  }

  Var add(Var a, Var b) { return tape.add(a, b); }
  Var sub(Var a, Var b) { return tape.sub(a, b); }
  Var mul(Var a, Var b) { return tape.mul(a, b); }
  Var scale(Var a, double c) { return tape.scale(a, c); }
  Var add_scalar(Var a, double c) { return tape.add_scalar(a, c); }
  Var scale_by(Var a, Var s) { return tape.scale_by(a, s); }
  Var pow(Var a, double p) { return tape.pow(a, p); }
  Var sign(Var a) { return tape.sign(a); }
  Var step(Var a) { return tape.step(a); }
  Var sigmoid(Var a) { return tape.sigmoid(a); }
  Var softmax(Var a) { return tape.softmax(a); }
  Var sum(Var a) { return tape.sum(a); }
  Var fill(Var s, const Shape& shape) { return tape.fill(s, shape); }
  Var reshape(Var a, const Shape& shape) { return tape.reshape(a, shape); }
  Var matmul(Var a, Var b) { return tape.matmul(a, b); }
  Var transpose(Var a) { return tape.transpose(a); }
  Var bias_sum(Var g, std::size_t axis) { return tape.bias_sum(g, axis); }
  Var bias_broadcast(Var b, const Shape& s, std::size_t axis) { return tape.bias_broadcast(b, s, axis); }
  Var row_sum_broadcast(Var a) { return tape.row_sum_broadcast(a); }
  Var conv2d(Var x, Var w) { return tape.conv2d(x, w); }
  Var conv2d_input_grad(Var gy, Var w) { return tape.conv2d_input_grad(gy, w); }
  Var conv2d_weight_grad(Var x, Var gy, std::size_t k) { return tape.conv2d_weight_grad(x, gy, k); }
  Var pool_gather(Var x, const std::shared_ptr<const std::vector<std::size_t>>& idx, const Shape& out) {
    return tape.pool_gather(x, idx, out);
  }
  Var pool_scatter(Var g, const std::shared_ptr<const std::vector<std::size_t>>& idx, const Shape& in) {
    return tape.pool_scatter(g, idx, in);
  }
  Var avg_pool(Var g) { return tape.avg_pool(g); }
  Var avg_pool_grad(Var g, const Shape& in) { return tape.avg_pool_grad(g, in); }
};

}  // namespace

Var Tape::push(NodeInfo info, Tensor value) {
  const std::size_t id = infos_.size();
  if (const auto bad = value.first_non_finite(); bad != value.size())
    throw NumericError("non-finite value at element " + std::to_string(bad) + " of " + node_label(id, info));
  infos_.push_back(std::move(info));
  values_.push_back(std::move(value));
  return Var{static_cast<int>(id)};
}

Var Tape::leaf(Tensor value) {
  NodeInfo n;
  n.op = Op::Leaf;
  n.requires_grad = true;
  return push(std::move(n), std::move(value));
}

Var Tape::constant(Tensor value) {
  NodeInfo n;
  n.op = Op::Constant;
  return push(std::move(n), std::move(value));
}

namespace {

NodeInfo make_info(Op op, int a, int b = -1) {
  NodeInfo n;
  n.op = op;
  n.in0 = a;
  n.in1 = b;
  return n;
}

}  // namespace

#define FOML_RECORD(INFO)                                                                          \
  do {                                                                                             \
    NodeInfo info_ = (INFO);                                                                       \
    for (int in_ : {info_.in0, info_.in1})                                                         \
      if (in_ >= static_cast<int>(infos_.size()))                                                  \
        throw ContractError("input refers to a node not yet on the tape");                         \
    info_.requires_grad = !zero_derivative(info_.op) &&                                            \
                          ((info_.in0 >= 0 && grad_of(info_.in0)) || (info_.in1 >= 0 && grad_of(info_.in1))); \
    const Tensor* a_ = info_.in0 >= 0 ? &values_[static_cast<std::size_t>(info_.in0)] : nullptr;  \
    const Tensor* b_ = info_.in1 >= 0 ? &values_[static_cast<std::size_t>(info_.in1)] : nullptr;  \
    Tensor v_;                                                                                     \
    try {                                                                                          \
      v_ = evaluate(info_, a_, b_, nullptr);                                                       \
    } catch (const ShapeError& e) {                                                                \
      throw ShapeError(node_label(infos_.size(), info_) + ": " + e.what());                        \
    }                                                                                              \
    return push(std::move(info_), std::move(v_));                                                  \
  } while (0)

Var Tape::add(Var a, Var b) { FOML_RECORD(make_info(Op::Add, a.id, b.id)); }
Var Tape::sub(Var a, Var b) { FOML_RECORD(make_info(Op::Sub, a.id, b.id)); }
Var Tape::mul(Var a, Var b) { FOML_RECORD(make_info(Op::Mul, a.id, b.id)); }
Var Tape::scale(Var a, double c) {
  auto n = make_info(Op::Scale, a.id);
  n.attr = c;
  FOML_RECORD(n);
}
Var Tape::add_scalar(Var a, double c) {
  auto n = make_info(Op::AddScalar, a.id);
  n.attr = c;
  FOML_RECORD(n);
}
Var Tape::scale_by(Var a, Var s) { FOML_RECORD(make_info(Op::ScaleBy, a.id, s.id)); }
Var Tape::square(Var a) { FOML_RECORD(make_info(Op::Square, a.id)); }
Var Tape::pow(Var a, double p) {
  auto n = make_info(Op::Pow, a.id);
  n.attr = p;
  FOML_RECORD(n);
}
Var Tape::abs(Var a) { FOML_RECORD(make_info(Op::Abs, a.id)); }
Var Tape::sign(Var a) { FOML_RECORD(make_info(Op::Sign, a.id)); }
Var Tape::relu(Var a) { FOML_RECORD(make_info(Op::Relu, a.id)); }
Var Tape::step(Var a) { FOML_RECORD(make_info(Op::Step, a.id)); }
Var Tape::sigmoid(Var a) { FOML_RECORD(make_info(Op::Sigmoid, a.id)); }
Var Tape::sum(Var a) { FOML_RECORD(make_info(Op::Sum, a.id)); }
Var Tape::mean(Var a) { FOML_RECORD(make_info(Op::Mean, a.id)); }
Var Tape::fill(Var s, Shape shape) {
  auto n = make_info(Op::Fill, s.id);
  n.aux = std::move(shape);
  FOML_RECORD(n);
}
Var Tape::matmul(Var a, Var b) { FOML_RECORD(make_info(Op::MatMul, a.id, b.id)); }
Var Tape::transpose(Var a) { FOML_RECORD(make_info(Op::Transpose, a.id)); }
Var Tape::add_bias(Var x, Var b, std::size_t axis) {
  auto n = make_info(Op::AddBias, x.id, b.id);
  n.axis = axis;
  FOML_RECORD(n);
}
Var Tape::bias_sum(Var g, std::size_t axis) {
  auto n = make_info(Op::BiasSum, g.id);
  n.axis = axis;
  FOML_RECORD(n);
}
Var Tape::bias_broadcast(Var b, Shape shape, std::size_t axis) {
  auto n = make_info(Op::BiasBroadcast, b.id);
  n.aux = std::move(shape);
  n.axis = axis;
  FOML_RECORD(n);
}
Var Tape::reshape(Var a, Shape shape) {
  auto n = make_info(Op::Reshape, a.id);
  n.aux = std::move(shape);
  FOML_RECORD(n);
}
Var Tape::softmax(Var z) { FOML_RECORD(make_info(Op::Softmax, z.id)); }
Var Tape::row_sum_broadcast(Var a) { FOML_RECORD(make_info(Op::RowSumBroadcast, a.id)); }
Var Tape::softmax_cross_entropy(Var logits, Var targets) {
  if (targets.id >= 0 && targets.id < static_cast<int>(infos_.size()) && grad_of(targets.id))
    throw ContractError("softmax_cross_entropy targets must be constant");
  FOML_RECORD(make_info(Op::SoftmaxCrossEntropy, logits.id, targets.id));
}
Var Tape::binary_cross_entropy(Var logits, Var targets) {
  if (targets.id >= 0 && targets.id < static_cast<int>(infos_.size()) && grad_of(targets.id))
    throw ContractError("binary_cross_entropy targets must be constant");
  FOML_RECORD(make_info(Op::BinaryCrossEntropy, logits.id, targets.id));
}
Var Tape::conv2d(Var x, Var w) { FOML_RECORD(make_info(Op::Conv2d, x.id, w.id)); }
Var Tape::conv2d_input_grad(Var gy, Var w) { FOML_RECORD(make_info(Op::Conv2dInputGrad, gy.id, w.id)); }
Var Tape::conv2d_weight_grad(Var x, Var gy, std::size_t kernel) {
  auto n = make_info(Op::Conv2dWeightGrad, x.id, gy.id);
  n.attr = static_cast<double>(kernel);
  FOML_RECORD(n);
}
Var Tape::max_pool(Var x) {
  const Tensor& xv = value(x);
  auto n = make_info(Op::PoolGather, x.id);
  try {
    n.aux = ops::pooled_shape(xv.shape());
  } catch (const ShapeError& e) {
    throw ShapeError(node_label(infos_.size(), n) + ": " + e.what());
  }
  n.index = std::make_shared<const std::vector<std::size_t>>(ops::max_pool_index(xv));
  n.recompute_index = true;
  FOML_RECORD(n);
}
Var Tape::pool_gather(Var x, std::shared_ptr<const std::vector<std::size_t>> index, Shape out_shape) {
  auto n = make_info(Op::PoolGather, x.id);
  n.index = std::move(index);
  n.aux = std::move(out_shape);
  FOML_RECORD(n);
}
Var Tape::pool_scatter(Var g, std::shared_ptr<const std::vector<std::size_t>> index, Shape in_shape) {
  auto n = make_info(Op::PoolScatter, g.id);
  n.index = std::move(index);
  n.aux = std::move(in_shape);
  FOML_RECORD(n);
}
Var Tape::avg_pool(Var x) { FOML_RECORD(make_info(Op::AvgPool, x.id)); }
Var Tape::avg_pool_grad(Var g, Shape in_shape) {
  auto n = make_info(Op::AvgPoolGrad, g.id);
  n.aux = std::move(in_shape);
  FOML_RECORD(n);
}
Var Tape::custom(std::shared_ptr<const CustomUnary> op, Var a) {
  if (!op || !op->f || !op->df) throw ContractError("custom op needs f and df");
  auto n = make_info(Op::Custom, a.id);
  n.custom = std::move(op);
  FOML_RECORD(n);
}

#undef FOML_RECORD

Var Tape::apply(std::string_view name, std::span<const Var> args, double attr) {
  auto need = [&](std::size_t k) {
    if (args.size() != k)
      throw ContractError("primitive '" + std::string(name) + "' takes " + std::to_string(k) + " arguments, got " +
                          std::to_string(args.size()));
  };
  using Unary = Var (Tape::*)(Var);
  using Binary = Var (Tape::*)(Var, Var);
  static const std::unordered_map<std::string_view, Unary> unary = {
      {"square", &Tape::square}, {"abs", &Tape::abs},         {"relu", &Tape::relu},
      {"sigmoid", &Tape::sigmoid}, {"sum", &Tape::sum},       {"mean", &Tape::mean},
      {"transpose", &Tape::transpose}, {"softmax", &Tape::softmax}, {"max_pool", &Tape::max_pool},
      {"avg_pool", &Tape::avg_pool},   {"sqrt", &Tape::sqrt},
  };
  static const std::unordered_map<std::string_view, Binary> binary = {
      {"add", &Tape::add},
      {"sub", &Tape::sub},
      {"subtract", &Tape::sub},
      {"mul", &Tape::mul},
      {"matmul", &Tape::matmul},
      {"conv", &Tape::conv2d},
      {"conv2d", &Tape::conv2d},
      {"softmax_cross_entropy", &Tape::softmax_cross_entropy},
      {"binary_cross_entropy", &Tape::binary_cross_entropy},
  };
  if (auto it = unary.find(name); it != unary.end()) {
    need(1);
    return (this->*(it->second))(args[0]);
  }
  if (auto it = binary.find(name); it != binary.end()) {
    need(2);
    return (this->*(it->second))(args[0], args[1]);
  }
  if (name == "scale") {
    need(1);
    return scale(args[0], attr);
  }
  if (name == "pow") {
    need(1);
    return pow(args[0], attr);
  }
  throw UnsupportedOp("unregistered primitive '" + std::string(name) + "'");
}

std::vector<Var> Tape::leaves() const {
  std::vector<Var> out;
  for (std::size_t i = 0; i < infos_.size(); ++i)
    if (infos_[i].op == Op::Leaf) out.push_back(Var{static_cast<int>(i)});
  return out;
}

std::vector<char> Tape::on_path(int last, std::span<const Var> wrt) const {
  std::vector<char> path(static_cast<std::size_t>(last) + 1, 0);
  int first = last + 1;
  for (Var w : wrt) {
    if (w.id < 0 || w.id >= static_cast<int>(infos_.size())) throw ContractError("gradient w.r.t. unknown node");
    if (w.id <= last) {
      path[static_cast<std::size_t>(w.id)] = 1;
      first = std::min(first, w.id);
    }
  }
  for (int i = first; i <= last; ++i) {
    const auto& n = infos_[static_cast<std::size_t>(i)];
    if (path[static_cast<std::size_t>(i)] || zero_derivative(n.op)) continue;
    if ((n.in0 >= 0 && path[static_cast<std::size_t>(n.in0)]) || (n.in1 >= 0 && path[static_cast<std::size_t>(n.in1)]))
      path[static_cast<std::size_t>(i)] = 1;
  }
  return path;
}

std::vector<Tensor> Tape::gradient(Var loss, std::span<const Var> wrt) const {
  if (loss.id < 0 || loss.id >= static_cast<int>(infos_.size())) throw ContractError("loss is not on this tape");
  if (value(loss).size() != 1)
    throw ContractError("gradient needs a scalar loss, got shape " + shape_string(value(loss).shape()));
  const auto path = on_path(loss.id, wrt);
  std::vector<std::optional<Tensor>> adj(static_cast<std::size_t>(loss.id) + 1);
  if (path[static_cast<std::size_t>(loss.id)]) adj[static_cast<std::size_t>(loss.id)] = Tensor(value(loss).shape(), 1.0);
  std::vector<char> keep(adj.size(), 0);
  for (Var w : wrt)
    if (w.id <= loss.id) keep[static_cast<std::size_t>(w.id)] = 1;
  NumericAlgebra alg{*this, path, adj};
  for (int id = loss.id; id >= 0; --id) {
    auto& slot = adj[static_cast<std::size_t>(id)];
    if (!slot || !path[static_cast<std::size_t>(id)]) continue;
    const auto& n = infos_[static_cast<std::size_t>(id)];
    if (n.op == Op::Leaf || n.op == Op::Constant) continue;
    alg.current = id;
    Tensor g = keep[static_cast<std::size_t>(id)] ? *slot : std::move(*slot);
    if (!keep[static_cast<std::size_t>(id)]) slot.reset();
    backprop(id, n, alg, g);
  }
  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (Var w : wrt) {
    if (w.id <= loss.id && adj[static_cast<std::size_t>(w.id)])
      out.push_back(*adj[static_cast<std::size_t>(w.id)]);
    else
      out.emplace_back(value(w).shape());
  }
  return out;
}

std::vector<Var> Tape::gradient_graph(Var loss, std::span<const Var> wrt) {
  if (loss.id < 0 || loss.id >= static_cast<int>(infos_.size())) throw ContractError("loss is not on this tape");
  if (value(loss).size() != 1)
    throw ContractError("gradient needs a scalar loss, got shape " + shape_string(value(loss).shape()));
  const auto path = on_path(loss.id, wrt);
  std::vector<Var> adj(static_cast<std::size_t>(loss.id) + 1);
  if (path[static_cast<std::size_t>(loss.id)])
    adj[static_cast<std::size_t>(loss.id)] = constant(Tensor(value(loss).shape(), 1.0));
  RecordingAlgebra alg{*this, path, adj};
  for (int id = loss.id; id >= 0; --id) {
    const Var g = adj[static_cast<std::size_t>(id)];
    if (g.id < 0 || !path[static_cast<std::size_t>(id)]) continue;
    const NodeInfo n = infos_[static_cast<std::size_t>(id)];
    if (n.op == Op::Leaf || n.op == Op::Constant) continue;
    backprop(id, n, alg, g);
  }
  std::vector<Var> out;
  out.reserve(wrt.size());
  for (Var w : wrt) {
    const Var g = w.id <= loss.id ? adj[static_cast<std::size_t>(w.id)] : Var{};
    out.push_back(g.id >= 0 ? g : constant(Tensor(value(w).shape())));
  }
  return out;
}

std::vector<Tensor> Tape::replay(std::span<const Tensor> leaf_values) const {
  std::vector<Tensor> vals(infos_.size());
  std::size_t next_leaf = 0;
  for (std::size_t i = 0; i < infos_.size(); ++i) {
    const auto& n = infos_[i];
    if (n.op == Op::Leaf) {
      if (next_leaf >= leaf_values.size()) throw ContractError("replay: not enough leaf values");
      if (leaf_values[next_leaf].shape() != values_[i].shape()) throw ShapeError("replay: leaf shape mismatch");
      vals[i] = leaf_values[next_leaf++];
      continue;
    }
    if (n.op == Op::Constant) {
      vals[i] = values_[i];
      continue;
    }
    const Tensor* a = n.in0 >= 0 ? &vals[static_cast<std::size_t>(n.in0)] : nullptr;
    const Tensor* b = n.in1 >= 0 ? &vals[static_cast<std::size_t>(n.in1)] : nullptr;
    std::shared_ptr<const std::vector<std::size_t>> idx = n.index;
    vals[i] = evaluate(n, a, b, n.recompute_index ? &idx : nullptr);
  }
  if (next_leaf != leaf_values.size()) throw ContractError("replay: too many leaf values");
  return vals;
}

}  // namespace foml
