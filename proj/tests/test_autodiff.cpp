#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <map>

#include "foml/autodiff.hpp"
#include "foml/error.hpp"
#include "foml/ops.hpp"
#include "foml/optim.hpp"
#include "test_util.hpp"

using namespace foml;
using namespace foml::testing;

namespace {

struct PrimitiveCase {
  std::string name;
  std::vector<Tensor> inputs;
  std::function<Var(Tape&, std::span<const Var>)> build;
};

Tensor one_hot_rows(std::size_t rows, std::size_t cols) {
  std::vector<int> labels;
  for (std::size_t i = 0; i < rows; ++i) labels.push_back(static_cast<int>((3 * i + 1) % cols));
  return ops::one_hot(labels, cols);
}

Tensor positive(Shape s, std::uint64_t seed) { return random_tensor(std::move(s), seed, 0.5, 2.0); }

// Every registered primitive, each with inputs where it is smooth.
std::vector<PrimitiveCase> primitive_cases() {
  using V = std::span<const Var>;
  const Tensor targets = one_hot_rows(3, 4);
  Tensor bce_targets(Shape{3, 1}, std::vector<double>{1, 0, 1});
  return {
      {"add", {random_tensor({2, 3}, 1), random_tensor({2, 3}, 2)}, [](Tape& t, V v) { return t.add(v[0], v[1]); }},
      {"sub", {random_tensor({2, 3}, 3), random_tensor({2, 3}, 4)}, [](Tape& t, V v) { return t.sub(v[0], v[1]); }},
      {"mul", {random_tensor({2, 3}, 5), random_tensor({2, 3}, 6)}, [](Tape& t, V v) { return t.mul(v[0], v[1]); }},
      {"scale", {random_tensor({4}, 7)}, [](Tape& t, V v) { return t.scale(v[0], -1.7); }},
      {"add_scalar", {random_tensor({4}, 8)}, [](Tape& t, V v) { return t.add_scalar(v[0], 0.3); }},
      {"scale_by", {random_tensor({2, 2}, 9), random_tensor({}, 10)}, [](Tape& t, V v) { return t.scale_by(v[0], v[1]); }},
      {"square", {random_tensor({5}, 11)}, [](Tape& t, V v) { return t.square(v[0]); }},
      {"pow3", {random_tensor({5}, 12)}, [](Tape& t, V v) { return t.pow(v[0], 3.0); }},
      {"sqrt", {positive({5}, 13)}, [](Tape& t, V v) { return t.sqrt(v[0]); }},
      {"reciprocal", {positive({5}, 14)}, [](Tape& t, V v) { return t.pow(v[0], -1.0); }},
      {"abs", {random_away_from_zero({6}, 15)}, [](Tape& t, V v) { return t.abs(v[0]); }},
      {"relu", {random_away_from_zero({6}, 16)}, [](Tape& t, V v) { return t.relu(v[0]); }},
      {"sigmoid", {random_tensor({6}, 17)}, [](Tape& t, V v) { return t.sigmoid(v[0]); }},
      {"sum", {random_tensor({2, 3}, 18)}, [](Tape& t, V v) { return t.sum(t.square(v[0])); }},
      {"mean", {random_tensor({2, 3}, 19)}, [](Tape& t, V v) { return t.mean(t.square(v[0])); }},
      {"fill", {random_tensor({}, 20)}, [](Tape& t, V v) { return t.fill(v[0], Shape{2, 2}); }},
      {"matmul", {random_tensor({3, 4}, 21), random_tensor({4, 2}, 22)}, [](Tape& t, V v) { return t.matmul(v[0], v[1]); }},
      {"transpose", {random_tensor({3, 4}, 23)}, [](Tape& t, V v) { return t.transpose(v[0]); }},
      {"add_bias", {random_tensor({3, 4}, 24), random_tensor({4}, 25)}, [](Tape& t, V v) { return t.add_bias(v[0], v[1], 1); }},
      {"add_bias_channels", {random_tensor({2, 3, 2, 2}, 26), random_tensor({3}, 27)},
       [](Tape& t, V v) { return t.add_bias(v[0], v[1], 1); }},
      {"reshape", {random_tensor({2, 6}, 28)}, [](Tape& t, V v) { return t.reshape(v[0], Shape{3, 4}); }},
      {"softmax", {random_tensor({3, 4}, 29)}, [](Tape& t, V v) { return t.softmax(v[0]); }},
      {"softmax_cross_entropy", {random_tensor({3, 4}, 30)},
       [targets](Tape& t, V v) { return t.softmax_cross_entropy(v[0], t.constant(targets)); }},
      {"binary_cross_entropy", {random_tensor({3, 1}, 31)},
       [bce_targets](Tape& t, V v) { return t.binary_cross_entropy(v[0], t.constant(bce_targets)); }},
      {"conv2d", {random_tensor({2, 2, 4, 4}, 32), random_tensor({3, 2, 3, 3}, 33)},
       [](Tape& t, V v) { return t.conv2d(v[0], v[1]); }},
      {"max_pool", {random_tensor({2, 2, 4, 4}, 34)}, [](Tape& t, V v) { return t.max_pool(v[0]); }},
      {"max_pool_square", {random_tensor({2, 2, 4, 4}, 44)}, [](Tape& t, V v) { return t.square(t.max_pool(v[0])); }},
      {"conv_pool_conv",
       {random_tensor({1, 2, 4, 4}, 45), random_tensor({2, 2, 3, 3}, 46), random_tensor({2, 2, 3, 3}, 47)},
       [](Tape& t, V v) { return t.conv2d(t.sigmoid(t.max_pool(t.conv2d(v[0], v[1]))), v[2]); }},
      {"avg_pool", {random_tensor({2, 2, 3, 3}, 35)}, [](Tape& t, V v) { return t.avg_pool(v[0]); }},
      {"bias_sum", {random_tensor({2, 3, 2, 2}, 36)}, [](Tape& t, V v) { return t.bias_sum(v[0], 1); }},
      {"bias_broadcast", {random_tensor({3}, 37)}, [](Tape& t, V v) { return t.bias_broadcast(v[0], Shape{2, 3, 2}, 1); }},
      {"row_sum_broadcast", {random_tensor({3, 4}, 38)}, [](Tape& t, V v) { return t.row_sum_broadcast(v[0]); }},
      {"conv2d_input_grad", {random_tensor({2, 3, 4, 4}, 39), random_tensor({3, 2, 3, 3}, 40)},
       [](Tape& t, V v) { return t.conv2d_input_grad(v[0], v[1]); }},
      {"conv2d_weight_grad", {random_tensor({2, 2, 4, 4}, 41), random_tensor({2, 3, 4, 4}, 42)},
       [](Tape& t, V v) { return t.conv2d_weight_grad(v[0], v[1], 3); }},
      {"avg_pool_grad", {random_tensor({2, 3}, 43)}, [](Tape& t, V v) { return t.avg_pool_grad(v[0], Shape{2, 3, 2, 2}); }},
  };
}

// Scalar probe: sum(op(inputs) * r) for a fixed random r.
struct Probe {
  const PrimitiveCase& c;

  Var build(Tape& t, std::span<const Var> vars) const {
    const Var y = c.build(t, vars);
    return t.sum(t.mul(y, t.constant(random_tensor(t.value(y).shape(), 999))));
  }

  double value_at(std::size_t which, std::span<const double> x) const {
    Tape t;
    std::vector<Var> vars;
    for (std::size_t i = 0; i < c.inputs.size(); ++i) {
      Tensor v = c.inputs[i];
      if (i == which) std::copy(x.begin(), x.end(), v.data().begin());
      vars.push_back(t.leaf(v));
    }
    return t.value(build(t, vars)).item();
  }
};

}  // namespace

TEST(Autodiff, IdentityWeightsLinearLayer) {
  ParameterVector p;
  p.add("W", Tensor(Shape{2, 2}, std::vector<double>{1, 0, 0, 1}));
  const std::vector<Tensor> x{Tensor(Shape{1, 2}, std::vector<double>{1, 0})};
  const Recording rec = record_forward(
      p, [](Tape& t, std::span<const Var> w, std::span<const Var> in) { return t.matmul(in[0], w[0]); }, x);
  EXPECT_EQ(rec.tape.value(rec.output).storage(), (std::vector<double>{1, 0}));
  std::size_t ops = 0;
  for (std::size_t i = 0; i < rec.tape.size(); ++i) {
    const auto op = rec.tape.info(Var{static_cast<int>(i)}).op;
    if (op != Op::Leaf && op != Op::Constant) {
      ++ops;
      EXPECT_EQ(op, Op::MatMul);
    }
  }
  EXPECT_EQ(ops, 1u);
}

TEST(Autodiff, UniformLogitsCrossEntropyIsLogC) {
  for (std::size_t C : {2u, 10u}) {
    Tape t;
    const Var z = t.leaf(Tensor(Shape{1, C}, 0.0));
    const Var l = t.softmax_cross_entropy(z, t.constant(ops::one_hot({0}, C)));
    EXPECT_NEAR(t.value(l).item(), std::log(static_cast<double>(C)), 1e-15);
  }
}

TEST(Autodiff, TwoLayerMlpMatchesEagerEvaluation) {
  ParameterVector p;
  p.add("W1", random_tensor({3, 5}, 1));
  p.add("b1", random_tensor({5}, 2));
  p.add("W2", random_tensor({5, 2}, 3));
  const Tensor x = random_tensor({4, 3}, 4);
  const std::vector<Tensor> in{x};
  const Recording rec = record_forward(
      p,
      [](Tape& t, std::span<const Var> w, std::span<const Var> i) {
        return t.matmul(t.relu(t.add_bias(t.matmul(i[0], w[0]), w[1], 1)), w[2]);
      },
      in);
  const Tensor& out = rec.tape.value(rec.output);
  for (std::size_t b = 0; b < 4; ++b)
    for (std::size_t o = 0; o < 2; ++o) {
      double acc = 0;
      for (std::size_t h = 0; h < 5; ++h) {
        double z = p[1][h];
        for (std::size_t k = 0; k < 3; ++k) z += x[b * 3 + k] * p[0][k * 5 + h];
        acc += std::max(z, 0.0) * p[2][h * 2 + o];
      }
      EXPECT_NEAR(out[b * 2 + o], acc, 1e-12);
    }
}

TEST(Autodiff, SquaredResidualClosedForm) {
  const Tensor W = random_tensor({3, 4}, 5), x = random_tensor({4, 1}, 6), y = random_tensor({3, 1}, 7);
  Tape t;
  const Var w = t.leaf(W);
  const Var l = t.sum(t.square(t.sub(t.matmul(w, t.constant(x)), t.constant(y))));
  const Tensor g = t.gradient(l, std::vector<Var>{w})[0];
  const Tensor r = ops::sub(ops::matmul(W, x), y);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(g[i * 4 + j], 2 * r[i] * x[j], 1e-12);
}

TEST(Autodiff, DisconnectedLeafGetsExactZeros) {
  ParameterVector p;
  p.add("used", random_tensor({3}, 1));
  p.add("unused", random_tensor({2, 2}, 2));
  const Recording rec = record_forward(
      p, [](Tape& t, std::span<const Var> w, std::span<const Var>) { return t.sum(t.square(w[0])); }, {});
  const ParameterVector g = grad(rec);
  EXPECT_EQ(g[1], Tensor(Shape{2, 2}, 0.0));
  EXPECT_EQ(g.segment(1).name, "unused");
}

TEST(Autodiff, NonScalarLossIsContractError) {
  Tape t;
  const Var a = t.leaf(random_tensor({3}, 1));
  EXPECT_THROW(t.gradient(t.square(a), std::vector<Var>{a}), ContractError);
}

TEST(Autodiff, EveryPrimitivePassesFiniteDifferences) {
  for (const auto& c : primitive_cases()) {
    const Probe probe{c};
    Tape t;
    std::vector<Var> vars;
    for (const auto& x : c.inputs) vars.push_back(t.leaf(x));
    const auto g = t.gradient(probe.build(t, vars), vars);
    for (std::size_t i = 0; i < c.inputs.size(); ++i) {
      const auto fd = numeric_gradient([&](std::span<const double> x) { return probe.value_at(i, x); },
                                       c.inputs[i].storage());
      EXPECT_LE(rel_error(g[i].data(), fd), 1e-6) << c.name << " input " << i;
    }
  }
}

TEST(Autodiff, RecordedGradientsMatchNumericAndDifferentiateAgain) {
  for (const auto& c : primitive_cases()) {
    const Probe probe{c};
    const std::size_t n = c.inputs.size();
    // s(x) = <grad_x probe, u>, built on the tape, then differentiated again.
    auto second = [&](std::span<const Tensor> xs, std::vector<Tensor>* grads) {
      Tape t;
      std::vector<Var> vars;
      for (const auto& x : xs) vars.push_back(t.leaf(x));
      const Var p = probe.build(t, vars);
      const auto numeric = t.gradient(p, vars);
      const auto g = t.gradient_graph(p, vars);
      for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(t.value(g[i]), numeric[i]) << c.name;
      Var s = t.sum(t.mul(g[0], t.constant(random_tensor(xs[0].shape(), 77))));
      for (std::size_t i = 1; i < n; ++i) s = t.add(s, t.sum(t.mul(g[i], t.constant(random_tensor(xs[i].shape(), 77 + i)))));
      if (grads) *grads = t.gradient(s, vars);
      return t.value(s).item();
    };
    std::vector<Tensor> g2;
    second(c.inputs, &g2);
    for (std::size_t i = 0; i < n; ++i) {
      const auto fd = numeric_gradient(
          [&](std::span<const double> x) {
            auto xs = c.inputs;
            std::copy(x.begin(), x.end(), xs[i].data().begin());
            return second(xs, nullptr);
          },
          c.inputs[i].storage());
      // Piecewise-linear primitives have exactly zero second derivative: compare absolutely.
      double scale = 0;
      for (double v : fd) scale = std::max(scale, std::abs(v));
      if (scale < 1e-8) {
        for (double v : g2[i].data()) EXPECT_NEAR(v, 0.0, 1e-8) << c.name;
      } else {
        EXPECT_LE(rel_error(g2[i].data(), fd), 1e-6) << c.name << " input " << i;
      }
    }
  }
}

TEST(Autodiff, Linearity) {
  Tape t;
  const Var w = t.leaf(random_tensor({4}, 1));
  const Var l1 = t.sum(t.sigmoid(w));
  const Var l2 = t.sum(t.pow(w, 3.0));
  const double a = 0.7, b = -2.5;
  const Var comb = t.add(t.scale(l1, a), t.scale(l2, b));
  const std::vector<Var> wrt{w};
  const Tensor g = t.gradient(comb, wrt)[0], g1 = t.gradient(l1, wrt)[0], g2 = t.gradient(l2, wrt)[0];
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(g[i], a * g1[i] + b * g2[i], 1e-12);
}

TEST(Autodiff, DeterministicAndReplayable) {
  auto run = [] {
    Tape t;
    const Var w = t.leaf(random_tensor({3, 3}, 1));
    const Var x = t.constant(random_tensor({2, 3}, 2));
    const Var l = t.mean(t.sigmoid(t.matmul(x, w)));
    return std::make_pair(t.value(l), t.gradient(l, std::vector<Var>{w})[0]);
  };
  EXPECT_EQ(run(), run());

  Tape t;
  const Var w = t.leaf(random_tensor({3}, 3));
  const Var y = t.sum(t.square(t.relu(w)));
  const auto values = t.replay(std::vector<Tensor>{random_tensor({3}, 3)});
  EXPECT_EQ(values[static_cast<std::size_t>(y.id)], t.value(y));
  const auto other = t.replay(std::vector<Tensor>{Tensor(Shape{3}, 2.0)});
  EXPECT_EQ(other[static_cast<std::size_t>(y.id)].item(), 12.0);
}

TEST(Autodiff, ShapeErrorNamesTheNode) {
  Tape t;
  const Var a = t.leaf(random_tensor({2, 3}, 1));
  const Var b = t.leaf(random_tensor({2, 3}, 2));
  try {
    t.matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("matmul"), std::string::npos) << e.what();
  }
}

TEST(Autodiff, UnknownPrimitiveIsUnsupported) {
  Tape t;
  const std::vector<Var> a{t.leaf(random_tensor({2}, 1))};
  EXPECT_THROW(t.apply("tanh", a), UnsupportedOp);
  EXPECT_EQ(t.value(t.apply("square", a)), ops::square(t.value(a[0])));
}

TEST(Autodiff, NonFiniteValueFailsFastNamingTheNode) {
  Tape t;
  const Var a = t.leaf(Tensor(Shape{2}, std::vector<double>{1.0, 1e200}));
  try {
    t.square(a);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("square"), std::string::npos) << e.what();
  }
}

TEST(Autodiff, CustomOpIsFirstOrderOnly) {
  auto cube = std::make_shared<CustomUnary>(CustomUnary{"cube", [](double x) { return x * x * x; },
                                                        [](double x) { return 3 * x * x; }});
  Tape t;
  const Var w = t.leaf(random_tensor({3}, 1));
  const Var l = t.sum(t.custom(cube, w));
  const std::vector<Var> wrt{w};
  const Tensor g = t.gradient(l, wrt)[0];
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(g[i], 3 * t.value(w)[i] * t.value(w)[i], 1e-14);
  EXPECT_THROW(t.gradient_graph(l, wrt), UnsupportedSecondOrder);
}

// --- gradients through recorded updates -------------------------------------

namespace {

// Outer loss after K steps phi <- phi - alpha * (phi - c) on L = 0.5 |phi - c|^2,
// outer 0.5 |phi_K - d|^2, differentiated w.r.t. the starting phi.
ParameterVector unrolled_quadratic(const Tensor& phi0, const Tensor& c, const Tensor& d, double alpha, int K,
                                   double* outer = nullptr) {
  Tape t;
  const Var w = t.leaf(phi0);
  const Var cv = t.constant(c), dv = t.constant(d);
  Var phi = w;
  for (int k = 0; k < K; ++k) {
    const Var inner = t.scale(t.sum(t.square(t.sub(phi, cv))), 0.5);
    const Var g = t.gradient_graph(inner, std::vector<Var>{phi})[0];
    phi = t.sub(phi, t.scale(g, alpha));
  }
  const Var out = t.scale(t.sum(t.square(t.sub(phi, dv))), 0.5);
  if (outer) *outer = t.value(out).item();
  ParameterVector layout;
  layout.add("phi", phi0);
  return grad_through_update(t, out, std::vector<Var>{w}, layout);
}

}  // namespace

TEST(GradThroughUpdate, LinearQuadraticClosedForm) {
  const Tensor phi0 = random_tensor({5}, 1), c = random_tensor({5}, 2), d = random_tensor({5}, 3);
  for (double alpha : {0.1, 0.5, 0.9})
    for (int K : {1, 2, 3}) {
      const ParameterVector g = unrolled_quadratic(phi0, c, d, alpha, K);
      const double shrink = std::pow(1 - alpha, K);
      for (std::size_t i = 0; i < 5; ++i) {
        const double phiK = c[i] + shrink * (phi0[i] - c[i]);
        EXPECT_NEAR(g[0][i], shrink * (phiK - d[i]), 1e-10) << "alpha=" << alpha << " K=" << K;
      }
    }
}

TEST(GradThroughUpdate, InnerUpdateIndependentOfWrtGivesZero) {
  Tape t;
  const Var w = t.leaf(random_tensor({3}, 1));
  const Var phi = t.leaf(random_tensor({3}, 2));
  const Var g = t.gradient_graph(t.sum(t.square(phi)), std::vector<Var>{phi})[0];
  const Var out = t.sum(t.square(t.sub(phi, t.scale(g, 0.1))));
  ParameterVector layout;
  layout.add("w", t.value(w));
  EXPECT_EQ(grad_through_update(t, out, std::vector<Var>{w}, layout)[0], Tensor(Shape{3}, 0.0));
}

TEST(GradThroughUpdate, ThreeUnrolledStepsOnMlpMatchFiniteDifferences) {
  // 4 -> 6 -> 3 MLP: 24 + 6 + 18 + 3 = 51 parameters.
  const Architecture arch = Architecture::mlp({6}, 3, Shape{1, 2, 2});
  const ParameterVector p0 = init_params(arch, 11);
  ASSERT_LE(p0.total_dim(), 60u);
  const LabeledBatch inner = random_batch(arch, 6, 12), outer = random_batch(arch, 5, 13);
  const double alpha = 0.3;
  auto unrolled = [&](const ParameterVector& p, ParameterVector* g) {
    Tape t;
    const auto w = bind_leaves(t, p);
    std::vector<Var> phi = w;
    for (int k = 0; k < 3; ++k) {
      const auto gr = t.gradient_graph(loss(t, arch, phi, inner), phi);
      for (std::size_t i = 0; i < phi.size(); ++i) phi[i] = t.sub(phi[i], t.scale(gr[i], alpha));
    }
    const Var out = loss(t, arch, phi, outer);
    if (g) *g = grad_through_update(t, out, w, p);
    return t.value(out).item();
  };
  ParameterVector g;
  unrolled(p0, &g);
  const auto fd = numeric_gradient([&](std::span<const double> x) { return unrolled(p0.unflatten(x), nullptr); },
                                   p0.flatten());
  EXPECT_LE(rel_error(g.flatten(), fd), 1e-4);
}
