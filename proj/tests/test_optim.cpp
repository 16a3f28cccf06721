#include <gtest/gtest.h>

#include <cmath>

#include "foml/error.hpp"
#include "foml/optim.hpp"
#include "test_util.hpp"

using namespace foml;
using namespace foml::testing;

namespace {

ParameterVector two_segments(std::uint64_t seed) {
  ParameterVector p;
  p.add("a", random_tensor({3, 2}, seed));
  p.add("b", random_tensor({4}, seed + 1));
  return p;
}

}  // namespace

TEST(Optimizer, SgdIsPlainGradientStep) {
  const auto p = two_segments(1), g = two_segments(3);
  Optimizer opt({OptimizerKind::Sgd, 0.1}, p);
  const auto next = opt.step(p, g);
  EXPECT_EQ(next, axpy(p, -0.1, g));
  EXPECT_EQ(opt.state().t, 1u);
}

TEST(Optimizer, AdamMatchesStraightLineReference) {
  const OptimizerConfig cfg{OptimizerKind::Adam, 0.01, 0.9, 0.999, 1e-8};
  auto p = two_segments(1);
  Optimizer opt(cfg, p);
  auto ref = p.flatten();
  std::vector<double> m(ref.size(), 0.0), v(ref.size(), 0.0);
  for (int t = 1; t <= 4; ++t) {
    const auto g = two_segments(10 + t);
    const auto gf = g.flatten();
    for (std::size_t i = 0; i < ref.size(); ++i) {
      m[i] = 0.9 * m[i] + 0.1 * gf[i];
      v[i] = 0.999 * v[i] + 0.001 * gf[i] * gf[i];
      const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      ref[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
    p = opt.step(p, g);
  }
  EXPECT_LE(rel_error(p.flatten(), ref), 1e-12);
}

TEST(Optimizer, ResetClearsMoments) {
  const auto p = two_segments(1);
  Optimizer opt({}, p);
  opt.step(p, two_segments(2));
  opt.reset();
  EXPECT_EQ(opt.state().t, 0u);
  EXPECT_EQ(opt.state().m, p.zeros_like());
  EXPECT_EQ(opt.state().v, p.zeros_like());
}

TEST(Optimizer, LayoutMismatchIsRejected) {
  const auto p = two_segments(1);
  Optimizer opt({}, p);
  ParameterVector other;
  other.add("a", random_tensor({3, 2}, 1));
  EXPECT_THROW(opt.step(p, other), ShapeError);
}

TEST(Optimizer, TapeUpdateAgreesBitwiseWithNumericUpdate) {
  for (auto kind : {OptimizerKind::Sgd, OptimizerKind::Adam}) {
    const OptimizerConfig cfg{kind, 0.05};
    auto p = two_segments(1);
    Optimizer opt(cfg, p);
    for (int k = 0; k < 3; ++k) opt.step(p, two_segments(30 + k));
    const auto g = two_segments(7);

    Tape tape;
    const auto pv = bind_leaves(tape, p);
    const auto gv = bind_constants(tape, g);
    TapeOptimizerState ts = bind_optimizer_state(tape, opt.state());
    const auto next = optimizer_step_on_tape(tape, cfg, pv, gv, ts);

    const auto expect = opt.step(p, g);
    EXPECT_EQ(collect(tape, p, next), expect) << to_string(kind);
    EXPECT_EQ(ts.t, opt.state().t);
    if (kind == OptimizerKind::Adam) {
      EXPECT_EQ(collect(tape, p, ts.m), opt.state().m);
      EXPECT_EQ(collect(tape, p, ts.v), opt.state().v);
    }
  }
}

TEST(Optimizer, TapeAdamStepDifferentiableInGradient) {
  const OptimizerConfig cfg{OptimizerKind::Adam, 0.05};
  const auto p = two_segments(1);
  Optimizer opt(cfg, p);
  opt.step(p, two_segments(2));
  const OptimizerState s0 = opt.state();
  const auto g0 = two_segments(5);
  auto f = [&](const ParameterVector& g, ParameterVector* grad) {
    Tape tape;
    const auto pv = bind_constants(tape, p);
    const auto gv = bind_leaves(tape, g);
    TapeOptimizerState ts = bind_optimizer_state(tape, s0);
    const auto next = optimizer_step_on_tape(tape, cfg, pv, gv, ts);
    Var acc = tape.sum(tape.square(next[0]));
    acc = tape.add(acc, tape.sum(tape.square(next[1])));
    if (grad) *grad = collect(g, tape.gradient(acc, gv));
    return tape.value(acc).item();
  };
  ParameterVector grad;
  f(g0, &grad);
  const auto fd = numeric_gradient([&](std::span<const double> x) { return f(g0.unflatten(x), nullptr); }, g0.flatten());
  EXPECT_LE(rel_error(grad.flatten(), fd), 1e-6);
}

TEST(Optimizer, KindNames) {
  EXPECT_EQ(parse_optimizer_kind("sgd"), OptimizerKind::Sgd);
  EXPECT_EQ(to_string(OptimizerKind::Adam), "adam");
  EXPECT_THROW(parse_optimizer_kind("rmsprop"), ConfigError);
}
