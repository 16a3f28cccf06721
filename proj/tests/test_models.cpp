#include <gtest/gtest.h>

#include <cmath>

#include "foml/error.hpp"
#include "foml/models.hpp"
#include "foml/ops.hpp"
#include "test_util.hpp"

using namespace foml;
using namespace foml::testing;

namespace {

Architecture small_mlp() { return Architecture::mlp({7, 5}, 4, Shape{3, 2, 2}); }
Architecture small_convnet() { return Architecture::convnet4({3, 4, 4, 5}, 4, Shape{3, 8, 8}); }
Architecture small_siamese() { return Architecture::siamese7({2, 2, 3, 3, 3, 4, 4}, Shape{1, 6, 6}); }

LabeledBatch balanced_batch(const Architecture& arch, std::size_t per_class, std::uint64_t seed) {
  LabeledBatch b = random_batch(arch, per_class * arch.num_classes, seed);
  for (std::size_t i = 0; i < b.labels.size(); ++i) b.labels[i] = static_cast<int>(i % arch.num_classes);
  return b;
}

}  // namespace

TEST(InitParams, DeterministicInSeed) {
  for (const auto& arch : {small_mlp(), small_convnet(), small_siamese()}) {
    EXPECT_EQ(init_params(arch, 3), init_params(arch, 3));
    const auto a = init_params(arch, 3).flatten(), b = init_params(arch, 4).flatten();
    const auto p = init_params(arch, 3);
    std::size_t weights = 0, differ = 0, offset = 0;
    for (std::size_t s = 0; s < p.num_segments(); ++s) {
      const std::size_t n = p[s].size();
      const bool bias = p.segment(s).name.ends_with(".bias");
      for (std::size_t i = 0; i < n; ++i) {
        if (bias) {
          EXPECT_EQ(a[offset + i], 0.0) << p.segment(s).name;
        } else {
          ++weights;
          differ += a[offset + i] != b[offset + i];
        }
      }
      offset += n;
    }
    EXPECT_GE(static_cast<double>(differ), 0.99 * static_cast<double>(weights));
  }
}

TEST(InitParams, FanInScaledUniform) {
  const Architecture arch = small_mlp();
  const auto p = init_params(arch, 1);
  const double bound = std::sqrt(6.0 / 12.0);
  double max_abs = 0;
  for (double v : p[0].data()) max_abs = std::max(max_abs, std::abs(v));
  EXPECT_LE(max_abs, bound);
  EXPECT_GT(max_abs, 0.8 * bound);
}

TEST(Predict, ZeroWeightsGiveZeroLogitsAndLogCLoss) {
  for (const auto& arch : {small_mlp(), small_convnet()}) {
    const auto zero = init_params(arch, 1).zeros_like();
    const LabeledBatch b = balanced_batch(arch, 2, 5);
    EXPECT_EQ(predict(arch, zero, b), Tensor(Shape{b.size(), arch.num_classes}, 0.0));
    EXPECT_NEAR(batch_loss(arch, zero, b), std::log(4.0), 1e-15);
  }
  const Architecture ten = Architecture::mlp({4}, 10, Shape{1, 2, 2});
  EXPECT_NEAR(batch_loss(ten, init_params(ten, 1).zeros_like(), balanced_batch(ten, 1, 2)), 2.302585092994046, 1e-12);
}

TEST(Predict, OutputShapes) {
  const auto mlp = small_mlp(), conv = small_convnet(), pair = small_siamese();
  EXPECT_EQ(predict(mlp, init_params(mlp, 1), random_batch(mlp, 3, 1)).shape(), (Shape{3, 4}));
  EXPECT_EQ(predict(conv, init_params(conv, 1), random_batch(conv, 3, 1)).shape(), (Shape{3, 4}));
  EXPECT_EQ(predict(pair, init_params(pair, 1), random_batch(pair, 3, 1)).shape(), (Shape{3, 1}));
}

TEST(Predict, ShapeMismatchIsRejected) {
  const auto mlp = small_mlp();
  const auto p = init_params(mlp, 1);
  LabeledBatch b = random_batch(mlp, 2, 1);
  b.inputs = random_tensor({2, 1, 2, 2}, 2);
  EXPECT_THROW(predict(mlp, p, b), ShapeError);
  LabeledBatch c = random_batch(mlp, 2, 1);
  c.labels.push_back(0);
  EXPECT_THROW(predict(mlp, p, c), ShapeError);
  EXPECT_THROW(predict(small_siamese(), init_params(small_siamese(), 1), random_batch(mlp, 2, 1)), ShapeError);
}

TEST(Predict, MlpMatchesEagerOracle) {
  const Architecture arch = small_mlp();
  const auto p = init_params(arch, 9);
  const LabeledBatch b = random_batch(arch, 4, 10);
  const Tensor logits = predict(arch, p, b);
  // relu(relu(x W0 + b0) W1 + b1) W2 + b2, with biases made non-zero.
  auto q = p;
  for (std::size_t s : {1u, 3u, 5u}) q[s] = random_tensor(q[s].shape(), 20 + s);
  const Tensor lq = predict(arch, q, b);
  for (const auto& [params, out] : {std::pair{&p, &logits}, std::pair{static_cast<const ParameterVector*>(&q), &lq}}) {
    const Tensor x = b.inputs.reshaped(Shape{4, 12});
    Tensor h = ops::relu(ops::add_bias(ops::matmul(x, (*params)[0]), (*params)[1], 1));
    h = ops::relu(ops::add_bias(ops::matmul(h, (*params)[2]), (*params)[3], 1));
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t c = 0; c < 4; ++c) {
        double acc = (*params)[5][c];
        for (std::size_t k = 0; k < 5; ++k) acc += h[i * 5 + k] * (*params)[4][k * 4 + c];
        EXPECT_NEAR((*out)[i * 4 + c], acc, 1e-12);
      }
  }
}

TEST(Predict, SiameseIdenticalPairHasZeroDistanceFeature) {
  const Architecture arch = small_siamese();
  const auto p = init_params(arch, 2);
  LabeledBatch b = random_batch(arch, 3, 4);
  b.pair_inputs = b.inputs;
  const Tensor logits = predict(arch, p, b);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(logits[i], p.at("out.bias")[0]);
}

TEST(Predict, SiameseSymmetricInPairOrder) {
  const Architecture arch = small_siamese();
  const auto p = init_params(arch, 2);
  LabeledBatch b = random_batch(arch, 4, 6);
  LabeledBatch swapped = b;
  std::swap(swapped.inputs, *swapped.pair_inputs);
  EXPECT_EQ(predict(arch, p, b), predict(arch, p, swapped));
}

TEST(Loss, SaturatedLogitsGiveVanishingLoss) {
  Tape t;
  Tensor z(Shape{2, 3}, 0.0);
  z[1] = 20.0;
  z[3 + 2] = 20.0;
  const Var l = t.softmax_cross_entropy(t.constant(z), t.constant(ops::one_hot({1, 2}, 3)));
  EXPECT_LT(t.value(l).item(), 1e-8);
  EXPECT_GE(t.value(l).item(), 0.0);
}

TEST(Loss, BatchLossIsMeanOfPerExampleLosses) {
  for (const auto& arch : {small_mlp(), small_convnet(), small_siamese()}) {
    const auto p = init_params(arch, 3);
    const LabeledBatch b = random_batch(arch, 2, 8);
    LabeledBatch first = b, second = b;
    first.labels = {b.labels[0]};
    second.labels = {b.labels[1]};
    const std::size_t item = shape_size(arch.input_shape);
    Shape one{1};
    one.insert(one.end(), arch.input_shape.begin(), arch.input_shape.end());
    auto take = [&](const Tensor& t, std::size_t i) {
      return Tensor(one, std::vector<double>(t.storage().begin() + i * item, t.storage().begin() + (i + 1) * item));
    };
    first.inputs = take(b.inputs, 0);
    second.inputs = take(b.inputs, 1);
    if (b.is_pair()) {
      first.pair_inputs = take(*b.pair_inputs, 0);
      second.pair_inputs = take(*b.pair_inputs, 1);
    }
    const double expect = 0.5 * (batch_loss(arch, p, first) + batch_loss(arch, p, second));
    EXPECT_NEAR(batch_loss(arch, p, b), expect, 1e-12);
    EXPECT_GE(batch_loss(arch, p, b), 0.0);
  }
}

TEST(Loss, GradientPassesFiniteDifferencesOnEveryArchitecture) {
  for (const auto& arch : {small_mlp(), small_convnet(), small_siamese()}) {
    auto p = init_params(arch, 5);
    for (std::size_t s = 0; s < p.num_segments(); ++s)
      if (p.segment(s).name.ends_with(".bias")) p[s] = random_tensor(p[s].shape(), 40 + s, -0.1, 0.1);
    const LabeledBatch b = random_batch(arch, 3, 6);
    const LossGrad lg = loss_and_grad(arch, p, b);
    EXPECT_EQ(lg.loss, batch_loss(arch, p, b));
    const auto fd = numeric_gradient(
        [&](std::span<const double> x) { return batch_loss(arch, p.unflatten(x), b); }, p.flatten());
    EXPECT_LE(rel_error(lg.grad.flatten(), fd), 1e-6) << arch.describe();
  }
}

TEST(PredictedLabels, TiesGoToLowerIndex) {
  const Architecture arch = small_mlp();
  const Tensor logits(Shape{2, 4}, std::vector<double>{1, 3, 3, 0, 2, 2, 2, 2});
  EXPECT_EQ(predicted_labels(arch, logits), (std::vector<int>{1, 0}));
  const Tensor pair(Shape{3, 1}, std::vector<double>{-0.1, 0.0, 0.1});
  EXPECT_EQ(predicted_labels(small_siamese(), pair), (std::vector<int>{0, 0, 1}));
}

TEST(Architecture, ValidationAndNames) {
  EXPECT_EQ(parse_arch_kind("convnet4"), ArchKind::Convnet4);
  EXPECT_EQ(to_string(ArchKind::Siamese7), "siamese7");
  EXPECT_THROW(parse_arch_kind("resnet"), ConfigError);
  EXPECT_EQ(Architecture::default_widths(ArchKind::Convnet4), (std::vector<std::size_t>{32, 32, 64, 64}));
  Architecture bad = small_siamese();
  bad.widths.pop_back();
  EXPECT_THROW(bad.validate(), ConfigError);
}
