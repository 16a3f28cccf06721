#include "foml/models.hpp"

#include <cmath>
#include <sstream>

#include "foml/error.hpp"
#include "foml/ops.hpp"
#include "foml/rng.hpp"

namespace foml {

std::string to_string(ArchKind kind) {
  switch (kind) {
    case ArchKind::Mlp: return "mlp";
    case ArchKind::Convnet4: return "convnet4";
    case ArchKind::Siamese7: return "siamese7";
  }
  return "?";
}

ArchKind parse_arch_kind(const std::string& s) {
  if (s == "mlp") return ArchKind::Mlp;
  if (s == "convnet4") return ArchKind::Convnet4;
  if (s == "siamese7") return ArchKind::Siamese7;
  throw ConfigError("unknown architecture '" + s + "' (expected mlp, convnet4 or siamese7)");
}

std::vector<std::size_t> Architecture::default_widths(ArchKind kind) {
  switch (kind) {
    case ArchKind::Mlp: return {64};
    case ArchKind::Convnet4: return {32, 32, 64, 64};
    case ArchKind::Siamese7: return {32, 32, 32, 64, 64, 64, 128};
  }
  return {};
}

Architecture Architecture::mlp(std::vector<std::size_t> hidden, std::size_t num_classes, Shape input_shape) {
  Architecture a{ArchKind::Mlp, std::move(hidden), num_classes, std::move(input_shape), 3};
  a.validate();
  return a;
}

Architecture Architecture::convnet4(std::vector<std::size_t> filters, std::size_t num_classes, Shape input_shape) {
  Architecture a{ArchKind::Convnet4, std::move(filters), num_classes, std::move(input_shape), 3};
  a.validate();
  return a;
}

Architecture Architecture::siamese7(std::vector<std::size_t> filters, Shape input_shape) {
  Architecture a{ArchKind::Siamese7, std::move(filters), 2, std::move(input_shape), 3};
  a.validate();
  return a;
}

void Architecture::validate() const {
  if (input_shape.size() != 3) throw ConfigError("input_shape must be [channels, height, width]");
  for (auto d : input_shape)
    if (d == 0) throw ConfigError("input_shape dimensions must be positive");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  for (auto w : widths)
    if (w == 0) throw ConfigError("layer widths must be positive");
  if (kind == ArchKind::Convnet4 && widths.size() != 4) throw ConfigError("convnet4 needs exactly 4 filter counts");
  if (kind == ArchKind::Siamese7 && widths.size() != 7) throw ConfigError("siamese7 needs exactly 7 filter counts");
  if (kind == ArchKind::Siamese7 && num_classes != 2) throw ConfigError("siamese7 is a binary same/different model");
  if (kind != ArchKind::Mlp && kernel % 2 == 0) throw ConfigError("kernel size must be odd");
}

std::string Architecture::describe() const {
  std::ostringstream os;
  os << to_string(kind) << " widths=";
  for (std::size_t i = 0; i < widths.size(); ++i) os << (i ? "," : "") << widths[i];
  os << " classes=" << num_classes << " input=" << shape_string(input_shape);
  return os.str();
}

void validate_batch(const Architecture& arch, const LabeledBatch& batch) {
  if (batch.labels.empty()) throw ContractError("empty batch");
  const Shape expect{batch.labels.size(), arch.input_shape[0], arch.input_shape[1], arch.input_shape[2]};
  if (batch.inputs.shape() != expect)
    throw ShapeError("batch inputs " + shape_string(batch.inputs.shape()) + " do not match architecture input " +
                     shape_string(expect));
  if (arch.is_pair() != batch.is_pair())
    throw ShapeError(arch.is_pair() ? "pair architecture needs pair inputs" : "unexpected pair inputs");
  if (batch.is_pair() && batch.pair_inputs->shape() != expect)
    throw ShapeError("pair inputs " + shape_string(batch.pair_inputs->shape()) + " do not match " + shape_string(expect));
  for (int y : batch.labels)
    if (y < 0 || static_cast<std::size_t>(y) >= arch.num_classes)
      throw ContractError("label " + std::to_string(y) + " outside [0," + std::to_string(arch.num_classes) + ")");
}

namespace {

void add_uniform(ParameterVector& p, const std::string& name, Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  Tensor t(std::move(shape));
  for (auto& v : t.storage()) v = rng.uniform(-bound, bound);
  p.add(name, std::move(t));
}

std::size_t input_dim(const Architecture& a) { return shape_size(a.input_shape); }

Var conv_stack(Tape& tape, const Architecture& arch, std::span<const Var> params, Var x, std::size_t& used) {
  const bool siamese = arch.kind == ArchKind::Siamese7;
  Var h = x;
  for (std::size_t l = 0; l < arch.widths.size(); ++l) {
    h = tape.relu(tape.add_bias(tape.conv2d(h, params[used]), params[used + 1], 1));
    used += 2;
    // convnet4 pools after every layer, the pair net after every other layer,
    // while the feature map is still at least 2x2.
    const bool pool = siamese ? (l % 2 == 1) : true;
    const Shape& s = tape.value(h).shape();
    if (pool && s[2] >= 2 && s[3] >= 2) h = tape.max_pool(h);
  }
  return tape.avg_pool(h);
}

}  // namespace

ParameterVector init_params(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  Rng rng(seed);
  ParameterVector p;
  switch (arch.kind) {
    case ArchKind::Mlp: {
      std::size_t in = input_dim(arch);
      for (std::size_t l = 0; l < arch.widths.size(); ++l) {
        add_uniform(p, "fc" + std::to_string(l) + ".weight", Shape{in, arch.widths[l]}, in, rng);
        p.add("fc" + std::to_string(l) + ".bias", Tensor(Shape{arch.widths[l]}));
        in = arch.widths[l];
      }
      add_uniform(p, "out.weight", Shape{in, arch.num_classes}, in, rng);
      p.add("out.bias", Tensor(Shape{arch.num_classes}));
      break;
    }
    case ArchKind::Convnet4:
    case ArchKind::Siamese7: {
      std::size_t in = arch.input_shape[0];
      for (std::size_t l = 0; l < arch.widths.size(); ++l) {
        const std::size_t fan_in = in * arch.kernel * arch.kernel;
        add_uniform(p, "conv" + std::to_string(l) + ".weight", Shape{arch.widths[l], in, arch.kernel, arch.kernel},
                    fan_in, rng);
        p.add("conv" + std::to_string(l) + ".bias", Tensor(Shape{arch.widths[l]}));
        in = arch.widths[l];
      }
      add_uniform(p, "out.weight", Shape{in, arch.output_width()}, in, rng);
      p.add("out.bias", Tensor(Shape{arch.output_width()}));
      break;
    }
  }
  return p;
}

Var forward(Tape& tape, const Architecture& arch, std::span<const Var> params, const LabeledBatch& batch) {
  validate_batch(arch, batch);
  const std::size_t B = batch.size();
  std::size_t used = 0;
  switch (arch.kind) {
    case ArchKind::Mlp: {
      if (params.size() != 2 * arch.widths.size() + 2) throw ShapeError("mlp parameter count mismatch");
      Var h = tape.reshape(tape.constant(batch.inputs), Shape{B, input_dim(arch)});
      for (std::size_t l = 0; l < arch.widths.size(); ++l) {
        h = tape.relu(tape.add_bias(tape.matmul(h, params[used]), params[used + 1], 1));
        used += 2;
      }
      return tape.add_bias(tape.matmul(h, params[used]), params[used + 1], 1);
    }
    case ArchKind::Convnet4: {
      if (params.size() != 2 * arch.widths.size() + 2) throw ShapeError("convnet4 parameter count mismatch");
      Var feat = conv_stack(tape, arch, params, tape.constant(batch.inputs), used);
      return tape.add_bias(tape.matmul(feat, params[used]), params[used + 1], 1);
    }
    case ArchKind::Siamese7: {
      if (params.size() != 2 * arch.widths.size() + 2) throw ShapeError("siamese7 parameter count mismatch");
      Var e1 = conv_stack(tape, arch, params, tape.constant(batch.inputs), used);
      used = 0;
      Var e2 = conv_stack(tape, arch, params, tape.constant(*batch.pair_inputs), used);
      Var feat = tape.abs(tape.sub(e1, e2));
      return tape.add_bias(tape.matmul(feat, params[used]), params[used + 1], 1);
    }
  }
  throw ContractError("unknown architecture");
}

Var loss(Tape& tape, const Architecture& arch, std::span<const Var> params, const LabeledBatch& batch) {
  Var logits = forward(tape, arch, params, batch);
  if (arch.is_pair()) {
    Tensor y(Shape{batch.size(), 1});
    for (std::size_t i = 0; i < batch.size(); ++i) y[i] = batch.labels[i];
    return tape.binary_cross_entropy(logits, tape.constant(std::move(y)));
  }
  return tape.softmax_cross_entropy(logits, tape.constant(ops::one_hot(batch.labels, arch.num_classes)));
}

Tensor predict(const Architecture& arch, const ParameterVector& params, const LabeledBatch& batch) {
  Tape tape;
  const auto vars = bind_constants(tape, params);
  return tape.value(forward(tape, arch, vars, batch));
}

double batch_loss(const Architecture& arch, const ParameterVector& params, const LabeledBatch& batch) {
  Tape tape;
  const auto vars = bind_constants(tape, params);
  return tape.value(loss(tape, arch, vars, batch)).item();
}

LossGrad loss_and_grad(const Architecture& arch, const ParameterVector& params, const LabeledBatch& batch) {
  Tape tape;
  const auto vars = bind_leaves(tape, params);
  const Var l = loss(tape, arch, vars, batch);
  return {tape.value(l).item(), collect(params, tape.gradient(l, vars))};
}

std::vector<int> predicted_labels(const Architecture& arch, const Tensor& logits) {
  const std::size_t B = logits.dim(0), C = logits.dim(1);
  std::vector<int> out(B);
  for (std::size_t b = 0; b < B; ++b) {
    if (arch.is_pair()) {
      out[b] = logits[b] > 0.0 ? 1 : 0;
      continue;
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < C; ++c)
      if (logits[b * C + c] > logits[b * C + best]) best = c;
    out[b] = static_cast<int>(best);
  }
  return out;
}

}  // namespace foml
