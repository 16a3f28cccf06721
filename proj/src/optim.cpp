#include "foml/optim.hpp"

#include <cmath>

#include "foml/error.hpp"

namespace foml {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::Sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer_kind(const std::string& s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + s + "' (expected sgd or adam)");
}

Optimizer::Optimizer(OptimizerConfig config, const ParameterVector& layout) : config_(config) {
  if (config_.kind == OptimizerKind::Adam) {
    state_.m = layout.zeros_like();
    state_.v = layout.zeros_like();
  }
}

void Optimizer::reset() {
  state_.t = 0;
  if (config_.kind == OptimizerKind::Adam) {
    state_.m = state_.m.zeros_like();
    state_.v = state_.v.zeros_like();
  }
}

ParameterVector Optimizer::step(const ParameterVector& params, const ParameterVector& grad) {
  params.require_same_layout(grad, "optimizer step");
  ParameterVector out = params;
  const double lr = config_.lr;
  if (config_.kind == OptimizerKind::Sgd) {
    for (std::size_t i = 0; i < out.num_segments(); ++i) {
      auto& p = out[i].storage();
      const auto& g = grad[i].storage();
      for (std::size_t k = 0; k < p.size(); ++k) p[k] = p[k] - g[k] * lr;
    }
    ++state_.t;
    return out;
  }
  params.require_same_layout(state_.m, "adam moments");
  ++state_.t;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 / (1.0 - std::pow(b1, static_cast<double>(state_.t)));
  const double c2 = 1.0 / (1.0 - std::pow(b2, static_cast<double>(state_.t)));
  // Operation order mirrors optimizer_step_on_tape so both give identical bits.
  for (std::size_t i = 0; i < out.num_segments(); ++i) {
    auto& p = out[i].storage();
    auto& m = state_.m[i].storage();
    auto& v = state_.v[i].storage();
    const auto& g = grad[i].storage();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = m[k] * b1 + g[k] * (1.0 - b1);
      v[k] = v[k] * b2 + (g[k] * g[k]) * (1.0 - b2);
      const double mhat = m[k] * c1;
      const double denom = std::sqrt(v[k] * c2) + config_.eps;
      p[k] = p[k] - (mhat * (1.0 / denom)) * lr;
    }
  }
  return out;
}

TapeOptimizerState bind_optimizer_state(Tape& tape, const OptimizerState& s) {
  TapeOptimizerState out;
  out.t = s.t;
  out.m = bind_constants(tape, s.m);
  out.v = bind_constants(tape, s.v);
  return out;
}

std::vector<Var> optimizer_step_on_tape(Tape& tape, const OptimizerConfig& config, std::span<const Var> params,
                                        std::span<const Var> grads, TapeOptimizerState& state) {
  if (params.size() != grads.size()) throw ShapeError("optimizer_step_on_tape: params/grads count mismatch");
  std::vector<Var> out(params.size());
  ++state.t;
  if (config.kind == OptimizerKind::Sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) out[i] = tape.sub(params[i], tape.scale(grads[i], config.lr));
    return out;
  }
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw ShapeError("optimizer_step_on_tape: moment count mismatch");
  const double b1 = config.beta1, b2 = config.beta2;
  const double c1 = 1.0 / (1.0 - std::pow(b1, static_cast<double>(state.t)));
  const double c2 = 1.0 / (1.0 - std::pow(b2, static_cast<double>(state.t)));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Var g = grads[i];
    state.m[i] = tape.add(tape.scale(state.m[i], b1), tape.scale(g, 1.0 - b1));
    state.v[i] = tape.add(tape.scale(state.v[i], b2), tape.scale(tape.square(g), 1.0 - b2));
    const Var mhat = tape.scale(state.m[i], c1);
    const Var denom = tape.add_scalar(tape.sqrt(tape.scale(state.v[i], c2)), config.eps);
    out[i] = tape.sub(params[i], tape.scale(tape.mul(mhat, tape.pow(denom, -1.0)), config.lr));
  }
  return out;
}

}  // namespace foml
