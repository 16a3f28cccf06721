#include "foml/unroll.hpp"

#include "foml/autodiff.hpp"
#include "foml/error.hpp"

namespace foml {

namespace {

LossFn model_loss(const Architecture& arch) {
  return [&arch](Tape& tape, std::span<const Var> params, const LabeledBatch& batch) {
    return loss(tape, arch, params, batch);
  };
}

}  // namespace

Var regularizer(Tape& tape, std::span<const Var> phi, std::span<const Var> theta) {
  if (phi.size() != theta.size() || phi.empty()) throw ShapeError("regularizer: phi and theta layouts differ");
  Var total = tape.sum(tape.square(tape.sub(phi[0], theta[0])));
  for (std::size_t i = 1; i < phi.size(); ++i) total = tape.add(total, tape.sum(tape.square(tape.sub(phi[i], theta[i]))));
  return total;
}

double regularizer(const ParameterVector& phi, const ParameterVector& theta) {
  phi.require_same_layout(theta, "regularizer");
  Tape tape;
  const auto p = bind_constants(tape, phi), t = bind_constants(tape, theta);
  return tape.value(regularizer(tape, p, t)).item();
}

Var online_objective(Tape& tape, const LossFn& loss_fn, std::span<const Var> phi, std::span<const Var> theta,
                     const LabeledBatch& batch, double beta1) {
  const Var l = loss_fn(tape, phi, batch);
  if (beta1 == 0.0) return l;
  return tape.add(l, tape.scale(regularizer(tape, phi, theta), beta1));
}

Var online_objective(Tape& tape, const Architecture& arch, std::span<const Var> phi, std::span<const Var> theta,
                     const LabeledBatch& batch, double beta1) {
  return online_objective(tape, model_loss(arch), phi, theta, batch, beta1);
}

std::vector<Var> record_online_step(Tape& tape, const LossFn& loss_fn, std::span<const Var> phi,
                                    std::span<const Var> theta, const LabeledBatch& batch, double beta1,
                                    const OptimizerConfig& opt, TapeOptimizerState& state) {
  const Var obj = online_objective(tape, loss_fn, phi, theta, batch, beta1);
  const auto g = tape.gradient_graph(obj, phi);
  return optimizer_step_on_tape(tape, opt, phi, g, state);
}

std::vector<Var> record_online_step(Tape& tape, const Architecture& arch, std::span<const Var> phi,
                                    std::span<const Var> theta, const LabeledBatch& batch, double beta1,
                                    const OptimizerConfig& opt, TapeOptimizerState& state) {
  return record_online_step(tape, model_loss(arch), phi, theta, batch, beta1, opt, state);
}

MetaGradient foml_meta_gradient(const LossFn& loss_fn, const ParameterVector& theta,
                                std::span<const OnlineStepRecord> window, const OptimizerConfig& online_opt,
                                double beta1, double beta2, const LabeledBatch& dval) {
  if (window.empty()) throw ContractError("meta update needs at least one retained online step");
  const auto& start = window.front();
  theta.require_same_layout(start.phi_before, "meta update");

  Tape tape;
  const auto th = bind_leaves(tape, theta);
  std::vector<Var> phi = bind_constants(tape, start.phi_before);
  TapeOptimizerState st = bind_optimizer_state(tape, start.opt_before);

  std::vector<std::vector<Var>> states{phi};
  for (const auto& rec : window) {
    phi = record_online_step(tape, loss_fn, phi, th, rec.train, beta1, online_opt, st);
    states.push_back(phi);
  }

  const Var val = loss_fn(tape, phi, dval);
  Var obj = val;
  if (beta2 != 0.0) {
    Var pull = regularizer(tape, th, states[0]);
    for (std::size_t k = 1; k < states.size(); ++k) pull = tape.add(pull, regularizer(tape, th, states[k]));
    obj = tape.add(val, tape.scale(pull, beta2));
  }

  MetaGradient out;
  out.val_loss = tape.value(val).item();
  out.objective = tape.value(obj).item();
  out.grad = grad_through_update(tape, obj, th, theta);
  out.phi_end = collect(tape, theta, phi);
  return out;
}

MetaGradient foml_meta_gradient(const Architecture& arch, const ParameterVector& theta,
                                std::span<const OnlineStepRecord> window, const OptimizerConfig& online_opt,
                                double beta1, double beta2, const LabeledBatch& dval) {
  return foml_meta_gradient(model_loss(arch), theta, window, online_opt, beta1, beta2, dval);
}

MamlGradient maml_gradient(const LossFn& loss_fn, const ParameterVector& meta_params, const LabeledBatch& support,
                           const LabeledBatch& query, double inner_lr, std::size_t inner_steps) {
  Tape tape;
  const auto w = bind_leaves(tape, meta_params);
  std::vector<Var> phi = w;
  const OptimizerConfig sgd{OptimizerKind::Sgd, inner_lr};
  TapeOptimizerState st;
  for (std::size_t s = 0; s < inner_steps; ++s) phi = record_online_step(tape, loss_fn, phi, {}, support, 0.0, sgd, st);
  const Var q = loss_fn(tape, phi, query);
  MamlGradient out;
  out.query_loss = tape.value(q).item();
  out.grad = grad_through_update(tape, q, w, meta_params);
  return out;
}

MamlGradient maml_gradient(const Architecture& arch, const ParameterVector& meta_params, const LabeledBatch& support,
                           const LabeledBatch& query, double inner_lr, std::size_t inner_steps) {
  return maml_gradient(model_loss(arch), meta_params, support, query, inner_lr, inner_steps);
}

}  // namespace foml
