#include <cmath>

#include "foml/error.hpp"
#include "foml/learners.hpp"
#include "foml/ops.hpp"

namespace foml {

std::string to_string(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::Foml: return "foml";
    case LearnerKind::Tfs: return "tfs";
    case LearnerKind::Toe: return "toe";
    case LearnerKind::Ftl: return "ftl";
    case LearnerKind::Ftml: return "ftml";
  }
  return "?";
}

LearnerKind parse_learner_kind(const std::string& s) {
  if (s == "foml") return LearnerKind::Foml;
  if (s == "tfs") return LearnerKind::Tfs;
  if (s == "toe") return LearnerKind::Toe;
  if (s == "ftl") return LearnerKind::Ftl;
  if (s == "ftml") return LearnerKind::Ftml;
  throw ConfigError("unknown learner '" + s + "' (expected foml, tfs, toe, ftl or ftml)");
}

bool needs_boundaries(LearnerKind kind) {
  return kind == LearnerKind::Tfs || kind == LearnerKind::Ftl || kind == LearnerKind::Ftml;
}

StepReport evaluate_batch(const Architecture& arch, const ParameterVector& params, const LabeledBatch& batch) {
  Tape tape;
  const auto p = bind_constants(tape, params);
  const Var logits = forward(tape, arch, p, batch);
  const Tensor targets = arch.is_pair() ? [&] {
    Tensor y(Shape{batch.size(), 1});
    for (std::size_t i = 0; i < batch.size(); ++i) y[i] = batch.labels[i];
    return y;
  }()
                                        : ops::one_hot(batch.labels, arch.num_classes);
  const Var t = tape.constant(targets);
  const Var l = arch.is_pair() ? tape.binary_cross_entropy(logits, t) : tape.softmax_cross_entropy(logits, t);
  StepReport r;
  r.loss = tape.value(l).item();
  r.count = batch.size();
  const auto pred = predicted_labels(arch, tape.value(logits));
  for (std::size_t i = 0; i < pred.size(); ++i) r.correct += pred[i] == batch.labels[i];
  return r;
}

std::pair<LabeledBatch, std::optional<LabeledBatch>> split_batch(const LabeledBatch& batch, double train_fraction) {
  const std::size_t n = batch.size();
  if (n == 0) throw ContractError("cannot split an empty batch");
  auto n_tr = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  n_tr = std::max<std::size_t>(1, std::min(n_tr, n));
  if (n_tr == n) return {batch, std::nullopt};
  return {slice(batch, 0, n_tr), slice(batch, n_tr, n)};
}

namespace {

OptimizerConfig opt_config(OptimizerKind kind, double lr) {
  OptimizerConfig c;
  c.kind = kind;
  c.lr = lr;
  return c;
}

}  // namespace

FomlLearner::FomlLearner(Architecture arch, FomlHyper hyper, std::uint64_t seed)
    : arch_(std::move(arch)), buffer_(derive_seed(seed, 1)) {
  if (hyper.K == 0) throw ConfigError("K must be at least 1");
  if (hyper.meta_batch == 0) throw ConfigError("meta batch size must be positive");
  state_.hyper = hyper;
  state_.phi = init_params(arch_, derive_seed(seed, 0));
  state_.theta = state_.phi;
  state_.online_opt = Optimizer(opt_config(hyper.online_optimizer, hyper.alpha1), state_.phi);
  state_.meta_opt = Optimizer(opt_config(hyper.meta_optimizer, hyper.alpha2), state_.theta);
}

void FomlLearner::online_update(const LabeledBatch& dtr) {
  auto& s = state_;
  OnlineStepRecord rec{s.phi, s.online_opt.state(), dtr};

  Tape tape;
  const auto phi = bind_leaves(tape, s.phi);
  std::vector<Var> theta;
  if (s.hyper.beta1 != 0.0) theta = bind_constants(tape, s.theta);
  const Var obj = online_objective(tape, arch_, phi, theta, dtr, s.hyper.beta1);
  const ParameterVector g = collect(s.phi, tape.gradient(obj, phi));
  s.phi = s.online_opt.step(s.phi, g);

  s.trajectory.push_back(std::move(rec));
  if (s.trajectory.size() > s.hyper.K) s.trajectory.erase(s.trajectory.begin());
  ++s.j;
}

MetaGradient FomlLearner::meta_update(const LabeledBatch& dval) {
  auto& s = state_;
  MetaGradient mg = foml_meta_gradient(arch_, s.theta, s.trajectory, s.online_opt.config(), s.hyper.beta1,
                                       s.hyper.beta2, dval);
  s.theta = s.meta_opt.step(s.theta, mg.grad);
  return mg;
}

StepReport FomlLearner::step(const Observation& obs) {
  const auto& h = state_.hyper;
  auto [dtr, dval] = split_batch(obs.batch, h.train_fraction);
  StepReport report = evaluate_batch(arch_, state_.phi, dtr);
  buffer_.append(obs.batch);
  online_update(dtr);
  if (dval) report.val_loss = batch_loss(arch_, state_.phi, *dval);
  if (h.meta_updates) {
    const LabeledBatch dm = buffer_.sample_random(h.meta_batch, h.exclude_current_batch ? obs.batch.size() : 0);
    report.meta_loss = meta_update(dm).val_loss;
  }
  return report;
}

void FomlLearner::save(BinaryWriter& w) const {
  const auto& s = state_;
  w.params(s.phi);
  w.params(s.theta);
  w.u64(s.j);
  w.optimizer(s.online_opt.state());
  w.optimizer(s.meta_opt.state());
  w.u64(s.trajectory.size());
  for (const auto& r : s.trajectory) {
    w.params(r.phi_before);
    w.optimizer(r.opt_before);
    w.batch(r.train);
  }
  w.buffer(buffer_);
}

void FomlLearner::load(BinaryReader& r) {
  auto& s = state_;
  ParameterVector phi = r.params(), theta = r.params();
  phi.require_same_layout(s.phi, "checkpointed phi");
  theta.require_same_layout(s.theta, "checkpointed theta");
  s.phi = std::move(phi);
  s.theta = std::move(theta);
  s.j = r.u64();
  s.online_opt.set_state(r.optimizer());
  s.meta_opt.set_state(r.optimizer());
  const auto n = r.u64();
  if (n > s.hyper.K) throw FormatError("checkpoint trajectory longer than K");
  s.trajectory.clear();
  for (std::uint64_t i = 0; i < n; ++i) {
    OnlineStepRecord rec;
    rec.phi_before = r.params();
    rec.opt_before = r.optimizer();
    rec.train = r.batch();
    s.trajectory.push_back(std::move(rec));
  }
  r.buffer(buffer_);
}

}  // namespace foml
