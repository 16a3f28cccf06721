#include <algorithm>

#include "foml/error.hpp"
#include "foml/learners.hpp"

namespace foml {

std::size_t toe_update_budget(std::size_t base, std::size_t increment, std::size_t every, std::size_t task_index) {
  if (every == 0) return base;
  return base + increment * (task_index / every);
}

std::size_t updates_at_step(std::size_t budget, std::size_t steps_per_task, std::size_t step_in_task) {
  if (steps_per_task == 0) throw ConfigError("steps per task must be positive");
  const std::size_t s = step_in_task % steps_per_task;
  return budget * (s + 1) / steps_per_task - budget * s / steps_per_task;
}

namespace {

OptimizerConfig adam(double lr) {
  OptimizerConfig c;
  c.lr = lr;
  return c;
}

// `n` full-batch updates; returns the loss seen before each one.
std::vector<double> train_steps(const Architecture& arch, ParameterVector& params, Optimizer& opt,
                                const LabeledBatch& data, std::size_t n) {
  std::vector<double> losses;
  for (std::size_t i = 0; i < n; ++i) {
    const LossGrad lg = loss_and_grad(arch, params, data);
    losses.push_back(lg.loss);
    params = opt.step(params, lg.grad);
  }
  return losses;
}

void replay_steps(const Architecture& arch, ParameterVector& params, Optimizer& opt, ReplayBuffer& buffer,
                  std::size_t batch, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const LossGrad lg = loss_and_grad(arch, params, buffer.sample_random(batch));
    params = opt.step(params, lg.grad);
  }
}

void save_batches(BinaryWriter& w, const std::vector<LabeledBatch>& v) {
  w.u64(v.size());
  for (const auto& b : v) w.batch(b);
}

std::vector<LabeledBatch> load_batches(BinaryReader& r) {
  std::vector<LabeledBatch> v(r.u64());
  for (auto& b : v) b = r.batch();
  return v;
}

ParameterVector load_like(BinaryReader& r, const ParameterVector& layout, const char* what) {
  ParameterVector p = r.params();
  p.require_same_layout(layout, what);
  return p;
}

}  // namespace

// --- TFS ------------------------------------------------------------------

TfsLearner::TfsLearner(Architecture arch, BaselineHyper hyper, std::uint64_t seed)
    : arch_(std::move(arch)), hyper_(hyper), seed_(seed) {
  params_ = init_params(arch_, derive_seed(seed_, 0));
  opt_ = Optimizer(adam(hyper_.lr), params_);
}

StepReport TfsLearner::step(const Observation& obs, bool boundary) {
  if (boundary) {
    if (started_) ++task_;
    started_ = true;
    params_ = init_params(arch_, derive_seed(seed_, task_));
    opt_.reset();
    current_.clear();
    step_in_task_ = 0;
  }
  StepReport report = evaluate_batch(arch_, params_, obs.batch);
  current_.push_back(obs.batch);
  const std::size_t n = updates_at_step(hyper_.task_updates, hyper_.steps_per_task, step_in_task_++);
  update_losses_ = train_steps(arch_, params_, opt_, concat(current_), n);
  return report;
}

void TfsLearner::save(BinaryWriter& w) const {
  w.params(params_);
  w.optimizer(opt_.state());
  save_batches(w, current_);
  w.u64(task_);
  w.u64(step_in_task_);
  w.boolean(started_);
}

void TfsLearner::load(BinaryReader& r) {
  params_ = load_like(r, params_, "checkpointed parameters");
  opt_.set_state(r.optimizer());
  current_ = load_batches(r);
  task_ = r.u64();
  step_in_task_ = r.u64();
  started_ = r.boolean();
}

// --- TOE ------------------------------------------------------------------

ToeLearner::ToeLearner(Architecture arch, BaselineHyper hyper, std::uint64_t seed)
    : arch_(std::move(arch)), hyper_(hyper), buffer_(derive_seed(seed, 1)) {
  params_ = init_params(arch_, derive_seed(seed, 0));
  opt_ = Optimizer(adam(hyper_.lr), params_);
}

StepReport ToeLearner::step(const Observation& obs) {
  StepReport report = evaluate_batch(arch_, params_, obs.batch);
  buffer_.append(obs.batch);
  const std::size_t S = hyper_.steps_per_task;
  const std::size_t budget = toe_update_budget(hyper_.toe_updates, hyper_.toe_increment, hyper_.toe_every, j_ / S);
  replay_steps(arch_, params_, opt_, buffer_, hyper_.replay_batch, updates_at_step(budget, S, j_ % S));
  ++j_;
  return report;
}

void ToeLearner::save(BinaryWriter& w) const {
  w.params(params_);
  w.optimizer(opt_.state());
  w.buffer(buffer_);
  w.u64(j_);
}

void ToeLearner::load(BinaryReader& r) {
  params_ = load_like(r, params_, "checkpointed parameters");
  opt_.set_state(r.optimizer());
  r.buffer(buffer_);
  j_ = r.u64();
}

// --- FTL ------------------------------------------------------------------

FtlLearner::FtlLearner(Architecture arch, BaselineHyper hyper, std::uint64_t seed)
    : arch_(std::move(arch)), hyper_(hyper), past_(derive_seed(seed, 1)) {
  pretrained_ = init_params(arch_, derive_seed(seed, 0));
  pre_opt_ = Optimizer(adam(hyper_.lr), pretrained_);
  tuned_ = pretrained_;
  tune_opt_ = Optimizer(adam(hyper_.lr), tuned_);
}

StepReport FtlLearner::step(const Observation& obs, bool boundary) {
  if (boundary) {
    if (started_) {
      past_.append(concat(current_));
      ++completed_;
    }
    started_ = true;
    current_.clear();
    tuned_ = pretrained_;
    tune_opt_.reset();
    step_in_task_ = 0;
  }
  StepReport report = evaluate_batch(arch_, tuned_, obs.batch);
  current_.push_back(obs.batch);
  const std::size_t S = hyper_.steps_per_task;
  if (!past_.empty()) {
    const std::size_t budget = toe_update_budget(hyper_.toe_updates, hyper_.toe_increment, hyper_.toe_every, completed_);
    replay_steps(arch_, pretrained_, pre_opt_, past_, hyper_.replay_batch, updates_at_step(budget, S, step_in_task_));
  }
  train_steps(arch_, tuned_, tune_opt_, concat(current_), updates_at_step(hyper_.task_updates, S, step_in_task_));
  ++step_in_task_;
  return report;
}

void FtlLearner::save(BinaryWriter& w) const {
  w.params(pretrained_);
  w.optimizer(pre_opt_.state());
  w.params(tuned_);
  w.optimizer(tune_opt_.state());
  w.buffer(past_);
  save_batches(w, current_);
  w.u64(completed_);
  w.u64(step_in_task_);
  w.boolean(started_);
}

void FtlLearner::load(BinaryReader& r) {
  pretrained_ = load_like(r, pretrained_, "checkpointed parameters");
  pre_opt_.set_state(r.optimizer());
  tuned_ = load_like(r, tuned_, "checkpointed parameters");
  tune_opt_.set_state(r.optimizer());
  r.buffer(past_);
  current_ = load_batches(r);
  completed_ = r.u64();
  step_in_task_ = r.u64();
  started_ = r.boolean();
}

// --- FTML -----------------------------------------------------------------

FtmlLearner::FtmlLearner(Architecture arch, BaselineHyper hyper, std::uint64_t seed)
    : arch_(std::move(arch)), hyper_(hyper), rng_(derive_seed(seed, 2)) {
  meta_ = init_params(arch_, derive_seed(seed, 0));
  meta_opt_ = Optimizer(adam(hyper_.ftml_outer_lr), meta_);
  adapted_ = meta_;
  OptimizerConfig inner;
  inner.kind = OptimizerKind::Sgd;
  inner.lr = hyper_.ftml_inner_lr;
  adapt_opt_ = Optimizer(inner, adapted_);
}

void FtmlLearner::outer_step() {
  const LabeledBatch& task = tasks_[rng_.below(tasks_.size())];
  const std::size_t n = task.size();
  std::size_t n_support = static_cast<std::size_t>(hyper_.ftml_support_fraction * static_cast<double>(n));
  n_support = std::clamp<std::size_t>(n_support, 1, n - 1);
  auto draw = [&](std::size_t lo, std::size_t hi, std::size_t count) {
    std::vector<LabeledBatch> rows;
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t k = lo + rng_.below(hi - lo);
      rows.push_back(slice(task, k, k + 1));
    }
    return concat(rows);
  };
  const LabeledBatch support = draw(0, n_support, hyper_.ftml_support_batch);
  const LabeledBatch query = draw(n_support, n, hyper_.ftml_query_batch);
  const MamlGradient g = maml_gradient(arch_, meta_, support, query, hyper_.ftml_inner_lr, hyper_.ftml_inner_steps);
  meta_ = meta_opt_.step(meta_, g.grad);
}

StepReport FtmlLearner::step(const Observation& obs, bool boundary) {
  if (boundary) {
    if (started_) tasks_.push_back(concat(current_));
    started_ = true;
    current_.clear();
    adapted_ = meta_;
    adapt_opt_.reset();
    step_in_task_ = 0;
  }
  StepReport report = evaluate_batch(arch_, adapted_, obs.batch);
  current_.push_back(obs.batch);
  const std::size_t S = hyper_.steps_per_task;
  if (!tasks_.empty() && tasks_.front().size() >= 2) {
    const std::size_t budget =
        toe_update_budget(hyper_.toe_updates, hyper_.toe_increment, hyper_.toe_every, tasks_.size());
    for (std::size_t i = updates_at_step(budget, S, step_in_task_); i > 0; --i) outer_step();
  }
  train_steps(arch_, adapted_, adapt_opt_, concat(current_), updates_at_step(hyper_.task_updates, S, step_in_task_));
  ++step_in_task_;
  return report;
}

void FtmlLearner::save(BinaryWriter& w) const {
  w.params(meta_);
  w.optimizer(meta_opt_.state());
  w.params(adapted_);
  w.optimizer(adapt_opt_.state());
  save_batches(w, tasks_);
  save_batches(w, current_);
  w.rng(rng_);
  w.u64(step_in_task_);
  w.boolean(started_);
}

void FtmlLearner::load(BinaryReader& r) {
  meta_ = load_like(r, meta_, "checkpointed parameters");
  meta_opt_.set_state(r.optimizer());
  adapted_ = load_like(r, adapted_, "checkpointed parameters");
  adapt_opt_.set_state(r.optimizer());
  tasks_ = load_batches(r);
  current_ = load_batches(r);
  r.rng(rng_);
  step_in_task_ = r.u64();
  started_ = r.boolean();
}

// ---------------------------------------------------------------------------

std::unique_ptr<Learner> make_learner(const Architecture& arch, const LearnerConfig& config, std::uint64_t seed) {
  switch (config.kind) {
    case LearnerKind::Foml: return std::make_unique<FomlLearner>(arch, config.foml, seed);
    case LearnerKind::Tfs: return std::make_unique<TfsLearner>(arch, config.baseline, seed);
    case LearnerKind::Toe: return std::make_unique<ToeLearner>(arch, config.baseline, seed);
    case LearnerKind::Ftl: return std::make_unique<FtlLearner>(arch, config.baseline, seed);
    case LearnerKind::Ftml: return std::make_unique<FtmlLearner>(arch, config.baseline, seed);
  }
  throw ConfigError("unknown learner kind");
}

}  // namespace foml
