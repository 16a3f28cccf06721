#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "foml/models.hpp"
#include "foml/optim.hpp"
#include "foml/params.hpp"
#include "foml/rng.hpp"
#include "foml/serialize.hpp"
#include "foml/streams.hpp"
#include "foml/unroll.hpp"

namespace foml {

// Everything a learner is allowed to see about one stream step.
struct Observation {
  LabeledBatch batch;
  std::size_t step = 0;
};

// Pre-update predictions are what online metrics are computed from.
struct StepReport {
  double loss = 0.0;
  std::size_t correct = 0;
  std::size_t count = 0;
  std::optional<double> val_loss;
  std::optional<double> meta_loss;
};

enum class LearnerKind { Foml, Tfs, Toe, Ftl, Ftml };

std::string to_string(LearnerKind kind);
LearnerKind parse_learner_kind(const std::string& s);
bool needs_boundaries(LearnerKind kind);

class Learner {
 public:
  virtual ~Learner() = default;
  virtual LearnerKind kind() const = 0;
  // Weights used for evaluation right now.
  virtual const ParameterVector& prediction_params() const = 0;
  virtual void save(BinaryWriter& w) const = 0;
  virtual void load(BinaryReader& r) = 0;
};

class BoundaryFreeLearner : public Learner {
 public:
  virtual StepReport step(const Observation& obs) = 0;
};

// `boundary` is true on the first step of every task, including the first.
class BoundaryAwareLearner : public Learner {
 public:
  virtual StepReport step(const Observation& obs, bool boundary) = 0;
};

// --- FOML -------------------------------------------------------------------

struct FomlHyper {
  double alpha1 = 0.001;  // online learning rate
  double alpha2 = 0.001;  // meta learning rate
  double beta1 = 0.01;    // pull of phi toward theta
  double beta2 = 0.001;   // pull of theta toward recent phi
  std::size_t K = 10;
  std::size_t meta_batch = 10;
  double train_fraction = 0.8;
  bool meta_updates = true;
  bool exclude_current_batch = false;
  OptimizerKind online_optimizer = OptimizerKind::Adam;
  OptimizerKind meta_optimizer = OptimizerKind::Adam;

  friend bool operator==(const FomlHyper&, const FomlHyper&) = default;
};

struct FomlState {
  ParameterVector phi;
  ParameterVector theta;
  std::vector<OnlineStepRecord> trajectory;  // oldest first, at most K
  std::uint64_t j = 0;
  Optimizer online_opt;
  Optimizer meta_opt;
  FomlHyper hyper;
};

// Split of one incoming batch into online-train and validation parts.
std::pair<LabeledBatch, std::optional<LabeledBatch>> split_batch(const LabeledBatch& batch, double train_fraction);

class FomlLearner final : public BoundaryFreeLearner {
 public:
  FomlLearner(Architecture arch, FomlHyper hyper, std::uint64_t seed);

  LearnerKind kind() const override { return LearnerKind::Foml; }
  StepReport step(const Observation& obs) override;
  const ParameterVector& prediction_params() const override { return state_.phi; }
  void save(BinaryWriter& w) const override;
  void load(BinaryReader& r) override;

  // The two halves of a step, exposed for testing.
  void online_update(const LabeledBatch& dtr);
  MetaGradient meta_update(const LabeledBatch& dval);

  const FomlState& state() const { return state_; }
  FomlState& mutable_state() { return state_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const Architecture& arch() const { return arch_; }

 private:
  Architecture arch_;
  FomlState state_;
  ReplayBuffer buffer_;
};

// --- Baselines --------------------------------------------------------------

struct BaselineHyper {
  double lr = 0.001;
  // Gradient updates per task, spread evenly over the task's steps.
  std::size_t task_updates = 50;
  // Buffer updates per task for TOE and FTL pretraining (and FTML outer
  // steps); grows by toe_increment every toe_every tasks.
  std::size_t toe_updates = 50;
  std::size_t toe_increment = 10;
  std::size_t toe_every = 100;
  std::size_t replay_batch = 10;
  // Steps per task, used only to spread the per-task budgets.
  std::size_t steps_per_task = 16;
  std::size_t ftml_inner_steps = 5;
  double ftml_inner_lr = 0.001;
  double ftml_outer_lr = 0.0005;
  double ftml_support_fraction = 0.8;
  std::size_t ftml_support_batch = 20;
  std::size_t ftml_query_batch = 10;

  friend bool operator==(const BaselineHyper&, const BaselineHyper&) = default;
};

std::size_t toe_update_budget(std::size_t base, std::size_t increment, std::size_t every, std::size_t task_index);
// Updates to run at step s of a task so that a budget spreads evenly over steps_per_task steps.
std::size_t updates_at_step(std::size_t budget, std::size_t steps_per_task, std::size_t step_in_task);

class TfsLearner final : public BoundaryAwareLearner {
 public:
  TfsLearner(Architecture arch, BaselineHyper hyper, std::uint64_t seed);
  LearnerKind kind() const override { return LearnerKind::Tfs; }
  StepReport step(const Observation& obs, bool boundary) override;
  const ParameterVector& prediction_params() const override { return params_; }
  void save(BinaryWriter& w) const override;
  void load(BinaryReader& r) override;

  const Optimizer& optimizer() const { return opt_; }
  std::size_t task_index() const { return task_; }
  // Training loss on the current task's data after each update of the latest step.
  const std::vector<double>& last_update_losses() const { return update_losses_; }

 private:
  Architecture arch_;
  BaselineHyper hyper_;
  std::uint64_t seed_;
  ParameterVector params_;
  Optimizer opt_;
  std::vector<LabeledBatch> current_;
  std::size_t task_ = 0;
  std::size_t step_in_task_ = 0;
  bool started_ = false;
  std::vector<double> update_losses_;
};

class ToeLearner final : public BoundaryFreeLearner {
 public:
  ToeLearner(Architecture arch, BaselineHyper hyper, std::uint64_t seed);
  LearnerKind kind() const override { return LearnerKind::Toe; }
  StepReport step(const Observation& obs) override;
  const ParameterVector& prediction_params() const override { return params_; }
  void save(BinaryWriter& w) const override;
  void load(BinaryReader& r) override;
  const ReplayBuffer& buffer() const { return buffer_; }

 private:
  Architecture arch_;
  BaselineHyper hyper_;
  ParameterVector params_;
  Optimizer opt_;
  ReplayBuffer buffer_;
  std::uint64_t j_ = 0;
};

class FtlLearner final : public BoundaryAwareLearner {
 public:
  FtlLearner(Architecture arch, BaselineHyper hyper, std::uint64_t seed);
  LearnerKind kind() const override { return LearnerKind::Ftl; }
  StepReport step(const Observation& obs, bool boundary) override;
  const ParameterVector& prediction_params() const override { return tuned_; }
  void save(BinaryWriter& w) const override;
  void load(BinaryReader& r) override;

  const ParameterVector& pretrained() const { return pretrained_; }
  std::size_t completed_tasks() const { return completed_; }

 private:
  Architecture arch_;
  BaselineHyper hyper_;
  ParameterVector pretrained_;
  Optimizer pre_opt_;
  ParameterVector tuned_;
  Optimizer tune_opt_;
  ReplayBuffer past_;
  std::vector<LabeledBatch> current_;
  std::size_t completed_ = 0;
  std::size_t step_in_task_ = 0;
  bool started_ = false;
};

class FtmlLearner final : public BoundaryAwareLearner {
 public:
  FtmlLearner(Architecture arch, BaselineHyper hyper, std::uint64_t seed);
  LearnerKind kind() const override { return LearnerKind::Ftml; }
  StepReport step(const Observation& obs, bool boundary) override;
  const ParameterVector& prediction_params() const override { return adapted_; }
  void save(BinaryWriter& w) const override;
  void load(BinaryReader& r) override;

  const ParameterVector& meta_params() const { return meta_; }
  std::size_t completed_tasks() const { return tasks_.size(); }

 private:
  void outer_step();

  Architecture arch_;
  BaselineHyper hyper_;
  ParameterVector meta_;
  Optimizer meta_opt_;
  ParameterVector adapted_;
  Optimizer adapt_opt_;
  // Completed tasks, each stored whole; FTML is allowed to know task identity.
  std::vector<LabeledBatch> tasks_;
  std::vector<LabeledBatch> current_;
  Rng rng_;
  std::size_t step_in_task_ = 0;
  bool started_ = false;
};

struct LearnerConfig {
  LearnerKind kind = LearnerKind::Foml;
  FomlHyper foml;
  BaselineHyper baseline;
};

std::unique_ptr<Learner> make_learner(const Architecture& arch, const LearnerConfig& config, std::uint64_t seed);

// Pre-update loss and accuracy of `params` on `batch`.
StepReport evaluate_batch(const Architecture& arch, const ParameterVector& params, const LabeledBatch& batch);

}  // namespace foml
