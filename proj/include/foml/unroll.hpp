#pragma once

#include <functional>
#include <span>
#include <vector>

#include "foml/models.hpp"
#include "foml/optim.hpp"
#include "foml/params.hpp"
#include "foml/tape.hpp"

namespace foml {

// Scalar training loss of `params` on a batch, recorded on the tape.
using LossFn = std::function<Var(Tape&, std::span<const Var> params, const LabeledBatch&)>;

// R(phi, theta) = sum over all coordinates of (phi - theta)^2.
Var regularizer(Tape& tape, std::span<const Var> phi, std::span<const Var> theta);
double regularizer(const ParameterVector& phi, const ParameterVector& theta);

// L(phi; batch) + beta1 * R(phi, theta), recorded on `tape`. With beta1 == 0
// theta is not touched, so nothing downstream depends on it.
Var online_objective(Tape& tape, const LossFn& loss_fn, std::span<const Var> phi, std::span<const Var> theta,
                     const LabeledBatch& batch, double beta1);
Var online_objective(Tape& tape, const Architecture& arch, std::span<const Var> phi, std::span<const Var> theta,
                     const LabeledBatch& batch, double beta1);

// One online update recorded as a differentiable function of phi, theta and
// the optimizer moments.
std::vector<Var> record_online_step(Tape& tape, const LossFn& loss_fn, std::span<const Var> phi,
                                    std::span<const Var> theta, const LabeledBatch& batch, double beta1,
                                    const OptimizerConfig& opt, TapeOptimizerState& state);
std::vector<Var> record_online_step(Tape& tape, const Architecture& arch, std::span<const Var> phi,
                                    std::span<const Var> theta, const LabeledBatch& batch, double beta1,
                                    const OptimizerConfig& opt, TapeOptimizerState& state);

// What is needed to replay one online update: the parameters and optimizer
// state before it, and the batch it trained on.
struct OnlineStepRecord {
  ParameterVector phi_before;
  OptimizerState opt_before;
  LabeledBatch train;
};

struct MetaGradient {
  double objective = 0.0;  // val loss + beta2 * sum of pulls
  double val_loss = 0.0;
  ParameterVector grad;
  ParameterVector phi_end;  // phi after replaying the window
};

// d/dtheta of L(phi_j(theta); dval) + beta2 * sum_k R(theta, phi_{j-k}(theta)),
// where phi_j is reached by replaying `window` (oldest first) from the first
// record's phi_before, and the sum runs over every phi in the window including
// its start.
MetaGradient foml_meta_gradient(const LossFn& loss_fn, const ParameterVector& theta,
                                std::span<const OnlineStepRecord> window, const OptimizerConfig& online_opt,
                                double beta1, double beta2, const LabeledBatch& dval);
MetaGradient foml_meta_gradient(const Architecture& arch, const ParameterVector& theta,
                                std::span<const OnlineStepRecord> window, const OptimizerConfig& online_opt,
                                double beta1, double beta2, const LabeledBatch& dval);

struct MamlGradient {
  double query_loss = 0.0;
  ParameterVector grad;
};

// Outer gradient of the query loss after `inner_steps` plain gradient steps on
// `support`, starting from `meta_params`.
MamlGradient maml_gradient(const LossFn& loss_fn, const ParameterVector& meta_params, const LabeledBatch& support,
                           const LabeledBatch& query, double inner_lr, std::size_t inner_steps);
MamlGradient maml_gradient(const Architecture& arch, const ParameterVector& meta_params, const LabeledBatch& support,
                           const LabeledBatch& query, double inner_lr, std::size_t inner_steps);

}  // namespace foml
