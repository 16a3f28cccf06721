#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "foml/params.hpp"
#include "foml/tape.hpp"

namespace foml {

enum class OptimizerKind { Sgd, Adam };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(const std::string& s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam moments (empty for SGD) and the step count.
struct OptimizerState {
  ParameterVector m;
  ParameterVector v;
  std::uint64_t t = 0;
};

class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerConfig config, const ParameterVector& layout);

  // Returns the updated parameters; the moments advance in place.
  ParameterVector step(const ParameterVector& params, const ParameterVector& grad);
  void reset();

  const OptimizerConfig& config() const { return config_; }
  const OptimizerState& state() const { return state_; }
  void set_state(OptimizerState s) { state_ = std::move(s); }

 private:
  OptimizerConfig config_;
  OptimizerState state_;
};

// The same update recorded on a tape, with the moments carried as tape values
// so that the result is differentiable in params, grads and earlier moments.
struct TapeOptimizerState {
  std::vector<Var> m;
  std::vector<Var> v;
  std::uint64_t t = 0;
};

TapeOptimizerState bind_optimizer_state(Tape& tape, const OptimizerState& s);
std::vector<Var> optimizer_step_on_tape(Tape& tape, const OptimizerConfig& config, std::span<const Var> params,
                                        std::span<const Var> grads, TapeOptimizerState& state);

}  // namespace foml
