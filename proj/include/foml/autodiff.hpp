#pragma once

#include <functional>
#include <span>

#include "foml/params.hpp"
#include "foml/tape.hpp"

namespace foml {

using Computation = std::function<Var(Tape&, std::span<const Var> params, std::span<const Var> inputs)>;

struct Recording {
  Tape tape;
  std::vector<Var> params;
  std::vector<Var> inputs;
  Var output;
  ParameterVector layout;
};

// Run `computation` with every parameter segment as a tape leaf and every
// input as a constant.
Recording record_forward(const ParameterVector& params, const Computation& computation,
                         std::span<const Tensor> inputs);

// dLoss/dparams for the recording's parameter leaves.
ParameterVector grad(const Recording& rec, Var loss);
ParameterVector grad(const Recording& rec);

// Gradient of `loss` with respect to `wrt` on a tape whose path to the loss
// runs through recorded gradient steps (built with Tape::gradient_graph).
// Every path is included, so the result is the full second-order derivative.
ParameterVector grad_through_update(const Tape& tape, Var loss, std::span<const Var> wrt,
                                    const ParameterVector& layout);

}  // namespace foml
