#include "foml/autodiff.hpp"

namespace foml {

Recording record_forward(const ParameterVector& params, const Computation& computation,
                         std::span<const Tensor> inputs) {
  Recording rec;
  rec.layout = params;
  rec.params = bind_leaves(rec.tape, params);
  for (const auto& x : inputs) rec.inputs.push_back(rec.tape.constant(x));
  rec.output = computation(rec.tape, rec.params, rec.inputs);
  return rec;
}

ParameterVector grad(const Recording& rec, Var loss) {
  return collect(rec.layout, rec.tape.gradient(loss, rec.params));
}

ParameterVector grad(const Recording& rec) { return grad(rec, rec.output); }

ParameterVector grad_through_update(const Tape& tape, Var loss, std::span<const Var> wrt,
                                    const ParameterVector& layout) {
  return collect(layout, tape.gradient(loss, wrt));
}

}  // namespace foml
