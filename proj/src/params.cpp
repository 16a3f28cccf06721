#include "foml/params.hpp"

#include <cmath>

#include "foml/error.hpp"

namespace foml {

const Tensor& ParameterVector::at(const std::string& name) const {
  for (const auto& s : segments_)
    if (s.name == name) return s.value;
  throw ContractError("no parameter segment named '" + name + "'");
}

std::size_t ParameterVector::total_dim() const {
  std::size_t n = 0;
  for (const auto& s : segments_) n += s.value.size();
  return n;
}

bool ParameterVector::same_layout(const ParameterVector& other) const {
  if (segments_.size() != other.segments_.size()) return false;
  for (std::size_t i = 0; i < segments_.size(); ++i)
    if (segments_[i].name != other.segments_[i].name || segments_[i].value.shape() != other.segments_[i].value.shape())
      return false;
  return true;
}

void ParameterVector::require_same_layout(const ParameterVector& other, const char* what) const {
  if (!same_layout(other)) throw ShapeError(std::string(what) + ": parameter layouts differ");
}

std::vector<double> ParameterVector::flatten() const {
  std::vector<double> flat;
  flat.reserve(total_dim());
  for (const auto& s : segments_) flat.insert(flat.end(), s.value.data().begin(), s.value.data().end());
  return flat;
}

ParameterVector ParameterVector::unflatten(std::span<const double> flat) const {
  if (flat.size() != total_dim())
    throw ShapeError("unflatten: expected " + std::to_string(total_dim()) + " values, got " + std::to_string(flat.size()));
  ParameterVector out;
  std::size_t off = 0;
  for (const auto& s : segments_) {
    std::vector<double> d(flat.begin() + static_cast<std::ptrdiff_t>(off),
                          flat.begin() + static_cast<std::ptrdiff_t>(off + s.value.size()));
    off += s.value.size();
    out.add(s.name, Tensor(s.value.shape(), std::move(d)));
  }
  return out;
}

ParameterVector ParameterVector::zeros_like() const {
  ParameterVector out;
  for (const auto& s : segments_) out.add(s.name, Tensor(s.value.shape()));
  return out;
}

bool operator==(const ParameterVector& a, const ParameterVector& b) {
  if (a.segments_.size() != b.segments_.size()) return false;
  for (std::size_t i = 0; i < a.segments_.size(); ++i)
    if (a.segments_[i].name != b.segments_[i].name || !(a.segments_[i].value == b.segments_[i].value)) return false;
  return true;
}

ParameterVector axpy(const ParameterVector& a, double s, const ParameterVector& b) {
  a.require_same_layout(b, "axpy");
  ParameterVector out = a;
  for (std::size_t i = 0; i < out.num_segments(); ++i) {
    auto& d = out[i].storage();
    const auto& e = b[i].storage();
    for (std::size_t k = 0; k < d.size(); ++k) d[k] += s * e[k];
  }
  return out;
}

double dot(const ParameterVector& a, const ParameterVector& b) {
  a.require_same_layout(b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.num_segments(); ++i)
    for (std::size_t k = 0; k < a[i].size(); ++k) acc += a[i][k] * b[i][k];
  return acc;
}

double norm(const ParameterVector& a) { return std::sqrt(dot(a, a)); }

double max_abs_diff(const ParameterVector& a, const ParameterVector& b) {
  a.require_same_layout(b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.num_segments(); ++i) m = std::max(m, max_abs_diff(a[i], b[i]));
  return m;
}

std::vector<Var> bind_leaves(Tape& tape, const ParameterVector& p) {
  std::vector<Var> vars;
  vars.reserve(p.num_segments());
  for (std::size_t i = 0; i < p.num_segments(); ++i) vars.push_back(tape.leaf(p[i]));
  return vars;
}

std::vector<Var> bind_constants(Tape& tape, const ParameterVector& p) {
  std::vector<Var> vars;
  vars.reserve(p.num_segments());
  for (std::size_t i = 0; i < p.num_segments(); ++i) vars.push_back(tape.constant(p[i]));
  return vars;
}

ParameterVector collect(const ParameterVector& layout, std::vector<Tensor> values) {
  if (values.size() != layout.num_segments()) throw ShapeError("collect: segment count mismatch");
  ParameterVector out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].shape() != layout[i].shape()) throw ShapeError("collect: shape mismatch in " + layout.segment(i).name);
    out.add(layout.segment(i).name, std::move(values[i]));
  }
  return out;
}

ParameterVector collect(const Tape& tape, const ParameterVector& layout, std::span<const Var> vars) {
  std::vector<Tensor> values;
  values.reserve(vars.size());
  for (Var v : vars) values.push_back(tape.value(v));
  return collect(layout, std::move(values));
}

}  // namespace foml
