#pragma once

#include <span>
#include <string>
#include <vector>

#include "foml/tape.hpp"
#include "foml/tensor.hpp"

namespace foml {

struct Segment {
  std::string name;
  Tensor value;
};

// Named, ordered list of weight tensors. Used for model parameters, their
// gradients, and optimizer moments alike.
class ParameterVector {
 public:
  ParameterVector() = default;
  explicit ParameterVector(std::vector<Segment> segments) : segments_(std::move(segments)) {}

  void add(std::string name, Tensor value) { segments_.push_back({std::move(name), std::move(value)}); }

  std::size_t num_segments() const { return segments_.size(); }
  const Segment& segment(std::size_t i) const { return segments_.at(i); }
  Segment& segment(std::size_t i) { return segments_.at(i); }
  const Tensor& operator[](std::size_t i) const { return segments_.at(i).value; }
  Tensor& operator[](std::size_t i) { return segments_.at(i).value; }
  const Tensor& at(const std::string& name) const;
  std::size_t total_dim() const;

  // Same names, shapes and order.
  bool same_layout(const ParameterVector& other) const;
  void require_same_layout(const ParameterVector& other, const char* what) const;

  std::vector<double> flatten() const;
  // Values from `flat` poured into the layout of `*this`.
  ParameterVector unflatten(std::span<const double> flat) const;
  ParameterVector zeros_like() const;

  friend bool operator==(const ParameterVector& a, const ParameterVector& b);

 private:
  std::vector<Segment> segments_;
};

// a + s * b
ParameterVector axpy(const ParameterVector& a, double s, const ParameterVector& b);
double dot(const ParameterVector& a, const ParameterVector& b);
double norm(const ParameterVector& a);
double max_abs_diff(const ParameterVector& a, const ParameterVector& b);

// Record every segment on `tape`, as leaves or as constants.
std::vector<Var> bind_leaves(Tape& tape, const ParameterVector& p);
std::vector<Var> bind_constants(Tape& tape, const ParameterVector& p);
ParameterVector collect(const ParameterVector& layout, std::vector<Tensor> values);
ParameterVector collect(const Tape& tape, const ParameterVector& layout, std::span<const Var> vars);

}  // namespace foml
