#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "foml/models.hpp"
#include "foml/optim.hpp"
#include "foml/params.hpp"
#include "foml/rng.hpp"
#include "foml/streams.hpp"

namespace foml {

// Little-endian binary encoding for checkpoints. Readers raise FormatError on
// truncation or on values that fail a sanity check.
class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& os) : os_(os) {}

  void u64(std::uint64_t v);
  void i64(std::int64_t v);
  void f64(double v);
  void boolean(bool v) { u64(v ? 1 : 0); }
  void str(const std::string& s);
  void doubles(const std::vector<double>& v);
  void ints(const std::vector<int>& v);
  void shape(const Shape& s);
  void tensor(const Tensor& t);
  void params(const ParameterVector& p);
  void optimizer(const OptimizerState& s);
  void rng(const Rng& r) { str(r.state()); }
  void batch(const LabeledBatch& b);
  void buffer(const ReplayBuffer& b);

 private:
  std::ostream& os_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::istream& is) : is_(is) {}

  std::uint64_t u64();
  std::int64_t i64();
  double f64();
  bool boolean() { return u64() != 0; }
  std::string str();
  std::vector<double> doubles();
  std::vector<int> ints();
  Shape shape();
  Tensor tensor();
  ParameterVector params();
  OptimizerState optimizer();
  void rng(Rng& r) { r.set_state(str()); }
  LabeledBatch batch();
  void buffer(ReplayBuffer& b);

 private:
  std::uint64_t count(std::uint64_t limit);
  std::istream& is_;
};

}  // namespace foml
