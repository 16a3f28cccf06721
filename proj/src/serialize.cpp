#include "foml/serialize.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

#include "foml/error.hpp"

namespace foml {

namespace {

constexpr std::uint64_t kMaxCount = std::uint64_t{1} << 34;

}  // namespace

void BinaryWriter::u64(std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os_.write(reinterpret_cast<const char*>(b), 8);
}

void BinaryWriter::i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
void BinaryWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void BinaryWriter::str(const std::string& s) {
  u64(s.size());
  os_.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void BinaryWriter::doubles(const std::vector<double>& v) {
  u64(v.size());
  for (double x : v) f64(x);
}

void BinaryWriter::ints(const std::vector<int>& v) {
  u64(v.size());
  for (int x : v) i64(x);
}

void BinaryWriter::shape(const Shape& s) {
  u64(s.size());
  for (auto d : s) u64(d);
}

void BinaryWriter::tensor(const Tensor& t) {
  shape(t.shape());
  for (double x : t.data()) f64(x);
}

void BinaryWriter::params(const ParameterVector& p) {
  u64(p.num_segments());
  for (std::size_t i = 0; i < p.num_segments(); ++i) {
    str(p.segment(i).name);
    tensor(p[i]);
  }
}

void BinaryWriter::optimizer(const OptimizerState& s) {
  params(s.m);
  params(s.v);
  u64(s.t);
}

void BinaryWriter::batch(const LabeledBatch& b) {
  tensor(b.inputs);
  boolean(b.is_pair());
  if (b.is_pair()) tensor(*b.pair_inputs);
  ints(b.labels);
}

void BinaryWriter::buffer(const ReplayBuffer& b) {
  rng(b.rng());
  u64(b.max_entries());
  shape(b.item_shape());
  boolean(b.is_pair());
  const auto in = b.raw_inputs(), pin = b.raw_pair_inputs();
  const auto lab = b.raw_labels();
  doubles(std::vector<double>(in.begin(), in.end()));
  doubles(std::vector<double>(pin.begin(), pin.end()));
  ints(std::vector<int>(lab.begin(), lab.end()));
}

std::uint64_t BinaryReader::u64() {
  unsigned char b[8];
  is_.read(reinterpret_cast<char*>(b), 8);
  if (!is_) throw FormatError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{b[i]} << (8 * i);
  return v;
}

std::int64_t BinaryReader::i64() { return static_cast<std::int64_t>(u64()); }
double BinaryReader::f64() { return std::bit_cast<double>(u64()); }

std::uint64_t BinaryReader::count(std::uint64_t limit) {
  const std::uint64_t n = u64();
  if (n > limit) throw FormatError("checkpoint field length out of range");
  return n;
}

std::string BinaryReader::str() {
  std::string s(count(kMaxCount), '\0');
  is_.read(s.data(), static_cast<std::streamsize>(s.size()));
  if (!is_) throw FormatError("checkpoint truncated");
  return s;
}

std::vector<double> BinaryReader::doubles() {
  std::vector<double> v(count(kMaxCount));
  for (auto& x : v) x = f64();
  return v;
}

std::vector<int> BinaryReader::ints() {
  std::vector<int> v(count(kMaxCount));
  for (auto& x : v) x = static_cast<int>(i64());
  return v;
}

Shape BinaryReader::shape() {
  Shape s(count(8));
  for (auto& d : s) d = count(kMaxCount);
  return s;
}

Tensor BinaryReader::tensor() {
  Shape s = shape();
  std::vector<double> data(shape_size(s));
  for (auto& x : data) x = f64();
  return Tensor(std::move(s), std::move(data));
}

ParameterVector BinaryReader::params() {
  ParameterVector p;
  const auto n = count(1024);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = str();
    p.add(std::move(name), tensor());
  }
  return p;
}

OptimizerState BinaryReader::optimizer() {
  OptimizerState s;
  s.m = params();
  s.v = params();
  s.t = u64();
  return s;
}

LabeledBatch BinaryReader::batch() {
  LabeledBatch b;
  b.inputs = tensor();
  if (boolean()) b.pair_inputs = tensor();
  b.labels = ints();
  return b;
}

void BinaryReader::buffer(ReplayBuffer& b) {
  Rng r;
  rng(r);
  const auto max_entries = u64();
  b = ReplayBuffer(0, max_entries);
  b.rng() = r;
  Shape item = shape();
  const bool pair = boolean();
  auto in = doubles();
  auto pin = doubles();
  auto lab = ints();
  b.restore(std::move(item), pair, std::move(in), std::move(pin), std::move(lab));
}

}  // namespace foml
