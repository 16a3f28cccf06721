#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "foml/models.hpp"
#include "foml/params.hpp"
#include "foml/rng.hpp"
#include "foml/tensor.hpp"

namespace foml::testing {

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Entries bounded away from zero, for ops with a kink there.
inline Tensor random_away_from_zero(Shape shape, std::uint64_t seed) {
  Tensor t = random_tensor(std::move(shape), seed);
  for (auto& v : t.data()) v = v < 0 ? v - 0.2 : v + 0.2;
  return t;
}

inline double rel_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
  return std::sqrt(diff) / scale;
}

inline double rel_error(const ParameterVector& a, const ParameterVector& b) {
  const auto fa = a.flatten(), fb = b.flatten();
  return rel_error(fa, fb);
}

// Central differences of f at p, one coordinate at a time.
inline std::vector<double> numeric_gradient(const std::function<double(std::span<const double>)>& f,
                                            std::vector<double> p, double h = 1e-5) {
  std::vector<double> g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double x = p[i];
    p[i] = x + h;
    const double up = f(p);
    p[i] = x - h;
    const double down = f(p);
    p[i] = x;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

inline LabeledBatch random_batch(const Architecture& arch, std::size_t n, std::uint64_t seed) {
  Shape s{n};
  s.insert(s.end(), arch.input_shape.begin(), arch.input_shape.end());
  LabeledBatch b;
  b.inputs = random_tensor(s, seed, 0.0, 1.0);
  if (arch.is_pair()) b.pair_inputs = random_tensor(s, seed + 1, 0.0, 1.0);
  Rng rng(seed + 2);
  for (std::size_t i = 0; i < n; ++i) b.labels.push_back(static_cast<int>(rng.below(arch.output_width() == 1 ? 2 : arch.num_classes)));
  return b;
}

}  // namespace foml::testing
