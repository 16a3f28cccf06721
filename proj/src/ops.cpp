#include "foml/ops.hpp"

#include <algorithm>
#include <cmath>

#include "foml/error.hpp"
#include "foml/kernels.hpp"

namespace foml::ops {

namespace {

void same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(what) + " shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
}

template <class F>
Tensor map(const Tensor& a, F f) {
  Tensor r(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = f(a[i]);
  return r;
}

template <class F>
Tensor zip(const Tensor& a, const Tensor& b, const char* what, F f) {
  same_shape(a, b, what);
  Tensor r(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = f(a[i], b[i]);
  return r;
}

struct BiasView {
  std::size_t outer = 1, n = 1, inner = 1;
};

BiasView bias_view(const Shape& s, std::size_t axis) {
  if (axis >= s.size()) throw ShapeError("bias axis " + std::to_string(axis) + " out of range for " + shape_string(s));
  BiasView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
  v.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

double sigmoid_scalar(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return zip(a, b, "add", [](double x, double y) { return x + y; }); }
Tensor sub(const Tensor& a, const Tensor& b) { return zip(a, b, "sub", [](double x, double y) { return x - y; }); }
Tensor mul(const Tensor& a, const Tensor& b) { return zip(a, b, "mul", [](double x, double y) { return x * y; }); }
Tensor scale(const Tensor& a, double c) { return map(a, [c](double x) { return x * c; }); }
Tensor add_scalar(const Tensor& a, double c) { return map(a, [c](double x) { return x + c; }); }

Tensor scale_by(const Tensor& a, const Tensor& s) {
  if (s.size() != 1) throw ShapeError("scale_by expects a scalar factor, got " + shape_string(s.shape()));
  const double c = s[0];
  return map(a, [c](double x) { return x * c; });
}

Tensor square(const Tensor& a) { return map(a, [](double x) { return x * x; }); }

Tensor pow(const Tensor& a, double p) {
  return map(a, [p](double x) {
    if (x == 0.0 && p < 0.0) return 0.0;
    if (p == 2.0) return x * x;
    if (p == 1.0) return x;
    if (p == 0.0) return 1.0;
    if (p == 0.5) return std::sqrt(x);
    if (p == -1.0) return 1.0 / x;
    return std::pow(x, p);
  });
}

Tensor abs(const Tensor& a) { return map(a, [](double x) { return std::abs(x); }); }
Tensor sign(const Tensor& a) { return map(a, [](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }); }
Tensor relu(const Tensor& a) { return map(a, [](double x) { return x > 0 ? x : 0.0; }); }
Tensor step(const Tensor& a) { return map(a, [](double x) { return x > 0 ? 1.0 : 0.0; }); }
Tensor sigmoid(const Tensor& a) { return map(a, sigmoid_scalar); }

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return Tensor::scalar(s);
}

Tensor mean(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return Tensor::scalar(s / static_cast<double>(a.size()));
}

Tensor fill(const Tensor& s, const Shape& shape) {
  if (s.size() != 1) throw ShapeError("fill expects a scalar, got " + shape_string(s.shape()));
  return Tensor(shape, s[0]);
}

Tensor matmul(const Tensor& a, const Tensor& b) { return kernels::matmul(a, b); }
Tensor transpose(const Tensor& a) { return kernels::transpose(a); }

Tensor add_bias(const Tensor& x, const Tensor& b, std::size_t axis) {
  const auto v = bias_view(x.shape(), axis);
  if (b.rank() != 1 || b.dim(0) != v.n)
    throw ShapeError("bias " + shape_string(b.shape()) + " does not match axis " + std::to_string(axis) + " of " +
                     shape_string(x.shape()));
  Tensor r = x;
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t i = 0; i < v.n; ++i) {
      double* p = r.data().data() + (o * v.n + i) * v.inner;
      for (std::size_t k = 0; k < v.inner; ++k) p[k] += b[i];
    }
  return r;
}

Tensor bias_sum(const Tensor& g, std::size_t axis) {
  const auto v = bias_view(g.shape(), axis);
  Tensor r(Shape{v.n});
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t i = 0; i < v.n; ++i) {
      const double* p = g.data().data() + (o * v.n + i) * v.inner;
      for (std::size_t k = 0; k < v.inner; ++k) r[i] += p[k];
    }
  return r;
}

Tensor bias_broadcast(const Tensor& b, const Shape& shape, std::size_t axis) {
  const auto v = bias_view(shape, axis);
  if (b.rank() != 1 || b.dim(0) != v.n) throw ShapeError("bias_broadcast size mismatch");
  Tensor r(shape);
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t i = 0; i < v.n; ++i) {
      double* p = r.data().data() + (o * v.n + i) * v.inner;
      for (std::size_t k = 0; k < v.inner; ++k) p[k] = b[i];
    }
  return r;
}

Tensor reshape(const Tensor& a, const Shape& shape) { return a.reshaped(shape); }

Tensor softmax(const Tensor& z) {
  if (z.rank() != 2) throw ShapeError("softmax expects [B,C], got " + shape_string(z.shape()));
  const std::size_t B = z.dim(0), C = z.dim(1);
  Tensor r(z.shape());
  for (std::size_t b = 0; b < B; ++b) {
    const double* row = z.data().data() + b * C;
    double mx = row[0];
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, row[c]);
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += std::exp(row[c] - mx);
    for (std::size_t c = 0; c < C; ++c) r[b * C + c] = std::exp(row[c] - mx) / s;
  }
  return r;
}

Tensor row_sum_broadcast(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("row_sum_broadcast expects [B,C], got " + shape_string(a.shape()));
  const std::size_t B = a.dim(0), C = a.dim(1);
  Tensor r(a.shape());
  for (std::size_t b = 0; b < B; ++b) {
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += a[b * C + c];
    for (std::size_t c = 0; c < C; ++c) r[b * C + c] = s;
  }
  return r;
}

Tensor softmax_cross_entropy(const Tensor& z, const Tensor& targets) {
  if (z.rank() != 2) throw ShapeError("softmax_cross_entropy expects [B,C] logits, got " + shape_string(z.shape()));
  same_shape(z, targets, "softmax_cross_entropy");
  const std::size_t B = z.dim(0), C = z.dim(1);
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const double* row = z.data().data() + b * C;
    double mx = row[0];
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, row[c]);
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += std::exp(row[c] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < C; ++c) total += targets[b * C + c] * (lse - row[c]);
  }
  return Tensor::scalar(total / static_cast<double>(B));
}

Tensor binary_cross_entropy(const Tensor& z, const Tensor& y) {
  same_shape(z, y, "binary_cross_entropy");
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double x = z[i];
    total += std::max(x, 0.0) - x * y[i] + std::log1p(std::exp(-std::abs(x)));
  }
  return Tensor::scalar(total / static_cast<double>(z.rank() ? z.dim(0) : 1));
}

Tensor conv2d(const Tensor& x, const Tensor& w) { return kernels::conv2d(x, w); }
Tensor conv2d_input_grad(const Tensor& gy, const Tensor& w) { return kernels::conv2d_input_grad(gy, w); }
Tensor conv2d_weight_grad(const Tensor& x, const Tensor& gy, std::size_t kernel) {
  return kernels::conv2d_weight_grad(x, gy, kernel);
}

Shape pooled_shape(const Shape& x) {
  if (x.size() != 4 || x[2] < 2 || x[3] < 2) throw ShapeError("max_pool expects [B,C,H>=2,W>=2], got " + shape_string(x));
  return Shape{x[0], x[1], x[2] / 2, x[3] / 2};
}

std::vector<std::size_t> max_pool_index(const Tensor& x) {
  const Shape out = pooled_shape(x.shape());
  const std::size_t H = x.dim(2), W = x.dim(3), OH = out[2], OW = out[3];
  std::vector<std::size_t> idx(shape_size(out));
  for (std::size_t p = 0; p < x.dim(0) * x.dim(1); ++p)
    for (std::size_t i = 0; i < OH; ++i)
      for (std::size_t j = 0; j < OW; ++j) {
        std::size_t best = p * H * W + (2 * i) * W + 2 * j;
        for (std::size_t di = 0; di < 2; ++di)
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t k = p * H * W + (2 * i + di) * W + 2 * j + dj;
            if (x[k] > x[best]) best = k;
          }
        idx[(p * OH + i) * OW + j] = best;
      }
  return idx;
}

Tensor pool_gather(const Tensor& x, const std::vector<std::size_t>& index, const Shape& out_shape) {
  Tensor r(out_shape);
  if (r.size() != index.size()) throw ShapeError("pool_gather index size mismatch");
  for (std::size_t i = 0; i < index.size(); ++i) r[i] = x[index[i]];
  return r;
}

Tensor pool_scatter(const Tensor& g, const std::vector<std::size_t>& index, const Shape& in_shape) {
  if (g.size() != index.size()) throw ShapeError("pool_scatter index size mismatch");
  Tensor r(in_shape);
  for (std::size_t i = 0; i < index.size(); ++i) r[index[i]] += g[i];
  return r;
}

Tensor avg_pool(const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("avg_pool expects [B,C,H,W], got " + shape_string(x.shape()));
  const std::size_t P = x.dim(0) * x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor r(Shape{x.dim(0), x.dim(1)});
  for (std::size_t p = 0; p < P; ++p) {
    double s = 0.0;
    for (std::size_t k = 0; k < HW; ++k) s += x[p * HW + k];
    r[p] = s / static_cast<double>(HW);
  }
  return r;
}

Tensor avg_pool_grad(const Tensor& g, const Shape& in_shape) {
  if (in_shape.size() != 4 || g.rank() != 2 || g.dim(0) != in_shape[0] || g.dim(1) != in_shape[1])
    throw ShapeError("avg_pool_grad shape mismatch");
  const std::size_t P = in_shape[0] * in_shape[1], HW = in_shape[2] * in_shape[3];
  Tensor r(in_shape);
  for (std::size_t p = 0; p < P; ++p) {
    const double v = g[p] / static_cast<double>(HW);
    for (std::size_t k = 0; k < HW; ++k) r[p * HW + k] = v;
  }
  return r;
}

Tensor one_hot(const std::vector<int>& labels, std::size_t num_classes) {
  if (labels.empty()) throw ContractError("one_hot of empty label list");
  Tensor r(Shape{labels.size(), num_classes});
  for (std::size_t b = 0; b < labels.size(); ++b) {
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= num_classes)
      throw ContractError("label " + std::to_string(labels[b]) + " outside [0," + std::to_string(num_classes) + ")");
    r[b * num_classes + static_cast<std::size_t>(labels[b])] = 1.0;
  }
  return r;
}

}  // namespace foml::ops
