#pragma once

#include <cstddef>
#include <vector>

#include "foml/tensor.hpp"

// Eager tensor primitives. The tape records these; backward rules are
// composed from the same set, which is what makes recorded gradients
// differentiable a second time.
namespace foml::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
// a * s for a scalar tensor s
Tensor scale_by(const Tensor& a, const Tensor& s);
Tensor square(const Tensor& a);
// a^p elementwise; 0^p for p < 0 is taken as 0 (see Tape::pow).
Tensor pow(const Tensor& a, double p);
Tensor abs(const Tensor& a);
Tensor sign(const Tensor& a);
Tensor relu(const Tensor& a);
// 1 where a > 0, else 0
Tensor step(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// scalar s broadcast to `shape`
Tensor fill(const Tensor& s, const Shape& shape);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// x viewed as [outer, n, inner] with n = x.dim(axis); b has shape [n].
Tensor add_bias(const Tensor& x, const Tensor& b, std::size_t axis);
Tensor bias_sum(const Tensor& g, std::size_t axis);
Tensor bias_broadcast(const Tensor& b, const Shape& shape, std::size_t axis);

Tensor reshape(const Tensor& a, const Shape& shape);

// Row-wise softmax of a [B,C] tensor.
Tensor softmax(const Tensor& z);
// Each entry replaced by the sum of its row: [B,C] -> [B,C].
Tensor row_sum_broadcast(const Tensor& a);
// Mean over rows of -sum_c targets[b,c] * log softmax(z)[b,c].
Tensor softmax_cross_entropy(const Tensor& z, const Tensor& targets);
// Mean binary cross-entropy with logits, z and y of equal shape.
Tensor binary_cross_entropy(const Tensor& z, const Tensor& y);

Tensor conv2d(const Tensor& x, const Tensor& w);
Tensor conv2d_input_grad(const Tensor& gy, const Tensor& w);
Tensor conv2d_weight_grad(const Tensor& x, const Tensor& gy, std::size_t kernel);

// 2x2 / stride-2 max pooling routes: flat index into x for each output cell.
std::vector<std::size_t> max_pool_index(const Tensor& x);
Shape pooled_shape(const Shape& x);
Tensor pool_gather(const Tensor& x, const std::vector<std::size_t>& index, const Shape& out_shape);
Tensor pool_scatter(const Tensor& g, const std::vector<std::size_t>& index, const Shape& in_shape);

// [B,C,H,W] -> [B,C] spatial mean, and its adjoint.
Tensor avg_pool(const Tensor& x);
Tensor avg_pool_grad(const Tensor& g, const Shape& in_shape);

Tensor one_hot(const std::vector<int>& labels, std::size_t num_classes);

}  // namespace foml::ops
