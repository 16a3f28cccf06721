#pragma once

#include "foml/tensor.hpp"

// Dense compute kernels. The kernels:: versions are OpenMP-parallel over
// output rows/planes; kernels::reference holds the naive serial loops they are
// tested against. Both accumulate every output element in the same order, so
// results agree bit for bit (build with -ffp-contract=off).
namespace foml::kernels {

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Stride-1, same-padding convolution with an odd square kernel.
//   x: [B,C,H,W], w: [O,C,k,k] -> [B,O,H,W]
Tensor conv2d(const Tensor& x, const Tensor& w);
// Adjoint of conv2d in x:  gy: [B,O,H,W], w: [O,C,k,k] -> [B,C,H,W]
Tensor conv2d_input_grad(const Tensor& gy, const Tensor& w);
// Adjoint of conv2d in w:  x: [B,C,H,W], gy: [B,O,H,W] -> [O,C,k,k]
Tensor conv2d_weight_grad(const Tensor& x, const Tensor& gy, std::size_t kernel);

// Work (multiply-adds) below which kernels stay on the calling thread.
inline constexpr std::size_t kParallelThreshold = 1u << 15;

namespace reference {
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor conv2d(const Tensor& x, const Tensor& w);
Tensor conv2d_input_grad(const Tensor& gy, const Tensor& w);
Tensor conv2d_weight_grad(const Tensor& x, const Tensor& gy, std::size_t kernel);
}  // namespace reference

void check_matmul_shapes(const Tensor& a, const Tensor& b);
void check_conv_shapes(const Tensor& x, const Tensor& w);

}  // namespace foml::kernels
