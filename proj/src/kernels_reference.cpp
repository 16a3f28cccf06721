#include "foml/error.hpp"
#include "foml/kernels.hpp"

namespace foml::kernels::reference {

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_matmul_shapes(a, b);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  return c;
}

Tensor conv2d(const Tensor& x, const Tensor& w) {
  check_conv_shapes(x, w);
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), O = w.dim(0), K = w.dim(2);
  const long pad = static_cast<long>(K / 2);
  Tensor y(Shape{B, O, H, W});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
          double acc = 0.0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t ky = 0; ky < K; ++ky)
              for (std::size_t kx = 0; kx < K; ++kx) {
                const long si = static_cast<long>(i + ky) - pad;
                const long sj = static_cast<long>(j + kx) - pad;
                if (si < 0 || sj < 0 || si >= static_cast<long>(H) || sj >= static_cast<long>(W)) continue;
                acc += w[((o * C + c) * K + ky) * K + kx] * x[((b * C + c) * H + si) * W + sj];
              }
          y[((b * O + o) * H + i) * W + j] = acc;
        }
  return y;
}

Tensor conv2d_input_grad(const Tensor& gy, const Tensor& w) {
  if (gy.rank() != 4 || w.rank() != 4 || gy.dim(1) != w.dim(0))
    throw ShapeError("conv2d_input_grad shapes " + shape_string(gy.shape()) + " * " + shape_string(w.shape()));
  const std::size_t B = gy.dim(0), O = gy.dim(1), H = gy.dim(2), W = gy.dim(3), C = w.dim(1), K = w.dim(2);
  const long pad = static_cast<long>(K / 2);
  Tensor gx(Shape{B, C, H, W});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
          double acc = 0.0;
          for (std::size_t o = 0; o < O; ++o)
            for (std::size_t ky = 0; ky < K; ++ky)
              for (std::size_t kx = 0; kx < K; ++kx) {
                const long si = static_cast<long>(i) - static_cast<long>(ky) + pad;
                const long sj = static_cast<long>(j) - static_cast<long>(kx) + pad;
                if (si < 0 || sj < 0 || si >= static_cast<long>(H) || sj >= static_cast<long>(W)) continue;
                acc += w[((o * C + c) * K + ky) * K + kx] * gy[((b * O + o) * H + si) * W + sj];
              }
          gx[((b * C + c) * H + i) * W + j] = acc;
        }
  return gx;
}

Tensor conv2d_weight_grad(const Tensor& x, const Tensor& gy, std::size_t kernel) {
  if (x.rank() != 4 || gy.rank() != 4 || x.dim(0) != gy.dim(0))
    throw ShapeError("conv2d_weight_grad shapes " + shape_string(x.shape()) + " / " + shape_string(gy.shape()));
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), O = gy.dim(1), K = kernel;
  const long pad = static_cast<long>(K / 2);
  Tensor gw(Shape{O, C, K, K});
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t ky = 0; ky < K; ++ky)
        for (std::size_t kx = 0; kx < K; ++kx) {
          double acc = 0.0;
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < H; ++i)
              for (std::size_t j = 0; j < W; ++j) {
                const long si = static_cast<long>(i + ky) - pad;
                const long sj = static_cast<long>(j + kx) - pad;
                if (si < 0 || sj < 0 || si >= static_cast<long>(H) || sj >= static_cast<long>(W)) continue;
                acc += x[((b * C + c) * H + si) * W + sj] * gy[((b * O + o) * H + i) * W + j];
              }
          gw[((o * C + c) * K + ky) * K + kx] = acc;
        }
  return gw;
}

}  // namespace foml::kernels::reference
