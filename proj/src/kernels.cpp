#include "foml/kernels.hpp"

#include <algorithm>

#include "foml/error.hpp"

namespace foml::kernels {

void check_matmul_shapes(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul shapes " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
}

void check_conv_shapes(const Tensor& x, const Tensor& w) {
  if (x.rank() != 4 || w.rank() != 4 || x.dim(1) != w.dim(1) || w.dim(2) != w.dim(3) || w.dim(2) % 2 == 0)
    throw ShapeError("conv2d shapes " + shape_string(x.shape()) + " * " + shape_string(w.shape()));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_matmul_shapes(a, b);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c(Shape{m, n});
  const double* A = a.data().data();
  const double* B = b.data().data();
  double* C = c.data().data();
  // i-k-j order: each C[i][j] still sums over k in increasing order.
#pragma omp parallel for schedule(static) if (m * k * n > kParallelThreshold)
  for (std::size_t i = 0; i < m; ++i) {
    double* row = C + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return c;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose expects rank 2, got " + shape_string(a.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor t(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t[j * m + i] = a[i * n + j];
  return t;
}

namespace {

struct ConvGeom {
  std::size_t batch, in_ch, out_ch, h, w, k;
  long pad;
};

// Valid output range [lo, hi) along one axis for kernel offset `off`.
inline void valid_range(long off, long pad, std::size_t extent, std::size_t& lo, std::size_t& hi) {
  const long shift = off - pad;
  const long l = std::max<long>(0, -shift);
  const long h = std::min<long>(static_cast<long>(extent), static_cast<long>(extent) - shift);
  lo = static_cast<std::size_t>(l);
  hi = static_cast<std::size_t>(std::max(l, h));
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w) {
  check_conv_shapes(x, w);
  const ConvGeom g{x.dim(0), x.dim(1), w.dim(0), x.dim(2), x.dim(3), w.dim(2), static_cast<long>(w.dim(2) / 2)};
  const std::size_t pad = g.k / 2;
  Tensor y(Shape{g.batch, g.out_ch, g.h, g.w});
  const double* X = x.data().data();
  const double* Wt = w.data().data();
  double* Y = y.data().data();
  const std::size_t planes = g.batch * g.out_ch;
  const std::size_t work = planes * g.in_ch * g.k * g.k * g.h * g.w;
#pragma omp parallel for schedule(static) if (work > kParallelThreshold)
  for (std::size_t bo = 0; bo < planes; ++bo) {
    const std::size_t b = bo / g.out_ch, o = bo % g.out_ch;
    double* out = Y + bo * g.h * g.w;
    for (std::size_t c = 0; c < g.in_ch; ++c) {
      const double* in = X + (b * g.in_ch + c) * g.h * g.w;
      for (std::size_t ky = 0; ky < g.k; ++ky) {
        std::size_t ylo, yhi;
        valid_range(static_cast<long>(ky), g.pad, g.h, ylo, yhi);
        for (std::size_t kx = 0; kx < g.k; ++kx) {
          std::size_t xlo, xhi;
          valid_range(static_cast<long>(kx), g.pad, g.w, xlo, xhi);
          const double wv = Wt[((o * g.in_ch + c) * g.k + ky) * g.k + kx];
          for (std::size_t yy = ylo; yy < yhi; ++yy) {
            const double* src = in + (yy + ky - pad) * g.w;
            double* dst = out + yy * g.w;
            for (std::size_t xx = xlo; xx < xhi; ++xx) dst[xx] += wv * src[xx + kx - pad];
          }
        }
      }
    }
  }
  return y;
}

Tensor conv2d_input_grad(const Tensor& gy, const Tensor& w) {
  if (gy.rank() != 4 || w.rank() != 4 || gy.dim(1) != w.dim(0) || w.dim(2) != w.dim(3) || w.dim(2) % 2 == 0)
    throw ShapeError("conv2d_input_grad shapes " + shape_string(gy.shape()) + " * " + shape_string(w.shape()));
  const ConvGeom g{gy.dim(0), w.dim(1), w.dim(0), gy.dim(2), gy.dim(3), w.dim(2), static_cast<long>(w.dim(2) / 2)};
  const std::size_t pad = g.k / 2;
  Tensor gx(Shape{g.batch, g.in_ch, g.h, g.w});
  const double* G = gy.data().data();
  const double* Wt = w.data().data();
  double* GX = gx.data().data();
  const std::size_t planes = g.batch * g.in_ch;
  const std::size_t work = planes * g.out_ch * g.k * g.k * g.h * g.w;
  // gx[b,c,i,j] = sum_{o,ky,kx} w[o,c,ky,kx] gy[b,o,i-ky+p,j-kx+p]
#pragma omp parallel for schedule(static) if (work > kParallelThreshold)
  for (std::size_t bc = 0; bc < planes; ++bc) {
    const std::size_t b = bc / g.in_ch, c = bc % g.in_ch;
    double* out = GX + bc * g.h * g.w;
    for (std::size_t o = 0; o < g.out_ch; ++o) {
      const double* src_plane = G + (b * g.out_ch + o) * g.h * g.w;
      for (std::size_t ky = 0; ky < g.k; ++ky) {
        // output row i reads gy row i - ky + pad
        std::size_t ilo, ihi;
        valid_range(g.pad - static_cast<long>(ky) + g.pad, g.pad, g.h, ilo, ihi);
        for (std::size_t kx = 0; kx < g.k; ++kx) {
          std::size_t jlo, jhi;
          valid_range(g.pad - static_cast<long>(kx) + g.pad, g.pad, g.w, jlo, jhi);
          const double wv = Wt[((o * g.in_ch + c) * g.k + ky) * g.k + kx];
          for (std::size_t i = ilo; i < ihi; ++i) {
            const double* src = src_plane + (i + pad - ky) * g.w;
            double* dst = out + i * g.w;
            for (std::size_t j = jlo; j < jhi; ++j) dst[j] += wv * src[j + pad - kx];
          }
        }
      }
    }
  }
  return gx;
}

Tensor conv2d_weight_grad(const Tensor& x, const Tensor& gy, std::size_t kernel) {
  if (x.rank() != 4 || gy.rank() != 4 || x.dim(0) != gy.dim(0) || x.dim(2) != gy.dim(2) || x.dim(3) != gy.dim(3) ||
      kernel % 2 == 0)
    throw ShapeError("conv2d_weight_grad shapes " + shape_string(x.shape()) + " / " + shape_string(gy.shape()));
  const ConvGeom g{x.dim(0), x.dim(1), gy.dim(1), x.dim(2), x.dim(3), kernel, static_cast<long>(kernel / 2)};
  const std::size_t pad = g.k / 2;
  Tensor gw(Shape{g.out_ch, g.in_ch, g.k, g.k});
  const double* X = x.data().data();
  const double* G = gy.data().data();
  double* GW = gw.data().data();
  const std::size_t work = g.batch * g.out_ch * g.in_ch * g.k * g.k * g.h * g.w;
  // gw[o,c,ky,kx] = sum_{b,i,j} x[b,c,i+ky-p,j+kx-p] gy[b,o,i,j], summed in (b,i,j) order
#pragma omp parallel for schedule(static) if (work > kParallelThreshold)
  for (std::size_t oc = 0; oc < g.out_ch * g.in_ch; ++oc) {
    const std::size_t o = oc / g.in_ch, c = oc % g.in_ch;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      std::size_t ilo, ihi;
      valid_range(static_cast<long>(ky), g.pad, g.h, ilo, ihi);
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        std::size_t jlo, jhi;
        valid_range(static_cast<long>(kx), g.pad, g.w, jlo, jhi);
        double acc = 0.0;
        for (std::size_t b = 0; b < g.batch; ++b) {
          const double* xin = X + (b * g.in_ch + c) * g.h * g.w;
          const double* gin = G + (b * g.out_ch + o) * g.h * g.w;
          for (std::size_t i = ilo; i < ihi; ++i) {
            const double* xr = xin + (i + ky - pad) * g.w;
            const double* gr = gin + i * g.w;
            for (std::size_t j = jlo; j < jhi; ++j) acc += xr[j + kx - pad] * gr[j];
          }
        }
        GW[((o * g.in_ch + c) * g.k + ky) * g.k + kx] = acc;
      }
    }
  }
  return gw;
}

}  // namespace foml::kernels
