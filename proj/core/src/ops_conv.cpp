#include <cmath>

#include "pare/ops.hpp"

namespace pare {
namespace detail {
void gemm_nn(const real* a, const real* b, real* c, int64_t m, int64_t k, int64_t n,
             int64_t lda, int64_t ldb, int64_t ldc);
void gemm_nt(const real* a, const real* b, real* c, int64_t m, int64_t k, int64_t n,
             int64_t lda, int64_t ldb, int64_t ldc);
void gemm_tn(const real* a, const real* b, real* c, int64_t m, int64_t k, int64_t n,
             int64_t lda, int64_t ldb, int64_t ldc);
}  // namespace detail

namespace {

struct ConvDims {
  int64_t cin, iz, iy, ix;
  int64_t cout, kz, ky, kx;
  int64_t oz, oy, ox;
  int stride, pad;
  int64_t in_vol() const { return iz * iy * ix; }
  int64_t out_vol() const { return oz * oy * ox; }
  int64_t patch() const { return cin * kz * ky * kx; }
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
  if (x.rank() != 4 || w.rank() != 5) {
    throw TensorError("conv3d: expects x [Cin,Z,Y,X] and w [Cout,Cin,kz,ky,kx], got " +
                      shape_str(x.shape()) + " and " + shape_str(w.shape()));
  }
  if (w.dim(1) != x.dim(0)) {
    throw TensorError("conv3d: input channels " + std::to_string(x.dim(0)) +
                      " do not match kernel " + shape_str(w.shape()));
  }
  if (stride < 1 || pad < 0) throw TensorError("conv3d: bad stride/pad");
  ConvDims d{};
  d.cin = x.dim(0), d.iz = x.dim(1), d.iy = x.dim(2), d.ix = x.dim(3);
  d.cout = w.dim(0), d.kz = w.dim(2), d.ky = w.dim(3), d.kx = w.dim(4);
  d.stride = stride, d.pad = pad;
  d.oz = (d.iz + 2 * pad - d.kz) / stride + 1;
  d.oy = (d.iy + 2 * pad - d.ky) / stride + 1;
  d.ox = (d.ix + 2 * pad - d.kx) / stride + 1;
  if (d.oz <= 0 || d.oy <= 0 || d.ox <= 0) {
    throw TensorError("conv3d: kernel " + shape_str(w.shape()) + " larger than padded input " +
                      shape_str(x.shape()));
  }
  return d;
}

// One output z-plane of the im2col buffer: col[patch, oy*ox].
void im2col_plane(const real* x, const ConvDims& d, int64_t oz, real* col) {
  const int64_t plane = d.oy * d.ox;
  int64_t row = 0;
  for (int64_t ci = 0; ci < d.cin; ++ci) {
    const real* xc = x + ci * d.in_vol();
    for (int64_t fz = 0; fz < d.kz; ++fz) {
      const int64_t iz = oz * d.stride - d.pad + fz;
      const bool z_ok = iz >= 0 && iz < d.iz;
      for (int64_t fy = 0; fy < d.ky; ++fy) {
        for (int64_t fx = 0; fx < d.kx; ++fx, ++row) {
          real* dst = col + row * plane;
          if (!z_ok) {
            for (int64_t i = 0; i < plane; ++i) dst[i] = 0;
            continue;
          }
          for (int64_t oy = 0; oy < d.oy; ++oy) {
            const int64_t iy = oy * d.stride - d.pad + fy;
            real* drow = dst + oy * d.ox;
            if (iy < 0 || iy >= d.iy) {
              for (int64_t i = 0; i < d.ox; ++i) drow[i] = 0;
              continue;
            }
            const real* src = xc + (iz * d.iy + iy) * d.ix;
            for (int64_t ox = 0; ox < d.ox; ++ox) {
              const int64_t ix = ox * d.stride - d.pad + fx;
              drow[ox] = (ix >= 0 && ix < d.ix) ? src[ix] : real(0);
            }
          }
        }
      }
    }
  }
}

void col2im_plane(const real* col, const ConvDims& d, int64_t oz, real* gx) {
  const int64_t plane = d.oy * d.ox;
  int64_t row = 0;
  for (int64_t ci = 0; ci < d.cin; ++ci) {
    real* gc = gx + ci * d.in_vol();
    for (int64_t fz = 0; fz < d.kz; ++fz) {
      const int64_t iz = oz * d.stride - d.pad + fz;
      const bool z_ok = iz >= 0 && iz < d.iz;
      for (int64_t fy = 0; fy < d.ky; ++fy) {
        for (int64_t fx = 0; fx < d.kx; ++fx, ++row) {
          if (!z_ok) continue;
          const real* src = col + row * plane;
          for (int64_t oy = 0; oy < d.oy; ++oy) {
            const int64_t iy = oy * d.stride - d.pad + fy;
            if (iy < 0 || iy >= d.iy) continue;
            real* drow = gc + (iz * d.iy + iy) * d.ix;
            const real* srow = src + oy * d.ox;
            for (int64_t ox = 0; ox < d.ox; ++ox) {
              const int64_t ix = ox * d.stride - d.pad + fx;
              if (ix >= 0 && ix < d.ix) drow[ix] += srow[ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
  const ConvDims d = conv_dims(x, w, stride, pad);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != d.cout)) {
    throw TensorError("conv3d: bias " + shape_str(bias.shape()) + " does not match Cout " +
                      std::to_string(d.cout));
  }
  Tensor out(Shape{d.cout, d.oz, d.oy, d.ox});
  const int64_t plane = d.oy * d.ox;
  std::vector<real> col(static_cast<std::size_t>(d.patch() * plane));
  const real* xd = x.data().data();
  const real* wd = w.data().data();
  real* od = out.data().data();
  for (int64_t oz = 0; oz < d.oz; ++oz) {
    im2col_plane(xd, d, oz, col.data());
    // out[:, oz-plane] += w [Cout, patch] · col [patch, plane]
    detail::gemm_nn(wd, col.data(), od + oz * plane, d.cout, d.patch(), plane, d.patch(), plane,
                    d.out_vol());
  }
  if (bias.defined()) {
    const real* bd = bias.data().data();
    for (int64_t co = 0; co < d.cout; ++co) {
      real* oc = od + co * d.out_vol();
      for (int64_t i = 0; i < d.out_vol(); ++i) oc[i] += bd[co];
    }
  }
  detail::check_finite(out, "conv3d");

  if (detail::tracing({&x, &w, &bias})) {
    out.set_requires_grad(true);
    Tensor xc = x, wc = w, bc = bias, oc = out;
    Graph::active()->record([xc, wc, bc, oc, d]() mutable {
      const int64_t plane2 = d.oy * d.ox;
      const real* go = oc.grad().data();
      std::vector<real> col2(static_cast<std::size_t>(d.patch() * plane2));
      std::vector<real> dcol(static_cast<std::size_t>(d.patch() * plane2));
      const bool need_dx = xc.requires_grad();
      const bool need_dw = wc.requires_grad();
      real* gx = need_dx ? xc.grad().data() : nullptr;
      real* gw = need_dw ? wc.grad().data() : nullptr;
      const real* xd2 = xc.data().data();
      const real* wd2 = wc.data().data();
      for (int64_t oz = 0; oz < d.oz; ++oz) {
        const real* go_plane = go + oz * plane2;
        if (need_dx) {
          std::fill(dcol.begin(), dcol.end(), real(0));
          // dcol = w^T · dY_plane
          detail::gemm_tn(wd2, go_plane, dcol.data(), d.patch(), d.cout, plane2, d.patch(),
                          d.out_vol(), plane2);
          col2im_plane(dcol.data(), d, oz, gx);
        }
        if (need_dw) {
          im2col_plane(xd2, d, oz, col2.data());
          // dW += dY_plane · col^T
          detail::gemm_nt(go_plane, col2.data(), gw, d.cout, plane2, d.patch(), d.out_vol(),
                          plane2, d.patch());
        }
      }
      if (bc.defined() && bc.requires_grad()) {
        auto gb = bc.grad();
        for (int64_t co = 0; co < d.cout; ++co) {
          real acc = 0;
          const real* gco = go + co * d.out_vol();
          for (int64_t i = 0; i < d.out_vol(); ++i) acc += gco[i];
          gb[co] += acc;
        }
      }
    });
  }
  return out;
}

Tensor conv_transpose3d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride) {
  if (x.rank() != 4 || w.rank() != 5) {
    throw TensorError("conv_transpose3d: expects x [Cin,Z,Y,X] and w [Cin,Cout,kz,ky,kx], got " +
                      shape_str(x.shape()) + " and " + shape_str(w.shape()));
  }
  if (w.dim(0) != x.dim(0)) {
    throw TensorError("conv_transpose3d: input channels " + std::to_string(x.dim(0)) +
                      " do not match kernel " + shape_str(w.shape()));
  }
  if (stride < 1) throw TensorError("conv_transpose3d: bad stride");
  const int64_t cin = x.dim(0), iz = x.dim(1), iy = x.dim(2), ix = x.dim(3);
  const int64_t cout = w.dim(1), kz = w.dim(2), ky = w.dim(3), kx = w.dim(4);
  const int64_t oz = (iz - 1) * stride + kz;
  const int64_t oy = (iy - 1) * stride + ky;
  const int64_t ox = (ix - 1) * stride + kx;
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
    throw TensorError("conv_transpose3d: bias " + shape_str(bias.shape()) +
                      " does not match Cout " + std::to_string(cout));
  }
  Tensor out(Shape{cout, oz, oy, ox});
  const int64_t ivol = iz * iy * ix;
  const int64_t ovol = oz * oy * ox;
  const int64_t kvol = kz * ky * kx;
  const real* xd = x.data().data();
  const real* wd = w.data().data();
  real* od = out.data().data();

  // Scatter each input voxel into its k^3 output footprint.
  for (int64_t ci = 0; ci < cin; ++ci) {
    const real* xc = xd + ci * ivol;
    const real* wc = wd + ci * cout * kvol;
    for (int64_t z = 0; z < iz; ++z)
      for (int64_t y = 0; y < iy; ++y)
        for (int64_t xi = 0; xi < ix; ++xi) {
          const real v = xc[(z * iy + y) * ix + xi];
          for (int64_t co = 0; co < cout; ++co) {
            const real* wk = wc + co * kvol;
            real* oc = od + co * ovol;
            for (int64_t fz = 0; fz < kz; ++fz)
              for (int64_t fy = 0; fy < ky; ++fy) {
                real* orow = oc + ((z * stride + fz) * oy + y * stride + fy) * ox + xi * stride;
                const real* wrow = wk + (fz * ky + fy) * kx;
                for (int64_t fx = 0; fx < kx; ++fx) orow[fx] += v * wrow[fx];
              }
          }
        }
  }
  if (bias.defined()) {
    const real* bd = bias.data().data();
    for (int64_t co = 0; co < cout; ++co) {
      real* oc = od + co * ovol;
      for (int64_t i = 0; i < ovol; ++i) oc[i] += bd[co];
    }
  }
  detail::check_finite(out, "conv_transpose3d");

  if (detail::tracing({&x, &w, &bias})) {
    out.set_requires_grad(true);
    Tensor xc2 = x, wc2 = w, bc = bias, oc2 = out;
    Graph::active()->record([xc2, wc2, bc, oc2, cin, cout, iz, iy, ix, oz, oy, ox, kz, ky, kx,
                             stride]() mutable {
      const int64_t ivol2 = iz * iy * ix;
      const int64_t ovol2 = oz * oy * ox;
      const int64_t kvol2 = kz * ky * kx;
      const real* go = oc2.grad().data();
      const real* xd2 = xc2.data().data();
      const real* wd2 = wc2.data().data();
      if (xc2.requires_grad()) {
        real* gx = xc2.grad().data();
        for (int64_t ci = 0; ci < cin; ++ci) {
          const real* wc3 = wd2 + ci * cout * kvol2;
          real* gc = gx + ci * ivol2;
          for (int64_t z = 0; z < iz; ++z)
            for (int64_t y = 0; y < iy; ++y)
              for (int64_t xi = 0; xi < ix; ++xi) {
                real acc = 0;
                for (int64_t co = 0; co < cout; ++co) {
                  const real* wk = wc3 + co * kvol2;
                  const real* gco = go + co * ovol2;
                  for (int64_t fz = 0; fz < kz; ++fz)
                    for (int64_t fy = 0; fy < ky; ++fy) {
                      const real* grow =
                          gco + ((z * stride + fz) * oy + y * stride + fy) * ox + xi * stride;
                      const real* wrow = wk + (fz * ky + fy) * kx;
                      for (int64_t fx = 0; fx < kx; ++fx) acc += grow[fx] * wrow[fx];
                    }
                }
                gc[(z * iy + y) * ix + xi] += acc;
              }
        }
      }
      if (wc2.requires_grad()) {
        real* gw = wc2.grad().data();
        for (int64_t ci = 0; ci < cin; ++ci) {
          const real* xc3 = xd2 + ci * ivol2;
          for (int64_t co = 0; co < cout; ++co) {
            const real* gco = go + co * ovol2;
            real* gwk = gw + (ci * cout + co) * kvol2;
            for (int64_t fz = 0; fz < kz; ++fz)
              for (int64_t fy = 0; fy < ky; ++fy)
                for (int64_t fx = 0; fx < kx; ++fx) {
                  real acc = 0;
                  for (int64_t z = 0; z < iz; ++z)
                    for (int64_t y = 0; y < iy; ++y) {
                      const real* xrow = xc3 + (z * iy + y) * ix;
                      const real* grow =
                          gco + ((z * stride + fz) * oy + y * stride + fy) * ox + fx;
                      for (int64_t xi = 0; xi < ix; ++xi) acc += xrow[xi] * grow[xi * stride];
                    }
                  gwk[(fz * ky + fy) * kx + fx] += acc;
                }
          }
        }
      }
      if (bc.defined() && bc.requires_grad()) {
        auto gb = bc.grad();
        for (int64_t co = 0; co < cout; ++co) {
          real acc = 0;
          const real* gco = go + co * ovol2;
          for (int64_t i = 0; i < ovol2; ++i) acc += gco[i];
          gb[co] += acc;
        }
      }
    });
  }
  return out;
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.rank() < 2) {
    throw TensorError("global_avg_pool: expects [C, spatial...], got " + shape_str(x.shape()));
  }
  const int64_t c = x.dim(0);
  const int64_t inner = x.numel() / c;
  Tensor out(Shape{c});
  auto xd = x.data();
  auto od = out.data();
  for (int64_t ch = 0; ch < c; ++ch) {
    double acc = 0;
    for (int64_t i = 0; i < inner; ++i) acc += static_cast<double>(xd[ch * inner + i]);
    od[ch] = static_cast<real>(acc / static_cast<double>(inner));
  }
  detail::check_finite(out, "global_avg_pool");
  if (detail::tracing({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    Graph::active()->record([xc, oc, c, inner]() mutable {
      auto og = oc.grad();
      auto g = xc.grad();
      const real inv = real(1) / real(inner);
      for (int64_t ch = 0; ch < c; ++ch) {
        const real go = og[ch] * inv;
        for (int64_t i = 0; i < inner; ++i) g[ch * inner + i] += go;
      }
    });
  }
  return out;
}

int64_t window_count(const Shape& spatial, std::array<int, 3> window, std::array<int, 3> stride) {
  if (spatial.size() != 3) {
    throw TensorError("window_count: expects 3 spatial dims, got " + shape_str(spatial));
  }
  static const char* axis_name[3] = {"z", "y", "x"};
  int64_t g = 1;
  for (int a = 0; a < 3; ++a) {
    const int64_t dim = spatial[static_cast<std::size_t>(a)];
    const int64_t w = window[static_cast<std::size_t>(a)];
    const int64_t s = stride[static_cast<std::size_t>(a)];
    if (w <= 0 || s <= 0 || s > w) {
      throw TensorError(std::string("window_count: axis ") + axis_name[a] +
                        ": stride must be in 1..window");
    }
    if (dim < w || (dim - w) % s != 0) {
      throw TensorError(std::string("window_count: axis ") + axis_name[a] + ": (dim " +
                        std::to_string(dim) + " - window " + std::to_string(w) +
                        ") not divisible by stride " + std::to_string(s));
    }
    g *= (dim - w) / s + 1;
  }
  return g;
}

Tensor extract_windows(const Tensor& x, std::array<int, 3> window, std::array<int, 3> stride) {
  if (x.rank() != 4) {
    throw TensorError("extract_windows: expects [C, Z, Y, X], got " + shape_str(x.shape()));
  }
  const Shape spatial{x.dim(1), x.dim(2), x.dim(3)};
  const int64_t g = window_count(spatial, window, stride);
  const int64_t c = x.dim(0);
  const int64_t wz = window[0], wy = window[1], wx = window[2];
  const int64_t sz = stride[0], sy = stride[1], sx = stride[2];
  const int64_t nz = (x.dim(1) - wz) / sz + 1;
  const int64_t ny = (x.dim(2) - wy) / sy + 1;
  const int64_t nx = (x.dim(3) - wx) / sx + 1;
  const int64_t patch = c * wz * wy * wx;
  const int64_t iy = x.dim(2), ixd = x.dim(3);
  const int64_t ivol = x.dim(1) * iy * ixd;

  Tensor out(Shape{g, patch});
  auto xd = x.data();
  auto od = out.data();
  int64_t row = 0;
  for (int64_t bz = 0; bz < nz; ++bz)
    for (int64_t by = 0; by < ny; ++by)
      for (int64_t bx = 0; bx < nx; ++bx, ++row) {
        real* dst = od.data() + row * patch;
        int64_t k = 0;
        for (int64_t ch = 0; ch < c; ++ch)
          for (int64_t fz = 0; fz < wz; ++fz)
            for (int64_t fy = 0; fy < wy; ++fy) {
              const real* src =
                  xd.data() + ch * ivol + ((bz * sz + fz) * iy + by * sy + fy) * ixd + bx * sx;
              for (int64_t fx = 0; fx < wx; ++fx) dst[k++] = src[fx];
            }
      }
  detail::check_finite(out, "extract_windows");

  if (detail::tracing({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    Graph::active()->record([xc, oc, c, wz, wy, wx, sz, sy, sx, nz, ny, nx, patch, iy, ixd,
                             ivol]() mutable {
      auto og = oc.grad();
      auto gx = xc.grad();
      int64_t row2 = 0;
      for (int64_t bz = 0; bz < nz; ++bz)
        for (int64_t by = 0; by < ny; ++by)
          for (int64_t bx = 0; bx < nx; ++bx, ++row2) {
            const real* src = og.data() + row2 * patch;
            int64_t k = 0;
            for (int64_t ch = 0; ch < c; ++ch)
              for (int64_t fz = 0; fz < wz; ++fz)
                for (int64_t fy = 0; fy < wy; ++fy) {
                  real* dst = gx.data() + ch * ivol +
                              ((bz * sz + fz) * iy + by * sy + fy) * ixd + bx * sx;
                  for (int64_t fx = 0; fx < wx; ++fx) dst[fx] += src[k++];
                }
          }
    });
  }
  return out;
}

}  // namespace pare
