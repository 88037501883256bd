#include <algorithm>
#include <cmath>

#include "pulaski/tensor.hpp"

namespace pulaski::ops {

namespace {

// Spatial geometry shared by the conv kernels. Supports 2 or 3 spatial dims;
// a 2-D problem is handled as depth-1 3-D so one code path serves both.
struct ConvGeom {
  int64_t batch, cin, cout;
  int64_t d, h, w;     // input spatial extents (d=1 for 2-D)
  int64_t kd, kh, kw;  // kernel extents (kd=1 for 2-D)
  int64_t pd, ph, pw;  // same-padding per axis
};

ConvGeom conv_geometry(const Tensor& x, const Tensor& k) {
  const Shape& xs = x.shape();
  const Shape& ks = k.shape();
  if (xs.size() != 4 && xs.size() != 5)
    throw ShapeError("conv: input must be [N,C,H,W] or [N,C,D,H,W], got " + shape_str(xs));
  if (ks.size() != xs.size())
    throw ShapeError("conv: kernel rank " + shape_str(ks) + " does not match input " +
                     shape_str(xs));
  ConvGeom g{};
  g.batch = xs[0];
  g.cin = xs[1];
  g.cout = ks[0];
  if (ks[1] != g.cin)
    throw ShapeError("conv: kernel expects " + std::to_string(ks[1]) + " input channels, got " +
                     std::to_string(g.cin));
  if (xs.size() == 4) {
    g.d = 1; g.h = xs[2]; g.w = xs[3];
    g.kd = 1; g.kh = ks[2]; g.kw = ks[3];
  } else {
    g.d = xs[2]; g.h = xs[3]; g.w = xs[4];
    g.kd = ks[2]; g.kh = ks[3]; g.kw = ks[4];
  }
  if (g.kd % 2 == 0 || g.kh % 2 == 0 || g.kw % 2 == 0)
    throw ShapeError("conv: kernels must be odd-sized for same padding, got " + shape_str(ks));
  g.pd = g.kd / 2; g.ph = g.kh / 2; g.pw = g.kw / 2;
  return g;
}

// out[n,co,z,y,x] += w * in[n,ci,z+dz,y+dy,x+dx] over the clipped box.
// Expressed as row operations so the inner loop is contiguous in x.
inline void accumulate_tap(const double* in, double* out, double wgt,
                           int64_t d, int64_t h, int64_t w,
                           int64_t dz, int64_t dy, int64_t dx) {
  int64_t z0 = std::max<int64_t>(0, -dz), z1 = std::min(d, d - dz);
  int64_t y0 = std::max<int64_t>(0, -dy), y1 = std::min(h, h - dy);
  int64_t x0 = std::max<int64_t>(0, -dx), x1 = std::min(w, w - dx);
  for (int64_t z = z0; z < z1; ++z) {
    for (int64_t y = y0; y < y1; ++y) {
      const double* src = in + ((z + dz) * h + (y + dy)) * w + (x0 + dx);
      double* dst = out + (z * h + y) * w + x0;
      int64_t run = x1 - x0;
      for (int64_t i = 0; i < run; ++i) dst[i] += wgt * src[i];
    }
  }
}

// Fused backward pass for one kernel tap: the upstream gradient at output o
// pairs with input index o+off both for the kernel gradient and the input
// gradient, so both accumulate in a single sweep.
inline double backward_tap(const double* in, double* gin, const double* gout, double wgt,
                           int64_t d, int64_t h, int64_t w,
                           int64_t dz, int64_t dy, int64_t dx) {
  int64_t z0 = std::max<int64_t>(0, -dz), z1 = std::min(d, d - dz);
  int64_t y0 = std::max<int64_t>(0, -dy), y1 = std::min(h, h - dy);
  int64_t x0 = std::max<int64_t>(0, -dx), x1 = std::min(w, w - dx);
  double gk = 0.0;
  for (int64_t z = z0; z < z1; ++z) {
    for (int64_t y = y0; y < y1; ++y) {
      int64_t q = ((z + dz) * h + (y + dy)) * w + (x0 + dx);
      const double* pin = in + q;
      double* pgin = gin + q;
      const double* pg = gout + (z * h + y) * w + x0;
      int64_t run = x1 - x0;
      for (int64_t i = 0; i < run; ++i) {
        gk += pin[i] * pg[i];
        pgin[i] += wgt * pg[i];
      }
    }
  }
  return gk;
}

}  // namespace

Tensor conv(Tape* tape, const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  ConvGeom g = conv_geometry(x, kernel);
  bool has_bias = bias.defined();
  if (has_bias && bias.size() != g.cout)
    throw ShapeError("conv: bias length " + std::to_string(bias.size()) +
                     " does not match out channels " + std::to_string(g.cout));

  Tensor out(x.shape().size() == 4 ? Shape{g.batch, g.cout, g.h, g.w}
                                   : Shape{g.batch, g.cout, g.d, g.h, g.w});
  int64_t plane = g.d * g.h * g.w;
  int64_t ksize = g.kd * g.kh * g.kw;
  const double* kv = kernel.data();
  for (int64_t n = 0; n < g.batch; ++n) {
    for (int64_t co = 0; co < g.cout; ++co) {
      double* optr = out.data() + (n * g.cout + co) * plane;
      if (has_bias) {
        double b = bias[co];
        for (int64_t i = 0; i < plane; ++i) optr[i] = b;
      }
      for (int64_t ci = 0; ci < g.cin; ++ci) {
        const double* iptr = x.data() + (n * g.cin + ci) * plane;
        const double* kptr = kv + (co * g.cin + ci) * ksize;
        int64_t t = 0;
        for (int64_t tz = 0; tz < g.kd; ++tz)
          for (int64_t ty = 0; ty < g.kh; ++ty)
            for (int64_t tx = 0; tx < g.kw; ++tx, ++t)
              accumulate_tap(iptr, optr, kptr[t], g.d, g.h, g.w,
                             tz - g.pd, ty - g.ph, tx - g.pw);
      }
    }
  }
  check_finite(out, "conv");

  if (tracing(tape, {&x, &kernel, &bias})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), ki = kernel.impl(), oi = out.impl();
    auto bi = has_bias ? bias.impl() : nullptr;
    std::vector<Tensor> parents{x, kernel};
    if (has_bias) parents.push_back(bias);
    tape->record(out, parents, [xi, ki, bi, oi, g, plane, ksize]() {
      if (xi->grad.empty()) xi->grad.assign(xi->value.size(), 0.0);
      if (ki->grad.empty()) ki->grad.assign(ki->value.size(), 0.0);
      if (bi && bi->grad.empty()) bi->grad.assign(bi->value.size(), 0.0);
      for (int64_t n = 0; n < g.batch; ++n) {
        for (int64_t co = 0; co < g.cout; ++co) {
          const double* gout = oi->grad.data() + (n * g.cout + co) * plane;
          if (bi) {
            double s = 0.0;
            for (int64_t i = 0; i < plane; ++i) s += gout[i];
            bi->grad[co] += s;
          }
          for (int64_t ci = 0; ci < g.cin; ++ci) {
            const double* iptr = xi->value.data() + (n * g.cin + ci) * plane;
            double* gin = xi->grad.data() + (n * g.cin + ci) * plane;
            const double* kptr = ki->value.data() + (co * g.cin + ci) * ksize;
            double* gk = ki->grad.data() + (co * g.cin + ci) * ksize;
            int64_t t = 0;
            for (int64_t tz = 0; tz < g.kd; ++tz)
              for (int64_t ty = 0; ty < g.kh; ++ty)
                for (int64_t tx = 0; tx < g.kw; ++tx, ++t)
                  gk[t] += backward_tap(iptr, gin, gout, kptr[t], g.d, g.h, g.w,
                                        tz - g.pd, ty - g.ph, tx - g.pw);
          }
        }
      }
    });
  }
  return out;
}

Tensor transposed_conv(Tape* tape, const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  const Shape& xs = x.shape();
  const Shape& ks = kernel.shape();
  if (xs.size() != 4 && xs.size() != 5)
    throw ShapeError("transposed_conv: input must be [N,C,H,W] or [N,C,D,H,W], got " +
                     shape_str(xs));
  size_t sdims = xs.size() - 2;
  if (ks.size() != xs.size())
    throw ShapeError("transposed_conv: kernel rank mismatch " + shape_str(ks));
  for (size_t i = 0; i < sdims; ++i)
    if (ks[2 + i] != 2)
      throw ShapeError("transposed_conv: factor-2 kernel required, got " + shape_str(ks));
  int64_t batch = xs[0], cin = xs[1], cout = ks[1];
  if (ks[0] != cin)
    throw ShapeError("transposed_conv: kernel expects " + std::to_string(ks[0]) +
                     " input channels, got " + std::to_string(cin));
  bool has_bias = bias.defined();
  if (has_bias && bias.size() != cout)
    throw ShapeError("transposed_conv: bias length mismatch");

  int64_t d = sdims == 3 ? xs[2] : 1;
  int64_t h = xs[sdims == 3 ? 3 : 2], w = xs[sdims == 3 ? 4 : 3];
  Shape out_shape = sdims == 3 ? Shape{batch, cout, 2 * d, 2 * h, 2 * w}
                               : Shape{batch, cout, 2 * h, 2 * w};
  Tensor out(out_shape);
  int64_t in_plane = d * h * w;
  int64_t od = sdims == 3 ? 2 * d : 1, oh = 2 * h, ow = 2 * w;
  int64_t out_plane = od * oh * ow;
  int64_t ktaps = sdims == 3 ? 8 : 4;
  int64_t kdd = sdims == 3 ? 2 : 1;

  const double* kv = kernel.data();
  for (int64_t n = 0; n < batch; ++n) {
    for (int64_t co = 0; co < cout; ++co) {
      double* optr = out.data() + (n * cout + co) * out_plane;
      if (has_bias) std::fill(optr, optr + out_plane, bias[co]);
      for (int64_t ci = 0; ci < cin; ++ci) {
        const double* iptr = x.data() + (n * cin + ci) * in_plane;
        const double* kptr = kv + (ci * cout + co) * ktaps;
        int64_t t = 0;
        for (int64_t tz = 0; tz < kdd; ++tz)
          for (int64_t ty = 0; ty < 2; ++ty)
            for (int64_t tx = 0; tx < 2; ++tx, ++t) {
              double wgt = kptr[t];
              for (int64_t z = 0; z < d; ++z)
                for (int64_t y = 0; y < h; ++y) {
                  const double* src = iptr + (z * h + y) * w;
                  double* dst = optr + ((2 * z + tz) * oh + (2 * y + ty)) * ow + tx;
                  for (int64_t xx = 0; xx < w; ++xx) dst[2 * xx] += wgt * src[xx];
                }
            }
      }
    }
  }
  check_finite(out, "transposed_conv");

  if (tracing(tape, {&x, &kernel, &bias})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), ki = kernel.impl(), oi = out.impl();
    auto bi = has_bias ? bias.impl() : nullptr;
    std::vector<Tensor> parents{x, kernel};
    if (has_bias) parents.push_back(bias);
    tape->record(out, parents,
                 [xi, ki, bi, oi, batch, cin, cout, d, h, w, oh, ow, in_plane, out_plane,
                  ktaps, kdd]() {
      if (xi->grad.empty()) xi->grad.assign(xi->value.size(), 0.0);
      if (ki->grad.empty()) ki->grad.assign(ki->value.size(), 0.0);
      if (bi && bi->grad.empty()) bi->grad.assign(bi->value.size(), 0.0);
      for (int64_t n = 0; n < batch; ++n) {
        for (int64_t co = 0; co < cout; ++co) {
          const double* gout = oi->grad.data() + (n * cout + co) * out_plane;
          if (bi) {
            double s = 0.0;
            for (int64_t i = 0; i < out_plane; ++i) s += gout[i];
            bi->grad[co] += s;
          }
          for (int64_t ci = 0; ci < cin; ++ci) {
            const double* iptr = xi->value.data() + (n * cin + ci) * in_plane;
            double* gin = xi->grad.data() + (n * cin + ci) * in_plane;
            const double* kptr = ki->value.data() + (ci * cout + co) * ktaps;
            double* gk = ki->grad.data() + (ci * cout + co) * ktaps;
            int64_t t = 0;
            for (int64_t tz = 0; tz < kdd; ++tz)
              for (int64_t ty = 0; ty < 2; ++ty)
                for (int64_t tx = 0; tx < 2; ++tx, ++t) {
                  double wgt = kptr[t];
                  double gw = 0.0;
                  for (int64_t z = 0; z < d; ++z)
                    for (int64_t y = 0; y < h; ++y) {
                      const double* src = iptr + (z * h + y) * w;
                      double* gsrc = gin + (z * h + y) * w;
                      const double* g = gout + ((2 * z + tz) * oh + (2 * y + ty)) * ow + tx;
                      for (int64_t xx = 0; xx < w; ++xx) {
                        gw += src[xx] * g[2 * xx];
                        gsrc[xx] += wgt * g[2 * xx];
                      }
                    }
                  gk[t] += gw;
                }
          }
        }
      }
    });
  }
  return out;
}

Tensor avg_pool(Tape* tape, const Tensor& x) {
  const Shape& xs = x.shape();
  if (xs.size() != 4 && xs.size() != 5)
    throw ShapeError("avg_pool: input must be [N,C,H,W] or [N,C,D,H,W], got " + shape_str(xs));
  size_t sdims = xs.size() - 2;
  for (size_t i = 2; i < xs.size(); ++i)
    if (xs[i] % 2 != 0)
      throw ShapeError("avg_pool: spatial extents must be even, got " + shape_str(xs));
  int64_t nc = xs[0] * xs[1];
  int64_t d = sdims == 3 ? xs[2] : 1;
  int64_t h = xs[sdims == 3 ? 3 : 2], w = xs[sdims == 3 ? 4 : 3];
  int64_t od = sdims == 3 ? d / 2 : 1, oh = h / 2, ow = w / 2;
  Shape out_shape = sdims == 3 ? Shape{xs[0], xs[1], od, oh, ow} : Shape{xs[0], xs[1], oh, ow};
  Tensor out(out_shape);
  int64_t in_plane = d * h * w, out_plane = od * oh * ow;
  double inv = sdims == 3 ? 0.125 : 0.25;
  int64_t zstep = sdims == 3 ? 2 : 1;

  for (int64_t c = 0; c < nc; ++c) {
    const double* iptr = x.data() + c * in_plane;
    double* optr = out.data() + c * out_plane;
    for (int64_t z = 0; z < od; ++z)
      for (int64_t y = 0; y < oh; ++y)
        for (int64_t xx = 0; xx < ow; ++xx) {
          double s = 0.0;
          for (int64_t bz = 0; bz < zstep; ++bz)
            for (int64_t by = 0; by < 2; ++by)
              for (int64_t bx = 0; bx < 2; ++bx)
                s += iptr[((zstep * z + bz) * h + (2 * y + by)) * w + (2 * xx + bx)];
          optr[(z * oh + y) * ow + xx] = s * inv;
        }
  }
  check_finite(out, "avg_pool");

  if (tracing(tape, {&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    tape->record(out, {x}, [xi, oi, nc, in_plane, out_plane, od, oh, ow, h, w, inv, zstep]() {
      if (xi->grad.empty()) xi->grad.assign(xi->value.size(), 0.0);
      for (int64_t c = 0; c < nc; ++c) {
        const double* g = oi->grad.data() + c * out_plane;
        double* gin = xi->grad.data() + c * in_plane;
        for (int64_t z = 0; z < od; ++z)
          for (int64_t y = 0; y < oh; ++y)
            for (int64_t xx = 0; xx < ow; ++xx) {
              double gv = g[(z * oh + y) * ow + xx] * inv;
              for (int64_t bz = 0; bz < zstep; ++bz)
                for (int64_t by = 0; by < 2; ++by)
                  for (int64_t bx = 0; bx < 2; ++bx)
                    gin[((zstep * z + bz) * h + (2 * y + by)) * w + (2 * xx + bx)] += gv;
            }
      }
    });
  }
  return out;
}

Tensor global_avg_pool(Tape* tape, const Tensor& x) {
  const Shape& xs = x.shape();
  if (xs.size() < 3)
    throw ShapeError("global_avg_pool: input must be [N,C,spatial...], got " + shape_str(xs));
  int64_t batch = xs[0], c = xs[1];
  int64_t plane = 1;
  for (size_t i = 2; i < xs.size(); ++i) plane *= xs[i];
  Tensor out(Shape{batch, c});
  double inv = 1.0 / static_cast<double>(plane);
  for (int64_t i = 0; i < batch * c; ++i) {
    const double* p = x.data() + i * plane;
    double s = 0.0;
    for (int64_t j = 0; j < plane; ++j) s += p[j];
    out[i] = s * inv;
  }
  check_finite(out, "global_avg_pool");
  if (tracing(tape, {&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    tape->record(out, {x}, [xi, oi, batch, c, plane, inv]() {
      if (xi->grad.empty()) xi->grad.assign(xi->value.size(), 0.0);
      for (int64_t i = 0; i < batch * c; ++i) {
        double g = oi->grad[i] * inv;
        double* dst = xi->grad.data() + i * plane;
        for (int64_t j = 0; j < plane; ++j) dst[j] += g;
      }
    });
  }
  return out;
}

}  // namespace pulaski::ops
