#include <algorithm>
#include <cmath>

#include "pulaski/tensor.hpp"

namespace pulaski::ops {

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() != 2 || bs.size() != 2 || as[1] != bs[0])
    throw ShapeError("matmul: incompatible shapes " + shape_str(as) + " x " + shape_str(bs));
  int64_t n = as[0], k = as[1], m = bs[1];
  Tensor out(Shape{n, m});
  const double* av = a.data();
  const double* bv = b.data();
  double* ov = out.data();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t p = 0; p < k; ++p) {
      double av_ip = av[i * k + p];
      const double* brow = bv + p * m;
      double* orow = ov + i * m;
      for (int64_t j = 0; j < m; ++j) orow[j] += av_ip * brow[j];
    }
  check_finite(out, "matmul");
  if (tracing(tape, {&a, &b})) {
    out.set_requires_grad(true);
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    tape->record(out, {a, b}, [ai, bi, oi, n, k, m]() {
      if (ai->grad.empty()) ai->grad.assign(ai->value.size(), 0.0);
      if (bi->grad.empty()) bi->grad.assign(bi->value.size(), 0.0);
      // dA = dOut * B^T, dB = A^T * dOut
      for (int64_t i = 0; i < n; ++i)
        for (int64_t p = 0; p < k; ++p) {
          const double* grow = oi->grad.data() + i * m;
          const double* brow = bi->value.data() + p * m;
          double acc = 0.0;
          for (int64_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
          ai->grad[i * k + p] += acc;
          double av_ip = ai->value[i * k + p];
          double* gbrow = bi->grad.data() + p * m;
          for (int64_t j = 0; j < m; ++j) gbrow[j] += av_ip * grow[j];
        }
    });
  }
  return out;
}

Tensor linear(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& b) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 2 || ws.size() != 2 || ws[1] != xs[1])
    throw ShapeError("linear: incompatible shapes x" + shape_str(xs) + " w" + shape_str(ws));
  int64_t n = xs[0], in = xs[1], outf = ws[0];
  bool has_bias = b.defined();
  if (has_bias && b.size() != outf) throw ShapeError("linear: bias length mismatch");
  Tensor out(Shape{n, outf});
  for (int64_t i = 0; i < n; ++i) {
    const double* xrow = x.data() + i * in;
    double* orow = out.data() + i * outf;
    for (int64_t o = 0; o < outf; ++o) {
      const double* wrow = w.data() + o * in;
      double acc = has_bias ? b[o] : 0.0;
      for (int64_t j = 0; j < in; ++j) acc += wrow[j] * xrow[j];
      orow[o] = acc;
    }
  }
  check_finite(out, "linear");
  if (tracing(tape, {&x, &w, &b})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), wi = w.impl(), oi = out.impl();
    auto bi = has_bias ? b.impl() : nullptr;
    std::vector<Tensor> parents{x, w};
    if (has_bias) parents.push_back(b);
    tape->record(out, parents, [xi, wi, bi, oi, n, in, outf]() {
      if (xi->grad.empty()) xi->grad.assign(xi->value.size(), 0.0);
      if (wi->grad.empty()) wi->grad.assign(wi->value.size(), 0.0);
      if (bi && bi->grad.empty()) bi->grad.assign(bi->value.size(), 0.0);
      for (int64_t i = 0; i < n; ++i) {
        const double* xrow = xi->value.data() + i * in;
        double* gxrow = xi->grad.data() + i * in;
        const double* grow = oi->grad.data() + i * outf;
        for (int64_t o = 0; o < outf; ++o) {
          double g = grow[o];
          const double* wrow = wi->value.data() + o * in;
          double* gwrow = wi->grad.data() + o * in;
          for (int64_t j = 0; j < in; ++j) {
            gxrow[j] += g * wrow[j];
            gwrow[j] += g * xrow[j];
          }
          if (bi) bi->grad[o] += g;
        }
      }
    });
  }
  return out;
}

Tensor instance_norm(Tape* tape, const Tensor& x, double eps) {
  const Shape& xs = x.shape();
  if (xs.size() < 3)
    throw ShapeError("instance_norm: input must be [N,C,spatial...], got " + shape_str(xs));
  if (!(eps > 0.0)) throw InvalidArgument("instance_norm: eps must be positive");
  int64_t planes = xs[0] * xs[1];
  int64_t p = x.size() / planes;
  Tensor out(xs);
  std::vector<double> inv_sd(planes);
  for (int64_t c = 0; c < planes; ++c) {
    const double* src = x.data() + c * p;
    double mean = 0.0;
    for (int64_t i = 0; i < p; ++i) mean += src[i];
    mean /= static_cast<double>(p);
    double var = 0.0;
    for (int64_t i = 0; i < p; ++i) var += (src[i] - mean) * (src[i] - mean);
    var /= static_cast<double>(p);
    double inv = 1.0 / std::sqrt(var + eps);
    inv_sd[c] = inv;
    double* dst = out.data() + c * p;
    for (int64_t i = 0; i < p; ++i) dst[i] = (src[i] - mean) * inv;
  }
  check_finite(out, "instance_norm");
  if (tracing(tape, {&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    tape->record(out, {x}, [xi, oi, inv_sd, planes, p]() {
      if (xi->grad.empty()) xi->grad.assign(xi->value.size(), 0.0);
      // dx = inv_sd * (dy - mean(dy) - y * mean(dy .* y))
      for (int64_t c = 0; c < planes; ++c) {
        const double* y = oi->value.data() + c * p;
        const double* gy = oi->grad.data() + c * p;
        double* gx = xi->grad.data() + c * p;
        double mean_gy = 0.0, mean_gyy = 0.0;
        for (int64_t i = 0; i < p; ++i) {
          mean_gy += gy[i];
          mean_gyy += gy[i] * y[i];
        }
        mean_gy /= static_cast<double>(p);
        mean_gyy /= static_cast<double>(p);
        for (int64_t i = 0; i < p; ++i)
          gx[i] += inv_sd[c] * (gy[i] - mean_gy - y[i] * mean_gyy);
      }
    });
  }
  return out;
}

Tensor transpose2d(Tape* tape, const Tensor& x) {
  const Shape& xs = x.shape();
  if (xs.size() != 2) throw ShapeError("transpose2d: expected a matrix, got " + shape_str(xs));
  int64_t n = xs[0], m = xs[1];
  Tensor out(Shape{m, n});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < m; ++j) out[j * n + i] = x[i * m + j];
  if (tracing(tape, {&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    tape->record(out, {x}, [xi, oi, n, m]() {
      if (xi->grad.empty()) xi->grad.assign(xi->value.size(), 0.0);
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < m; ++j) xi->grad[i * m + j] += oi->grad[j * n + i];
    });
  }
  return out;
}

Tensor softmax_channels(Tape* tape, const Tensor& x) {
  const Shape& xs = x.shape();
  if (xs.size() < 2)
    throw ShapeError("softmax_channels: input must be [N,C,...], got " + shape_str(xs));
  int64_t batch = xs[0], c = xs[1];
  int64_t plane = 1;
  for (size_t i = 2; i < xs.size(); ++i) plane *= xs[i];
  Tensor out(xs);
  for (int64_t n = 0; n < batch; ++n) {
    const double* base = x.data() + n * c * plane;
    double* obase = out.data() + n * c * plane;
    for (int64_t p = 0; p < plane; ++p) {
      double mx = base[p];
      for (int64_t ch = 1; ch < c; ++ch) mx = std::max(mx, base[ch * plane + p]);
      double denom = 0.0;
      for (int64_t ch = 0; ch < c; ++ch) denom += std::exp(base[ch * plane + p] - mx);
      for (int64_t ch = 0; ch < c; ++ch)
        obase[ch * plane + p] = std::exp(base[ch * plane + p] - mx) / denom;
    }
  }
  check_finite(out, "softmax_channels");
  if (tracing(tape, {&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    tape->record(out, {x}, [xi, oi, batch, c, plane]() {
      if (xi->grad.empty()) xi->grad.assign(xi->value.size(), 0.0);
      for (int64_t n = 0; n < batch; ++n) {
        const double* y = oi->value.data() + n * c * plane;
        const double* gy = oi->grad.data() + n * c * plane;
        double* gx = xi->grad.data() + n * c * plane;
        for (int64_t p = 0; p < plane; ++p) {
          double dot = 0.0;
          for (int64_t ch = 0; ch < c; ++ch) dot += gy[ch * plane + p] * y[ch * plane + p];
          for (int64_t ch = 0; ch < c; ++ch)
            gx[ch * plane + p] += y[ch * plane + p] * (gy[ch * plane + p] - dot);
        }
      }
    });
  }
  return out;
}

}  // namespace pulaski::ops
