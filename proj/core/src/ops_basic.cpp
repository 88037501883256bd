#include <algorithm>
#include <cmath>

#include "pulaski/tensor.hpp"

namespace pulaski::ops {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!same_shape(a.shape(), b.shape()))
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
}

// Elementwise map with derivative expressed in terms of (x, y).
template <class F, class DF>
Tensor unary_map(Tape* tape, const Tensor& x, const char* name, F f, DF df) {
  Tensor out(x.shape());
  const double* xv = x.data();
  double* ov = out.data();
  for (int64_t i = 0; i < x.size(); ++i) ov[i] = f(xv[i]);
  check_finite(out, name);
  if (tracing(tape, {&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl();
    auto oi = out.impl();
    tape->record(out, {x}, [xi, oi, df]() {
      if (xi->grad.empty()) xi->grad.assign(xi->value.size(), 0.0);
      for (size_t i = 0; i < xi->value.size(); ++i)
        xi->grad[i] += df(xi->value[i], oi->value[i]) * oi->grad[i];
    });
  }
  return out;
}

}  // namespace

Tensor relu(Tape* tape, const Tensor& x) {
  return unary_map(tape, x, "relu",
                   [](double v) { return v > 0.0 ? v : 0.0; },
                   [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(Tape* tape, const Tensor& x) {
  return unary_map(tape, x, "sigmoid",
                   [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
                   [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(Tape* tape, const Tensor& x) {
  return unary_map(tape, x, "exp",
                   [](double v) { return std::exp(v); },
                   [](double, double y) { return y; });
}

Tensor log(Tape* tape, const Tensor& x) {
  return unary_map(tape, x, "log",
                   [](double v) { return std::log(v); },
                   [](double v, double) { return 1.0 / v; });
}

Tensor sqrt(Tape* tape, const Tensor& x) {
  return unary_map(tape, x, "sqrt",
                   [](double v) { return std::sqrt(v); },
                   [](double, double y) { return 0.5 / y; });
}

Tensor softplus(Tape* tape, const Tensor& x) {
  // log(1+e^x) = max(x,0) + log1p(e^{-|x|})
  return unary_map(tape, x, "softplus",
                   [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
                   [](double v, double) { return 1.0 / (1.0 + std::exp(-v)); });
}

Tensor pow_scalar(Tape* tape, const Tensor& x, double p) {
  return unary_map(tape, x, "pow_scalar",
                   [p](double v) { return std::pow(v, p); },
                   [p](double v, double) { return v == 0.0 ? 0.0 : p * std::pow(v, p - 1.0); });
}

Tensor clamp(Tape* tape, const Tensor& x, double lo, double hi) {
  if (!(lo < hi)) throw InvalidArgument("clamp: lo must be < hi");
  return unary_map(tape, x, "clamp",
                   [lo, hi](double v) { return std::min(std::max(v, lo), hi); },
                   [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Tensor scale(Tape* tape, const Tensor& x, double c) {
  return unary_map(tape, x, "scale",
                   [c](double v) { return c * v; },
                   [c](double, double) { return c; });
}

Tensor add_scalar(Tape* tape, const Tensor& x, double c) {
  return unary_map(tape, x, "add_scalar",
                   [c](double v) { return v + c; },
                   [](double, double) { return 1.0; });
}

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  check_finite(out, "add");
  if (tracing(tape, {&a, &b})) {
    out.set_requires_grad(true);
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    tape->record(out, {a, b}, [ai, bi, oi]() {
      if (ai->grad.empty()) ai->grad.assign(ai->value.size(), 0.0);
      if (bi->grad.empty()) bi->grad.assign(bi->value.size(), 0.0);
      for (size_t i = 0; i < oi->grad.size(); ++i) {
        ai->grad[i] += oi->grad[i];
        bi->grad[i] += oi->grad[i];
      }
    });
  }
  return out;
}

Tensor sub(Tape* tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  check_finite(out, "sub");
  if (tracing(tape, {&a, &b})) {
    out.set_requires_grad(true);
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    tape->record(out, {a, b}, [ai, bi, oi]() {
      if (ai->grad.empty()) ai->grad.assign(ai->value.size(), 0.0);
      if (bi->grad.empty()) bi->grad.assign(bi->value.size(), 0.0);
      for (size_t i = 0; i < oi->grad.size(); ++i) {
        ai->grad[i] += oi->grad[i];
        bi->grad[i] -= oi->grad[i];
      }
    });
  }
  return out;
}

Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  check_finite(out, "mul");
  if (tracing(tape, {&a, &b})) {
    out.set_requires_grad(true);
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    tape->record(out, {a, b}, [ai, bi, oi]() {
      if (ai->grad.empty()) ai->grad.assign(ai->value.size(), 0.0);
      if (bi->grad.empty()) bi->grad.assign(bi->value.size(), 0.0);
      for (size_t i = 0; i < oi->grad.size(); ++i) {
        ai->grad[i] += bi->value[i] * oi->grad[i];
        bi->grad[i] += ai->value[i] * oi->grad[i];
      }
    });
  }
  return out;
}

Tensor sum(Tape* tape, const Tensor& x) {
  double s = 0.0;
  for (int64_t i = 0; i < x.size(); ++i) s += x[i];
  Tensor out = Tensor::scalar(s);
  check_finite(out, "sum");
  if (tracing(tape, {&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    tape->record(out, {x}, [xi, oi]() {
      if (xi->grad.empty()) xi->grad.assign(xi->value.size(), 0.0);
      double g = oi->grad[0];
      for (size_t i = 0; i < xi->grad.size(); ++i) xi->grad[i] += g;
    });
  }
  return out;
}

Tensor mean(Tape* tape, const Tensor& x) {
  if (x.size() == 0) throw InvalidArgument("mean: empty tensor");
  double inv = 1.0 / static_cast<double>(x.size());
  double s = 0.0;
  for (int64_t i = 0; i < x.size(); ++i) s += x[i];
  Tensor out = Tensor::scalar(s * inv);
  check_finite(out, "mean");
  if (tracing(tape, {&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    tape->record(out, {x}, [xi, oi, inv]() {
      if (xi->grad.empty()) xi->grad.assign(xi->value.size(), 0.0);
      double g = oi->grad[0] * inv;
      for (size_t i = 0; i < xi->grad.size(); ++i) xi->grad[i] += g;
    });
  }
  return out;
}

Tensor reshape(Tape* tape, const Tensor& x, Shape new_shape) {
  if (numel(new_shape) != x.size())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(new_shape));
  Tensor out(new_shape, x.values());
  if (tracing(tape, {&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    tape->record(out, {x}, [xi, oi]() {
      if (xi->grad.empty()) xi->grad.assign(xi->value.size(), 0.0);
      for (size_t i = 0; i < oi->grad.size(); ++i) xi->grad[i] += oi->grad[i];
    });
  }
  return out;
}

Tensor broadcast(Tape* tape, const Tensor& x, const Shape& target) {
  int64_t n = numel(target);
  Tensor out(target);
  bool scalar_in = x.size() == 1;
  int64_t channels = 0, inner = 0, outer = 0;
  if (scalar_in) {
    double v = x.data()[0];
    std::fill(out.values().begin(), out.values().end(), v);
  } else if (x.shape().size() == 1 && target.size() >= 2 && x.size() == target[1]) {
    // [C] -> [N,C,spatial...]
    channels = target[1];
    outer = target[0];
    inner = n / (outer * channels);
    double* ov = out.data();
    for (int64_t b = 0; b < outer; ++b)
      for (int64_t c = 0; c < channels; ++c) {
        double v = x[c];
        double* row = ov + (b * channels + c) * inner;
        for (int64_t i = 0; i < inner; ++i) row[i] = v;
      }
  } else {
    throw ShapeError("broadcast: cannot expand " + shape_str(x.shape()) + " to " +
                     shape_str(target));
  }
  if (tracing(tape, {&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    bool sc = scalar_in;
    tape->record(out, {x}, [xi, oi, sc, channels, inner, outer]() {
      if (xi->grad.empty()) xi->grad.assign(xi->value.size(), 0.0);
      if (sc) {
        double s = 0.0;
        for (double g : oi->grad) s += g;
        xi->grad[0] += s;
      } else {
        for (int64_t b = 0; b < outer; ++b)
          for (int64_t c = 0; c < channels; ++c) {
            const double* row = oi->grad.data() + (b * channels + c) * inner;
            double s = 0.0;
            for (int64_t i = 0; i < inner; ++i) s += row[i];
            xi->grad[c] += s;
          }
      }
    });
  }
  return out;
}

Tensor concat_channels(Tape* tape, const std::vector<Tensor>& xs) {
  if (xs.empty()) throw InvalidArgument("concat_channels: no inputs");
  const Shape& s0 = xs[0].shape();
  if (s0.size() < 2) throw ShapeError("concat_channels: inputs need [N,C,...] layout");
  int64_t batch = s0[0];
  int64_t inner = 1;
  for (size_t d = 2; d < s0.size(); ++d) inner *= s0[d];
  int64_t total_c = 0;
  for (const Tensor& t : xs) {
    const Shape& s = t.shape();
    if (s.size() != s0.size() || s[0] != batch)
      throw ShapeError("concat_channels: incompatible shapes");
    for (size_t d = 2; d < s.size(); ++d)
      if (s[d] != s0[d]) throw ShapeError("concat_channels: spatial extents differ");
    total_c += s[1];
  }
  Shape out_shape = s0;
  out_shape[1] = total_c;
  Tensor out(out_shape);
  double* ov = out.data();
  for (int64_t b = 0; b < batch; ++b) {
    int64_t c_off = 0;
    for (const Tensor& t : xs) {
      int64_t c = t.shape()[1];
      const double* src = t.data() + b * c * inner;
      std::copy(src, src + c * inner, ov + (b * total_c + c_off) * inner);
      c_off += c;
    }
  }
  bool rec = tape != nullptr &&
             std::any_of(xs.begin(), xs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (rec) {
    out.set_requires_grad(true);
    std::vector<std::shared_ptr<TensorData>> parents;
    for (const Tensor& t : xs) parents.push_back(t.impl());
    auto oi = out.impl();
    tape->record(out, xs, [parents, oi, batch, inner, total_c]() {
      for (int64_t b = 0; b < batch; ++b) {
        int64_t c_off = 0;
        for (auto& p : parents) {
          int64_t c = p->shape[1];
          if (p->grad.empty()) p->grad.assign(p->value.size(), 0.0);
          const double* g = oi->grad.data() + (b * total_c + c_off) * inner;
          double* dst = p->grad.data() + b * c * inner;
          for (int64_t i = 0; i < c * inner; ++i) dst[i] += g[i];
          c_off += c;
        }
      }
    });
  }
  return out;
}

Tensor concat_flat(Tape* tape, const std::vector<Tensor>& xs) {
  if (xs.empty()) throw InvalidArgument("concat_flat: no inputs");
  int64_t n = 0;
  for (const Tensor& t : xs) n += t.size();
  Tensor out(Shape{n});
  int64_t off = 0;
  for (const Tensor& t : xs) {
    std::copy(t.data(), t.data() + t.size(), out.data() + off);
    off += t.size();
  }
  bool rec = tape != nullptr &&
             std::any_of(xs.begin(), xs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (rec) {
    out.set_requires_grad(true);
    std::vector<std::shared_ptr<TensorData>> parents;
    for (const Tensor& t : xs) parents.push_back(t.impl());
    auto oi = out.impl();
    tape->record(out, xs, [parents, oi]() {
      int64_t off = 0;
      for (auto& p : parents) {
        if (p->grad.empty()) p->grad.assign(p->value.size(), 0.0);
        for (size_t i = 0; i < p->value.size(); ++i) p->grad[i] += oi->grad[off + i];
        off += static_cast<int64_t>(p->value.size());
      }
    });
  }
  return out;
}

Tensor slice_flat(Tape* tape, const Tensor& x, int64_t lo, int64_t hi) {
  if (lo < 0 || hi > x.size() || lo >= hi)
    throw InvalidArgument("slice_flat: bad range [" + std::to_string(lo) + "," +
                          std::to_string(hi) + ") for size " + std::to_string(x.size()));
  Tensor out(Shape{hi - lo});
  std::copy(x.data() + lo, x.data() + hi, out.data());
  if (tracing(tape, {&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    tape->record(out, {x}, [xi, oi, lo]() {
      if (xi->grad.empty()) xi->grad.assign(xi->value.size(), 0.0);
      for (size_t i = 0; i < oi->grad.size(); ++i) xi->grad[lo + i] += oi->grad[i];
    });
  }
  return out;
}

Tensor spatial_dropout(Tape* tape, const Tensor& x, double rate, Rng& rng, bool active) {
  if (rate < 0.0 || rate >= 1.0)
    throw InvalidArgument("spatial_dropout: rate must be in [0,1), got " + std::to_string(rate));
  if (!active || rate == 0.0) {
    // Identity; still a distinct node so downstream mutation is safe.
    return scale(tape, x, 1.0);
  }
  const Shape& s = x.shape();
  if (s.size() < 2) throw ShapeError("spatial_dropout: input needs [N,C,...] layout");
  int64_t nc = s[0] * s[1];
  int64_t inner = x.size() / nc;
  std::vector<double> keep(nc);
  double inv_keep = 1.0 / (1.0 - rate);
  for (int64_t c = 0; c < nc; ++c) keep[c] = rng.uniform() < rate ? 0.0 : inv_keep;
  Tensor out(s);
  for (int64_t c = 0; c < nc; ++c) {
    const double* src = x.data() + c * inner;
    double* dst = out.data() + c * inner;
    for (int64_t i = 0; i < inner; ++i) dst[i] = src[i] * keep[c];
  }
  if (tracing(tape, {&x})) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    tape->record(out, {x}, [xi, oi, keep, inner, nc]() {
      if (xi->grad.empty()) xi->grad.assign(xi->value.size(), 0.0);
      for (int64_t c = 0; c < nc; ++c) {
        const double* g = oi->grad.data() + c * inner;
        double* dst = xi->grad.data() + c * inner;
        for (int64_t i = 0; i < inner; ++i) dst[i] += g[i] * keep[c];
      }
    });
  }
  return out;
}

}  // namespace pulaski::ops
