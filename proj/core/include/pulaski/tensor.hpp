#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "pulaski/common.hpp"
#include "pulaski/rng.hpp"

namespace pulaski {

// Dense 64-bit real tensor, row-major. A Tensor is a shared handle to its
// storage so a Tape can hold the graph alive and gradients can accumulate
// into leaves across forward passes.
struct TensorData {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until touched; same length as value after
  bool requires_grad = false;
};

class Tensor {
 public:
  Tensor() : impl_(nullptr) {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(Shape{}, {v}); }
  static Tensor leaf(Shape shape, double fill = 0.0) {
    Tensor t(std::move(shape), fill);
    t.impl_->requires_grad = true;
    return t;
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int64_t size() const { return static_cast<int64_t>(impl_->value.size()); }
  int64_t extent(size_t axis) const { return impl_->shape[axis]; }

  double* data() { return impl_->value.data(); }
  const double* data() const { return impl_->value.data(); }
  std::vector<double>& values() { return impl_->value; }
  const std::vector<double>& values() const { return impl_->value; }

  double operator[](int64_t i) const { return impl_->value[i]; }
  double& operator[](int64_t i) { return impl_->value[i]; }

  // Value of a scalar tensor.
  double item() const;

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool r) { impl_->requires_grad = r; }

  // Gradient accumulator; allocated zero-filled on first access.
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  void zero_grad();

  Tensor clone() const;

  std::shared_ptr<TensorData> impl() const { return impl_; }

 private:
  std::shared_ptr<TensorData> impl_;
};

// Define-by-run tape: primitives append nodes in application order, backward
// walks the record once in reverse. Rebuilt every forward pass.
class Tape {
 public:
  struct Node {
    std::shared_ptr<TensorData> out;
    std::vector<std::shared_ptr<TensorData>> parents;
    std::function<void()> backward;
  };

  void record(const Tensor& out, std::vector<Tensor> parents,
              std::function<void()> backward);

  // Seeds d(loss)/d(loss) = 1 and propagates to every reachable node.
  // loss must be a scalar recorded on this tape.
  void backward(const Tensor& loss);

  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  std::vector<Node> nodes_;
};

// True when a primitive applied to these inputs must be recorded.
inline bool tracing(const Tape* tape, std::initializer_list<const Tensor*> ins) {
  if (!tape) return false;
  for (const Tensor* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

void check_finite(const Tensor& t, const char* op);

// ---- Primitives -----------------------------------------------------------
// All primitives: stride-1 same-padding convolutions with odd kernels,
// factor-2 pooling/up-convolution, elementwise maps, reductions. Inputs with
// requires_grad set are recorded on `tape` (pass nullptr for pure evaluation).
namespace ops {

// x: [N,C,spatial...] (2 or 3 spatial dims), kernel: [CO,CI,k,...], odd k,
// bias: [CO] or undefined.
Tensor conv(Tape* tape, const Tensor& x, const Tensor& kernel, const Tensor& bias);

// Factor-2 up-convolution; kernel: [CI,CO,2,...]; output spatial = 2x input.
Tensor transposed_conv(Tape* tape, const Tensor& x, const Tensor& kernel, const Tensor& bias);

// Factor-2 mean pooling over every spatial axis; extents must be even.
Tensor avg_pool(Tape* tape, const Tensor& x);

// [N,C,spatial...] -> [N,C], mean over spatial positions.
Tensor global_avg_pool(Tape* tape, const Tensor& x);

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b);  // [n,k]x[k,m]
// x: [n,in], w: [out,in], b: [out] or undefined -> [n,out]
Tensor linear(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& b);
Tensor transpose2d(Tape* tape, const Tensor& x);  // [n,m] -> [m,n]

Tensor relu(Tape* tape, const Tensor& x);
Tensor sigmoid(Tape* tape, const Tensor& x);
Tensor exp(Tape* tape, const Tensor& x);
Tensor log(Tape* tape, const Tensor& x);
Tensor sqrt(Tape* tape, const Tensor& x);
Tensor softplus(Tape* tape, const Tensor& x);
Tensor pow_scalar(Tape* tape, const Tensor& x, double p);  // x >= 0
Tensor clamp(Tape* tape, const Tensor& x, double lo, double hi);

// Numerically stabilized softmax over the channel axis of [N,C,spatial...].
Tensor softmax_channels(Tape* tape, const Tensor& x);

// Per-sample, per-channel spatial normalization: (x - mean) / sqrt(var + eps)
// over each (n, c) plane. No learned affine; the following convolution
// subsumes it. Keeps deep feature magnitudes bounded independently of batch
// composition.
Tensor instance_norm(Tape* tape, const Tensor& x, double eps = 1e-5);

Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape* tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape* tape, const Tensor& x, double c);
Tensor add_scalar(Tape* tape, const Tensor& x, double c);

Tensor sum(Tape* tape, const Tensor& x);   // -> scalar
Tensor mean(Tape* tape, const Tensor& x);  // -> scalar

Tensor reshape(Tape* tape, const Tensor& x, Shape new_shape);

// Broadcast x to `target`: x scalar, or x [C] against [N,C,spatial...].
Tensor broadcast(Tape* tape, const Tensor& x, const Shape& target);

Tensor concat_channels(Tape* tape, const std::vector<Tensor>& xs);  // axis 1
Tensor concat_flat(Tape* tape, const std::vector<Tensor>& xs);      // -> 1-D
Tensor slice_flat(Tape* tape, const Tensor& x, int64_t lo, int64_t hi);

// Zeroes whole channels with probability `rate`, scales survivors by
// 1/(1-rate). Identity when !active. 0 <= rate < 1.
Tensor spatial_dropout(Tape* tape, const Tensor& x, double rate, Rng& rng, bool active);

}  // namespace ops

// ---- Optimizer -------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Per-parameter first/second moments; shapes follow the parameter list.
class AdamState {
 public:
  AdamState(const std::vector<Tensor>& params, AdamConfig cfg = {});

  // Standard bias-corrected update from the parameters' current grads.
  // Grads are left untouched.
  void step(std::vector<Tensor>& params);

  int64_t step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  int64_t step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// ---- Gradient checking ------------------------------------------------------

// Max over entries of |analytic - central difference| / max(1, |cd|).
// f must be deterministic; it is evaluated on a fresh tape per probe.
double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                  const Tensor& x, double h);

}  // namespace pulaski
