#include "pulaski/tensor.hpp"

#include <cmath>
#include <unordered_set>

namespace pulaski {

Tensor::Tensor(Shape shape, double fill) {
  impl_ = std::make_shared<TensorData>();
  int64_t n = numel(shape);
  if (n < 0) throw ShapeError("tensor: negative extent in " + shape_str(shape));
  impl_->shape = std::move(shape);
  impl_->value.assign(static_cast<size_t>(n), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) {
  impl_ = std::make_shared<TensorData>();
  if (numel(shape) != static_cast<int64_t>(data.size()))
    throw ShapeError("tensor: data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  impl_->shape = std::move(shape);
  impl_->value = std::move(data);
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item: tensor is not scalar, shape " + shape_str(shape()));
  return impl_->value[0];
}

std::vector<double>& Tensor::grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->value.size(), 0.0);
  return impl_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->value.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  Tensor t(impl_->shape, impl_->value);
  t.impl_->requires_grad = impl_->requires_grad;
  return t;
}

void Tape::record(const Tensor& out, std::vector<Tensor> parents,
                  std::function<void()> backward) {
  Node node;
  node.out = out.impl();
  node.parents.reserve(parents.size());
  for (const Tensor& p : parents) node.parents.push_back(p.impl());
  node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw InvalidArgument("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  TensorData* target = loss.impl().get();
  bool found = false;
  for (const Node& n : nodes_)
    if (n.out.get() == target) found = true;
  if (!found) throw InvalidArgument("backward: loss is not recorded on this tape");

  // Reachability from the loss, walking the record backwards.
  std::unordered_set<TensorData*> live;
  live.insert(target);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!live.count(it->out.get())) continue;
    for (auto& p : it->parents) live.insert(p.get());
  }

  loss.impl()->grad.assign(1, 1.0);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!live.count(it->out.get())) continue;
    if (it->out->grad.empty()) continue;  // no signal reached this node
    it->backward();
  }
}

void check_finite(const Tensor& t, const char* op) {
  for (double v : t.values())
    if (!std::isfinite(v))
      throw NumericError(std::string("numeric overflow: non-finite output of ") + op);
}

AdamState::AdamState(const std::vector<Tensor>& params, AdamConfig cfg) : cfg_(cfg) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const Tensor& p : params) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void AdamState::step(std::vector<Tensor>& params) {
  if (params.size() != m_.size())
    throw InvalidArgument("adam: parameter count changed");
  ++step_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    if (!p.has_grad())
      throw std::runtime_error("adam: missing grad for parameter " + std::to_string(i));
    const std::vector<double>& g = p.grad();
    std::vector<double>& m = m_[i];
    std::vector<double>& v = v_[i];
    if (g.size() != m.size())
      throw ShapeError("adam: grad/moment shape mismatch for parameter " + std::to_string(i));
    double* pv = p.data();
    for (size_t j = 0; j < m.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      double mhat = m[j] / bc1;
      double vhat = v[j] / bc2;
      pv[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                  const Tensor& x, double h) {
  if (h <= 0.0) throw InvalidArgument("grad_check: step must be positive");

  Tensor probe = x.clone();
  probe.set_requires_grad(true);
  {
    Tape tape;
    Tensor out = f(tape, probe);
    if (out.size() != 1) throw InvalidArgument("grad_check: f must return a scalar");
    tape.backward(out);
  }
  const std::vector<double>& analytic = probe.grad();

  double worst = 0.0;
  Tensor pt = x.clone();
  for (int64_t i = 0; i < x.size(); ++i) {
    double saved = pt[i];
    pt[i] = saved + h;
    Tape t1;
    double up = f(t1, pt).item();
    pt[i] = saved - h;
    Tape t2;
    double dn = f(t2, pt).item();
    pt[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(dn))
      throw NumericError("grad_check: f non-finite at probe point");
    double cd = (up - dn) / (2.0 * h);
    double err = std::abs(analytic[i] - cd) / std::max(1.0, std::abs(cd));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace pulaski
