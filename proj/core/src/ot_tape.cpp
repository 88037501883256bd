#include "pulaski/ot.hpp"

namespace pulaski {

// Bridges the transport solver into the autodiff tape. The solver runs outside
// the tape; backward scatters the analytic position gradients (computed from
// the converged plans) into the atom tensors.
Tensor ot_divergence_node(Tape* tape, OtLossKind kind, const std::vector<Tensor>& a_points,
                          const std::vector<double>& a_weights, const DiscreteMeasure& b,
                          const SinkhornConfig& cfg) {
  if (a_points.empty()) throw InvalidArgument("ot node: no atoms on side a");
  int64_t dim = a_points[0].size();
  for (const Tensor& t : a_points)
    if (t.size() != dim)
      throw ShapeError("ot node: atom dimensions differ within the measure");
  if (dim != b.dim())
    throw ShapeError("ot node: atom dimension " + std::to_string(dim) +
                     " does not match target measure dimension " + std::to_string(b.dim()));

  DiscreteMeasure a;
  a.points = Matrix(static_cast<int64_t>(a_points.size()), dim);
  for (size_t i = 0; i < a_points.size(); ++i)
    for (int64_t k = 0; k < dim; ++k) a.points(static_cast<int64_t>(i), k) = a_points[i][k];
  a.weights = a_weights;
  a.validate();

  bool rec = tape != nullptr &&
             std::any_of(a_points.begin(), a_points.end(),
                         [](const Tensor& t) { return t.requires_grad(); });

  DivergenceGrad res = kind == OtLossKind::kSinkhorn
                           ? sinkhorn_divergence_grad(a, b, cfg, rec, false)
                           : hausdorff_divergence_grad(a, b, cfg, rec, false);

  Tensor out = Tensor::scalar(res.value);
  check_finite(out, "ot_divergence");
  if (rec) {
    out.set_requires_grad(true);
    auto oi = out.impl();
    std::vector<std::shared_ptr<TensorData>> parents;
    for (const Tensor& t : a_points) parents.push_back(t.impl());
    Matrix grad = std::move(res.grad_a);
    tape->record(out, a_points, [parents, oi, grad, dim]() {
      double g = oi->grad[0];
      for (size_t i = 0; i < parents.size(); ++i) {
        auto& p = parents[i];
        if (p->grad.empty()) p->grad.assign(p->value.size(), 0.0);
        for (int64_t k = 0; k < dim; ++k)
          p->grad[k] += g * grad(static_cast<int64_t>(i), k);
      }
    });
  }
  return out;
}

}  // namespace pulaski
