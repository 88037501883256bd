#pragma once

#include <vector>

#include "pulaski/linalg.hpp"
#include "pulaski/tensor.hpp"

namespace pulaski {

// Weighted point cloud sum_i w_i * delta_{x_i} on R^D.
struct DiscreteMeasure {
  Matrix points;                // N x D
  std::vector<double> weights;  // N, nonnegative, sum to 1

  int64_t size() const { return points.rows; }
  int64_t dim() const { return points.cols; }

  static DiscreteMeasure uniform(Matrix pts);
  void validate() const;
};

// Entropic transport solver settings. Cost is fixed to C(x,y) = 0.5*|x-y|^2.
struct SinkhornConfig {
  double epsilon = 1e-2;
  int max_iters = 500;
  double tol = 1e-6;
  double scaling = 0.5;  // epsilon annealing factor per stage, in (0,1)

  void validate() const;
  // Default regularization for a dataset: (0.05)^2 * squared diameter.
  static SinkhornConfig for_diameter2(double diam2);
};

struct SinkhornPotentials {
  std::vector<double> f, g;
  int iterations = 0;
};

// Largest squared pairwise distance within the union of supports.
double squared_diameter(const DiscreteMeasure& a, const DiscreteMeasure& b);

// C_ij = 0.5 * |x_i - y_j|^2
Matrix cost_matrix(const DiscreteMeasure& a, const DiscreteMeasure& b);

// Log-domain alternating updates with epsilon scaling from max(C) down to
// cfg.epsilon. Converged when the sup-norm change of both potentials is
// below cfg.tol at the final stage.
SinkhornPotentials sinkhorn_potentials(const DiscreteMeasure& a, const DiscreteMeasure& b,
                                       const SinkhornConfig& cfg);

// Symmetric fixed point of OT_eps(a,a) via the damped update f <- (f + T f)/2.
SinkhornPotentials symmetric_potential(const DiscreteMeasure& a, const SinkhornConfig& cfg);

// <pi, C> + eps * KL(pi | a x b) at the converged plan.
double ot_eps(const DiscreteMeasure& a, const DiscreteMeasure& b, const SinkhornConfig& cfg);

// F_eps(a) = -1/2 OT_eps(a, a)
double sinkhorn_negentropy(const DiscreteMeasure& a, const SinkhornConfig& cfg);

double hausdorff_divergence(const DiscreteMeasure& a, const DiscreteMeasure& b,
                            const SinkhornConfig& cfg);

// Debiased divergence OT_eps(a,b) - 1/2 OT_eps(a,a) - 1/2 OT_eps(b,b).
double sinkhorn_divergence(const DiscreteMeasure& a, const DiscreteMeasure& b,
                           const SinkhornConfig& cfg);

// Value plus derivative with respect to atom positions. Converged potentials
// enter as constants wherever they are stationary (envelope theorem); the
// Hausdorff cross-extension additionally differentiates the symmetric fixed
// point implicitly, so these are total derivatives suitable for finite
// difference checks.
struct DivergenceGrad {
  double value = 0.0;
  Matrix grad_a;  // d value / d a.points (N x D), empty unless requested
  Matrix grad_b;  // d value / d b.points (M x D), empty unless requested
};

DivergenceGrad ot_eps_grad(const DiscreteMeasure& a, const DiscreteMeasure& b,
                           const SinkhornConfig& cfg, bool need_a, bool need_b);
DivergenceGrad sinkhorn_divergence_grad(const DiscreteMeasure& a, const DiscreteMeasure& b,
                                        const SinkhornConfig& cfg, bool need_a, bool need_b);
DivergenceGrad hausdorff_divergence_grad(const DiscreteMeasure& a, const DiscreteMeasure& b,
                                         const SinkhornConfig& cfg, bool need_a, bool need_b);

enum class OtLossKind { kSinkhorn, kHausdorff };

// Tape bridge: measure alpha is built from `a_points` rows (each a 1-D tensor
// of equal length) with the given weights; beta is a constant. The backward
// pass writes the analytic position gradients into the row tensors.
Tensor ot_divergence_node(Tape* tape, OtLossKind kind, const std::vector<Tensor>& a_points,
                          const std::vector<double>& a_weights, const DiscreteMeasure& b,
                          const SinkhornConfig& cfg);

}  // namespace pulaski
