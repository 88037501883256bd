#include "pulaski/ot.hpp"

#include <algorithm>
#include <cmath>

namespace pulaski {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log sum_i exp(v_i), max-shifted.
double log_sum_exp(const std::vector<double>& v) {
  double mx = kNegInf;
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

std::vector<double> log_weights(const DiscreteMeasure& m) {
  std::vector<double> lw(m.weights.size());
  for (size_t i = 0; i < lw.size(); ++i)
    lw[i] = m.weights[i] > 0.0 ? std::log(m.weights[i]) : kNegInf;
  return lw;
}

// Epsilon annealing schedule: max cost down to target by `scaling` per stage.
std::vector<double> epsilon_schedule(double eps_max, double target, double scaling) {
  std::vector<double> sched;
  double e = eps_max;
  while (e > target) {
    sched.push_back(e);
    e *= scaling;
  }
  sched.push_back(target);
  return sched;
}

double max_entry(const Matrix& c) {
  double mx = 0.0;
  for (double v : c.a) mx = std::max(mx, v);
  return mx;
}

// One half-update: out_i = -eps * log sum_j exp(lw_j + (pot_j - C(i,j))/eps).
// `rows` selects whether C is indexed (i,j) or (j,i).
void softmin_update(const Matrix& c, bool transpose, const std::vector<double>& lw,
                    const std::vector<double>& pot, double eps, std::vector<double>& out) {
  int64_t n = transpose ? c.cols : c.rows;
  int64_t m = transpose ? c.rows : c.cols;
  std::vector<double> buf(m);
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < m; ++j) {
      double cij = transpose ? c(j, i) : c(i, j);
      buf[j] = lw[j] + (pot[j] - cij) / eps;
    }
    out[i] = -eps * log_sum_exp(buf);
  }
}

}  // namespace

DiscreteMeasure DiscreteMeasure::uniform(Matrix pts) {
  DiscreteMeasure m;
  int64_t n = pts.rows;
  m.points = std::move(pts);
  m.weights.assign(n, n > 0 ? 1.0 / static_cast<double>(n) : 0.0);
  m.validate();
  return m;
}

void DiscreteMeasure::validate() const {
  if (points.rows < 1) throw InvalidArgument("measure: needs at least one atom");
  if (static_cast<int64_t>(weights.size()) != points.rows)
    throw InvalidArgument("measure: weight count does not match atom count");
  double s = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw InvalidArgument("measure: weights must be nonnegative");
    s += w;
  }
  if (std::abs(s - 1.0) > 1e-9)
    throw InvalidArgument("measure: weights sum to " + std::to_string(s) + ", expected 1");
  for (double v : points.a)
    if (!std::isfinite(v)) throw InvalidArgument("measure: non-finite point coordinate");
}

void SinkhornConfig::validate() const {
  if (!(epsilon > 0.0)) throw InvalidArgument("sinkhorn: epsilon must be positive");
  if (max_iters < 1) throw InvalidArgument("sinkhorn: max_iters must be positive");
  if (!(tol > 0.0)) throw InvalidArgument("sinkhorn: tol must be positive");
  if (!(scaling > 0.0 && scaling < 1.0))
    throw InvalidArgument("sinkhorn: scaling must lie in (0,1)");
}

SinkhornConfig SinkhornConfig::for_diameter2(double diam2) {
  SinkhornConfig cfg;
  cfg.epsilon = std::max(0.05 * 0.05 * diam2, 1e-8);
  return cfg;
}

double squared_diameter(const DiscreteMeasure& a, const DiscreteMeasure& b) {
  // Diameter of the union; the cross matrix alone can miss within-support pairs,
  // so take the max over all three blocks.
  auto block_max = [](const DiscreteMeasure& u, const DiscreteMeasure& v) {
    double mx = 0.0;
    for (int64_t i = 0; i < u.size(); ++i)
      for (int64_t j = 0; j < v.size(); ++j) {
        double d2 = 0.0;
        for (int64_t k = 0; k < u.dim(); ++k) {
          double d = u.points(i, k) - v.points(j, k);
          d2 += d * d;
        }
        mx = std::max(mx, d2);
      }
    return mx;
  };
  return std::max({block_max(a, a), block_max(b, b), block_max(a, b)});
}

Matrix cost_matrix(const DiscreteMeasure& a, const DiscreteMeasure& b) {
  if (a.dim() != b.dim())
    throw InvalidArgument("cost_matrix: point dimensions differ, " +
                          std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  Matrix c(a.size(), b.size());
  for (int64_t i = 0; i < a.size(); ++i)
    for (int64_t j = 0; j < b.size(); ++j) {
      double d2 = 0.0;
      for (int64_t k = 0; k < a.dim(); ++k) {
        double d = a.points(i, k) - b.points(j, k);
        d2 += d * d;
      }
      c(i, j) = 0.5 * d2;
    }
  return c;
}

SinkhornPotentials sinkhorn_potentials(const DiscreteMeasure& a, const DiscreteMeasure& b,
                                       const SinkhornConfig& cfg) {
  cfg.validate();
  a.validate();
  b.validate();
  Matrix c = cost_matrix(a, b);
  std::vector<double> la = log_weights(a), lb = log_weights(b);
  int64_t n = a.size(), m = b.size();

  SinkhornPotentials p;
  p.f.assign(n, 0.0);
  p.g.assign(m, 0.0);
  std::vector<double> fn(n), gn(m);

  double residual = 0.0;
  for (double eps : epsilon_schedule(max_entry(c), cfg.epsilon, cfg.scaling)) {
    while (true) {
      softmin_update(c, false, lb, p.g, eps, fn);
      softmin_update(c, true, la, fn, eps, gn);
      residual = 0.0;
      for (int64_t i = 0; i < n; ++i) residual = std::max(residual, std::abs(fn[i] - p.f[i]));
      for (int64_t j = 0; j < m; ++j) residual = std::max(residual, std::abs(gn[j] - p.g[j]));
      p.f.swap(fn);
      p.g.swap(gn);
      ++p.iterations;
      if (residual < cfg.tol) break;
      if (p.iterations >= cfg.max_iters)
        throw ConvergenceError(
            "sinkhorn: no convergence after " + std::to_string(p.iterations) +
                " iterations, residual " + std::to_string(residual),
            residual);
    }
  }
  return p;
}

SinkhornPotentials symmetric_potential(const DiscreteMeasure& a, const SinkhornConfig& cfg) {
  cfg.validate();
  a.validate();
  Matrix c = cost_matrix(a, a);
  std::vector<double> la = log_weights(a);
  int64_t n = a.size();

  SinkhornPotentials p;
  p.f.assign(n, 0.0);
  std::vector<double> tf(n);
  double residual = 0.0;
  for (double eps : epsilon_schedule(max_entry(c), cfg.epsilon, cfg.scaling)) {
    while (true) {
      softmin_update(c, false, la, p.f, eps, tf);
      residual = 0.0;
      for (int64_t i = 0; i < n; ++i) {
        double next = 0.5 * (p.f[i] + tf[i]);
        residual = std::max(residual, std::abs(next - p.f[i]));
        p.f[i] = next;
      }
      ++p.iterations;
      if (residual < cfg.tol) break;
      if (p.iterations >= cfg.max_iters)
        throw ConvergenceError(
            "sinkhorn(symmetric): no convergence after " + std::to_string(p.iterations) +
                " iterations, residual " + std::to_string(residual),
            residual);
    }
  }
  p.g = p.f;
  return p;
}

namespace {

// Plan entries pi_ij = a_i b_j exp((f_i + g_j - C_ij)/eps).
Matrix transport_plan(const DiscreteMeasure& a, const DiscreteMeasure& b, const Matrix& c,
                      const std::vector<double>& f, const std::vector<double>& g, double eps) {
  Matrix pi(a.size(), b.size());
  for (int64_t i = 0; i < a.size(); ++i)
    for (int64_t j = 0; j < b.size(); ++j) {
      double lw = (a.weights[i] > 0 && b.weights[j] > 0)
                      ? std::log(a.weights[i]) + std::log(b.weights[j]) +
                            (f[i] + g[j] - c(i, j)) / eps
                      : kNegInf;
      pi(i, j) = std::exp(lw);
    }
  return pi;
}

// <pi,C> + eps*KL(pi | a x b) with the generalized KL for positive measures.
double primal_value(const DiscreteMeasure& a, const DiscreteMeasure& b, const Matrix& c,
                    const Matrix& pi, const std::vector<double>& f,
                    const std::vector<double>& g, double eps) {
  double cost = 0.0, kl = 0.0;
  for (int64_t i = 0; i < a.size(); ++i)
    for (int64_t j = 0; j < b.size(); ++j) {
      double p = pi(i, j);
      cost += p * c(i, j);
      double ab = a.weights[i] * b.weights[j];
      if (p > 0.0) kl += p * ((f[i] + g[j] - c(i, j)) / eps) - p + ab;
      else kl += ab;
    }
  return cost + eps * kl;
}

}  // namespace

double ot_eps(const DiscreteMeasure& a, const DiscreteMeasure& b, const SinkhornConfig& cfg) {
  SinkhornPotentials p = sinkhorn_potentials(a, b, cfg);
  Matrix c = cost_matrix(a, b);
  Matrix pi = transport_plan(a, b, c, p.f, p.g, cfg.epsilon);
  return primal_value(a, b, c, pi, p.f, p.g, cfg.epsilon);
}

namespace {

double symmetric_ot_value(const DiscreteMeasure& a, const SinkhornConfig& cfg,
                          SinkhornPotentials* out_pot = nullptr) {
  SinkhornPotentials p = symmetric_potential(a, cfg);
  Matrix c = cost_matrix(a, a);
  Matrix pi = transport_plan(a, a, c, p.f, p.f, cfg.epsilon);
  double v = primal_value(a, a, c, pi, p.f, p.f, cfg.epsilon);
  if (out_pot) *out_pot = std::move(p);
  return v;
}

}  // namespace

double sinkhorn_negentropy(const DiscreteMeasure& a, const SinkhornConfig& cfg) {
  return -0.5 * symmetric_ot_value(a, cfg);
}

double sinkhorn_divergence(const DiscreteMeasure& a, const DiscreteMeasure& b,
                           const SinkhornConfig& cfg) {
  double cross = ot_eps(a, b, cfg);
  double self_a = symmetric_ot_value(a, cfg);
  double self_b = symmetric_ot_value(b, cfg);
  return cross - 0.5 * self_a - 0.5 * self_b;
}

namespace {

// Extension of a symmetric potential onto other points:
// ext(u) = -eps log sum_j exp(log w_j + (f_j - C(u, x_j))/eps).
// Also returns the extension plan rho_ij = w_of_target_i * softmax_j(...).
void extend_potential(const DiscreteMeasure& src, const std::vector<double>& f_src,
                      const DiscreteMeasure& onto, double eps, std::vector<double>& ext,
                      Matrix* rho) {
  std::vector<double> lw = log_weights(src);
  ext.assign(onto.size(), 0.0);
  if (rho) *rho = Matrix(onto.size(), src.size());
  std::vector<double> buf(src.size());
  for (int64_t i = 0; i < onto.size(); ++i) {
    for (int64_t j = 0; j < src.size(); ++j) {
      double d2 = 0.0;
      for (int64_t k = 0; k < src.dim(); ++k) {
        double d = onto.points(i, k) - src.points(j, k);
        d2 += d * d;
      }
      buf[j] = lw[j] + (f_src[j] - 0.5 * d2) / eps;
    }
    double lse = log_sum_exp(buf);
    ext[i] = -eps * lse;
    if (rho)
      for (int64_t j = 0; j < src.size(); ++j)
        (*rho)(i, j) = onto.weights[i] * std::exp(buf[j] - lse);
  }
}

}  // namespace

double hausdorff_divergence(const DiscreteMeasure& a, const DiscreteMeasure& b,
                            const SinkhornConfig& cfg) {
  if (a.dim() != b.dim()) throw InvalidArgument("hausdorff_divergence: dimension mismatch");
  SinkhornPotentials fa = symmetric_potential(a, cfg);
  SinkhornPotentials fb = symmetric_potential(b, cfg);
  std::vector<double> fb_at_a, fa_at_b;
  extend_potential(b, fb.f, a, cfg.epsilon, fb_at_a, nullptr);
  extend_potential(a, fa.f, b, cfg.epsilon, fa_at_b, nullptr);
  double lhs = 0.0, rhs = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) lhs += a.weights[i] * (fb_at_a[i] - fa.f[i]);
  for (int64_t j = 0; j < b.size(); ++j) rhs += b.weights[j] * (fa_at_b[j] - fb.f[j]);
  return 0.5 * (lhs + rhs);
}

// ---- analytic position gradients -------------------------------------------

namespace {

// grad_i += coef * sum_j plan_ij (x_i - y_j), accumulated into `grad` (N x D).
void add_plan_gradient(const Matrix& plan, const DiscreteMeasure& x_side,
                       const DiscreteMeasure& y_side, double coef, Matrix& grad) {
  for (int64_t i = 0; i < plan.rows; ++i)
    for (int64_t j = 0; j < plan.cols; ++j) {
      double p = coef * plan(i, j);
      if (p == 0.0) continue;
      for (int64_t k = 0; k < x_side.dim(); ++k)
        grad(i, k) += p * (x_side.points(i, k) - y_side.points(j, k));
    }
}

// Same, but accumulating into the second side: grad_j += coef * plan_ij (y_j - x_i).
void add_plan_gradient_cols(const Matrix& plan, const DiscreteMeasure& x_side,
                            const DiscreteMeasure& y_side, double coef, Matrix& grad) {
  for (int64_t i = 0; i < plan.rows; ++i)
    for (int64_t j = 0; j < plan.cols; ++j) {
      double p = coef * plan(i, j);
      if (p == 0.0) continue;
      for (int64_t k = 0; k < y_side.dim(); ++k)
        grad(j, k) += p * (y_side.points(j, k) - x_side.points(i, k));
    }
}

}  // namespace

DivergenceGrad ot_eps_grad(const DiscreteMeasure& a, const DiscreteMeasure& b,
                           const SinkhornConfig& cfg, bool need_a, bool need_b) {
  SinkhornPotentials p = sinkhorn_potentials(a, b, cfg);
  Matrix c = cost_matrix(a, b);
  Matrix pi = transport_plan(a, b, c, p.f, p.g, cfg.epsilon);
  DivergenceGrad out;
  out.value = primal_value(a, b, c, pi, p.f, p.g, cfg.epsilon);
  if (need_a) {
    out.grad_a = Matrix(a.size(), a.dim());
    add_plan_gradient(pi, a, b, 1.0, out.grad_a);
  }
  if (need_b) {
    out.grad_b = Matrix(b.size(), b.dim());
    add_plan_gradient_cols(pi, a, b, 1.0, out.grad_b);
  }
  return out;
}

DivergenceGrad sinkhorn_divergence_grad(const DiscreteMeasure& a, const DiscreteMeasure& b,
                                        const SinkhornConfig& cfg, bool need_a, bool need_b) {
  DivergenceGrad cross = ot_eps_grad(a, b, cfg, need_a, need_b);

  DivergenceGrad out;
  out.value = cross.value;
  out.grad_a = std::move(cross.grad_a);
  out.grad_b = std::move(cross.grad_b);

  // Debiasing terms: -1/2 OT(a,a) and -1/2 OT(b,b). Their position gradient is
  // -sum_j pi_ij (x_i - x_j): the symmetric plan enters both marginals.
  SinkhornPotentials pa;
  double self_a = symmetric_ot_value(a, cfg, &pa);
  out.value -= 0.5 * self_a;
  if (need_a) {
    Matrix ca = cost_matrix(a, a);
    Matrix pia = transport_plan(a, a, ca, pa.f, pa.f, cfg.epsilon);
    add_plan_gradient(pia, a, a, -1.0, out.grad_a);
  }

  SinkhornPotentials pb;
  double self_b = symmetric_ot_value(b, cfg, &pb);
  out.value -= 0.5 * self_b;
  if (need_b) {
    Matrix cb = cost_matrix(b, b);
    Matrix pib = transport_plan(b, b, cb, pb.f, pb.f, cfg.epsilon);
    add_plan_gradient(pib, b, b, -1.0, out.grad_b);
  }
  return out;
}

namespace {

// Total derivative of the Hausdorff bracket with respect to the positions of
// side `a`. The cross-extension <b, f_a@b> depends on the symmetric potential
// f_a, whose sensitivity is resolved through the fixed point f = T(f):
// df/dx = (I + W)^{-1} dT/dx with W the row-normalized symmetric plan.
void hausdorff_side_gradient(const DiscreteMeasure& a, const DiscreteMeasure& b,
                             const SinkhornConfig& cfg, const SinkhornPotentials& fa,
                             const SinkhornPotentials& fb, Matrix& grad) {
  int64_t n = a.size(), d = a.dim();
  double eps = cfg.epsilon;
  grad = Matrix(n, d);

  // 1/2 <a, f_b@a>: only the extension cost depends on x.
  std::vector<double> fb_at_a;
  Matrix rho_ba;
  extend_potential(b, fb.f, a, eps, fb_at_a, &rho_ba);
  add_plan_gradient(rho_ba, a, b, 0.5, grad);

  // -1/2 <a, f_a> = -1/2 * (1/2 OT(a,a)): envelope gradient via the plan.
  Matrix ca = cost_matrix(a, a);
  Matrix pia = transport_plan(a, a, ca, fa.f, fa.f, eps);
  add_plan_gradient(pia, a, a, -0.5, grad);

  // 1/2 <b, f_a@b>: explicit extension part ...
  std::vector<double> fa_at_b;
  Matrix rho_ab;  // rows: b atoms, cols: a atoms
  extend_potential(a, fa.f, b, eps, fa_at_b, &rho_ab);
  for (int64_t j = 0; j < b.size(); ++j)
    for (int64_t i = 0; i < n; ++i) {
      double p = 0.5 * rho_ab(j, i);
      if (p == 0.0) continue;
      for (int64_t k = 0; k < d; ++k)
        grad(i, k) += p * (a.points(i, k) - b.points(j, k));
    }

  // ... plus the implicit part through f_a. Column masses of the extension
  // plan form the adjoint right-hand side; d ext / d f = -W_ext.
  std::vector<double> col_mass(n, 0.0);
  for (int64_t j = 0; j < b.size(); ++j)
    for (int64_t i = 0; i < n; ++i) col_mass[i] += rho_ab(j, i);

  // W_ij = pi^aa_ij / a_i; solve (I + W)^T v = col_mass.
  Matrix sys(n, n);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < n; ++j) {
      double w = a.weights[i] > 0 ? pia(i, j) / a.weights[i] : 0.0;
      sys(j, i) = w + (i == j ? 1.0 : 0.0);
    }
  std::vector<double> v = solve_linear(sys, col_mass);

  // dT_k/dx_m assembled against v: contribution -1/2 * v^T dT/dx.
  for (int64_t m = 0; m < n; ++m) {
    for (int64_t k_atom = 0; k_atom < n; ++k_atom) {
      double w_mk = a.weights[m] > 0 ? pia(m, k_atom) / a.weights[m] : 0.0;
      double w_km = a.weights[k_atom] > 0 ? pia(k_atom, m) / a.weights[k_atom] : 0.0;
      // row terms (k = m): v_m * w_mk * (x_m - x_k); col terms: v_k * w_km * (x_m - x_k)
      double coef = v[m] * w_mk + v[k_atom] * w_km;
      if (coef == 0.0) continue;
      for (int64_t k = 0; k < d; ++k)
        grad(m, k) += -0.5 * coef * (a.points(m, k) - a.points(k_atom, k));
    }
  }
}

}  // namespace

DivergenceGrad hausdorff_divergence_grad(const DiscreteMeasure& a, const DiscreteMeasure& b,
                                         const SinkhornConfig& cfg, bool need_a, bool need_b) {
  SinkhornPotentials fa = symmetric_potential(a, cfg);
  SinkhornPotentials fb = symmetric_potential(b, cfg);

  std::vector<double> fb_at_a, fa_at_b;
  extend_potential(b, fb.f, a, cfg.epsilon, fb_at_a, nullptr);
  extend_potential(a, fa.f, b, cfg.epsilon, fa_at_b, nullptr);
  DivergenceGrad out;
  double lhs = 0.0, rhs = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) lhs += a.weights[i] * (fb_at_a[i] - fa.f[i]);
  for (int64_t j = 0; j < b.size(); ++j) rhs += b.weights[j] * (fa_at_b[j] - fb.f[j]);
  out.value = 0.5 * (lhs + rhs);

  if (need_a) hausdorff_side_gradient(a, b, cfg, fa, fb, out.grad_a);
  if (need_b) hausdorff_side_gradient(b, a, cfg, fb, fa, out.grad_b);
  return out;
}

}  // namespace pulaski
