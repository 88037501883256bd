#include "pulaski/gaussian.hpp"

#include <algorithm>
#include <cmath>

#include "pulaski/common.hpp"

namespace pulaski {

void DiagonalGaussian::validate() const {
  if (mu.size() != sigma.size())
    throw InvalidArgument("gaussian: mu and sigma lengths differ");
  for (double s : sigma)
    if (!(s > 0.0) || !std::isfinite(s))
      throw InvalidArgument("gaussian: sigma entries must be positive and finite");
  for (double m : mu)
    if (!std::isfinite(m)) throw InvalidArgument("gaussian: non-finite mean");
}

double kl_diag(const DiagonalGaussian& q, const DiagonalGaussian& p) {
  if (q.dim() != p.dim())
    throw InvalidArgument("kl_diag: dimension mismatch, " + std::to_string(q.dim()) + " vs " +
                          std::to_string(p.dim()));
  q.validate();
  p.validate();
  double kl = 0.0;
  for (size_t d = 0; d < q.dim(); ++d) {
    double sq = q.sigma[d], sp = p.sigma[d];
    double dm = q.mu[d] - p.mu[d];
    kl += std::log(sp / sq) + (sq * sq + dm * dm) / (2.0 * sp * sp) - 0.5;
  }
  return kl;
}

GaussianMoments empirical_moments(const Matrix& samples) {
  int64_t m = samples.rows, v = samples.cols;
  if (m < 2) throw InvalidArgument("empirical_moments: needs at least 2 samples, got " +
                                   std::to_string(m));
  GaussianMoments out;
  out.mu.assign(v, 0.0);
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < v; ++j) out.mu[j] += samples(i, j);
  for (int64_t j = 0; j < v; ++j) out.mu[j] /= static_cast<double>(m);

  out.cov = Matrix(v, v);
  double norm = 1.0 / static_cast<double>(m - 1);
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < v; ++j) {
      double dj = samples(i, j) - out.mu[j];
      for (int64_t k = j; k < v; ++k)
        out.cov(j, k) += dj * (samples(i, k) - out.mu[k]) * norm;
    }
  // Fill the lower triangle; (A + A^T)/2 is exact here by construction.
  for (int64_t j = 0; j < v; ++j)
    for (int64_t k = 0; k < j; ++k) out.cov(j, k) = out.cov(k, j);
  return out;
}

Matrix matrix_sqrt_psd(const Matrix& s) {
  if (s.rows != s.cols) throw InvalidArgument("matrix_sqrt_psd: matrix not square");
  double asym = 0.0, scale = 0.0;
  for (int64_t i = 0; i < s.rows; ++i)
    for (int64_t j = 0; j < s.cols; ++j) {
      asym = std::max(asym, std::abs(s(i, j) - s(j, i)));
      scale = std::max(scale, std::abs(s(i, j)));
    }
  if (asym > 1e-6 * std::max(1.0, scale))
    throw InvalidArgument("matrix_sqrt_psd: matrix asymmetric beyond tolerance");

  Matrix sym = s;
  for (int64_t i = 0; i < s.rows; ++i)
    for (int64_t j = 0; j < s.cols; ++j) sym(i, j) = 0.5 * (s(i, j) + s(j, i));

  std::vector<double> values;
  Matrix vectors;
  eigen_symmetric(sym, values, vectors);
  Matrix r(s.rows, s.cols);
  for (int64_t k = 0; k < s.rows; ++k) {
    double lam = values[k] > 0.0 ? std::sqrt(values[k]) : 0.0;
    if (lam == 0.0) continue;
    for (int64_t i = 0; i < s.rows; ++i) {
      double vik = vectors(i, k) * lam;
      if (vik == 0.0) continue;
      for (int64_t j = 0; j < s.cols; ++j) r(i, j) += vik * vectors(j, k);
    }
  }
  return r;
}

double frechet_distance(const GaussianMoments& m1, const GaussianMoments& m2) {
  if (m1.mu.size() != m2.mu.size() || m1.cov.rows != m2.cov.rows)
    throw InvalidArgument("frechet_distance: dimension mismatch");
  double d2 = 0.0;
  for (size_t i = 0; i < m1.mu.size(); ++i) {
    double d = m1.mu[i] - m2.mu[i];
    d2 += d * d;
  }
  Matrix s1_half = matrix_sqrt_psd(m1.cov);
  Matrix inner = matmul(matmul(s1_half, m2.cov), s1_half);
  Matrix cross = matrix_sqrt_psd(inner);
  double tr = 0.0;
  for (int64_t i = 0; i < m1.cov.rows; ++i)
    tr += m1.cov(i, i) + m2.cov(i, i) - 2.0 * cross(i, i);
  return std::max(0.0, d2 + tr);
}

std::pair<std::vector<double>, std::vector<double>> sample_diag(const DiagonalGaussian& g,
                                                                Rng& rng) {
  std::vector<double> z(g.dim()), eps(g.dim());
  for (size_t d = 0; d < g.dim(); ++d) {
    eps[d] = rng.normal();
    z[d] = g.mu[d] + g.sigma[d] * eps[d];
  }
  return {z, eps};
}

}  // namespace pulaski
