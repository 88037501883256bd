#pragma once

#include <utility>
#include <vector>

#include "pulaski/linalg.hpp"
#include "pulaski/rng.hpp"

namespace pulaski {

// Diagonal Gaussian N(mu, diag(sigma^2)); sigma holds standard deviations.
struct DiagonalGaussian {
  std::vector<double> mu;
  std::vector<double> sigma;

  size_t dim() const { return mu.size(); }
  void validate() const;
};

// First two moments of a sample set; cov is symmetric PSD up to clamping.
struct GaussianMoments {
  std::vector<double> mu;
  Matrix cov;
};

// KL(q || p) = sum_d [ log(sp/sq) + (sq^2 + (mq-mp)^2) / (2 sp^2) - 1/2 ]
double kl_diag(const DiagonalGaussian& q, const DiagonalGaussian& p);

// Row-wise mean and 1/(M-1)-normalized covariance, symmetrized. M >= 2.
GaussianMoments empirical_moments(const Matrix& samples);

// Symmetric PSD square root via eigendecomposition; negative eigenvalues are
// clamped to zero. Input asymmetry beyond 1e-6 is rejected.
Matrix matrix_sqrt_psd(const Matrix& s);

// |mu1-mu2|^2 + Tr(S1 + S2 - 2 (S1^{1/2} S2 S1^{1/2})^{1/2}), clamped at 0.
double frechet_distance(const GaussianMoments& m1, const GaussianMoments& m2);

// Reparameterized draw z = mu + sigma .* eps; returns (z, eps).
std::pair<std::vector<double>, std::vector<double>> sample_diag(const DiagonalGaussian& g,
                                                                Rng& rng);

}  // namespace pulaski
