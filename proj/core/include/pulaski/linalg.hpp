#pragma once

#include <vector>

#include "pulaski/common.hpp"

namespace pulaski {

// Minimal dense matrix, row-major. Only what the Gaussian machinery and the
// transport solver need: symmetric eigendecomposition and linear solves.
struct Matrix {
  int64_t rows = 0, cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(int64_t r, int64_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

  double& operator()(int64_t i, int64_t j) { return a[i * cols + j]; }
  double operator()(int64_t i, int64_t j) const { return a[i * cols + j]; }

  static Matrix identity(int64_t n);
  Matrix transposed() const;
};

Matrix matmul(const Matrix& x, const Matrix& y);

double frobenius_norm(const Matrix& m);

// Cyclic Jacobi for symmetric matrices. Returns eigenvalues ascending and the
// corresponding orthonormal eigenvectors as columns of `vectors`.
void eigen_symmetric(const Matrix& s, std::vector<double>& values, Matrix& vectors);

// Gaussian elimination with partial pivoting; solves A x = b in place-safe form.
std::vector<double> solve_linear(Matrix a, std::vector<double> b);

}  // namespace pulaski
