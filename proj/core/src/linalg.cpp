#include "pulaski/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pulaski {

Matrix Matrix::identity(int64_t n) {
  Matrix m(n, n);
  for (int64_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols, rows);
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < cols; ++j) t(j, i) = (*this)(i, j);
  return t;
}

Matrix matmul(const Matrix& x, const Matrix& y) {
  if (x.cols != y.rows) throw ShapeError("matmul: incompatible matrix shapes");
  Matrix out(x.rows, y.cols);
  for (int64_t i = 0; i < x.rows; ++i)
    for (int64_t k = 0; k < x.cols; ++k) {
      double v = x(i, k);
      for (int64_t j = 0; j < y.cols; ++j) out(i, j) += v * y(k, j);
    }
  return out;
}

double frobenius_norm(const Matrix& m) {
  double s = 0.0;
  for (double v : m.a) s += v * v;
  return std::sqrt(s);
}

void eigen_symmetric(const Matrix& s, std::vector<double>& values, Matrix& vectors) {
  if (s.rows != s.cols) throw ShapeError("eigen_symmetric: matrix not square");
  int64_t n = s.rows;
  Matrix a = s;
  Matrix v = Matrix::identity(n);

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (off < 1e-26 * (1.0 + frobenius_norm(s))) break;

    for (int64_t p = 0; p < n; ++p) {
      for (int64_t q = p + 1; q < n; ++q) {
        double apq = a(p, q);
        if (std::abs(apq) < 1e-300) continue;
        double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        double t = (theta >= 0 ? 1.0 : -1.0) /
                   (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double sn = t * c;
        for (int64_t k = 0; k < n; ++k) {
          double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - sn * akq;
          a(k, q) = sn * akp + c * akq;
        }
        for (int64_t k = 0; k < n; ++k) {
          double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - sn * aqk;
          a(q, k) = sn * apk + c * aqk;
        }
        for (int64_t k = 0; k < n; ++k) {
          double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - sn * vkq;
          v(k, q) = sn * vkp + c * vkq;
        }
      }
    }
  }

  values.resize(n);
  for (int64_t i = 0; i < n; ++i) values[i] = a(i, i);
  // Sort ascending, permuting eigenvector columns along.
  std::vector<int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int64_t x, int64_t y) { return values[x] < values[y]; });
  std::vector<double> sorted(n);
  Matrix vs(n, n);
  for (int64_t j = 0; j < n; ++j) {
    sorted[j] = values[order[j]];
    for (int64_t i = 0; i < n; ++i) vs(i, j) = v(i, order[j]);
  }
  values = std::move(sorted);
  vectors = std::move(vs);
}

std::vector<double> solve_linear(Matrix a, std::vector<double> b) {
  if (a.rows != a.cols || static_cast<int64_t>(b.size()) != a.rows)
    throw ShapeError("solve_linear: dimension mismatch");
  int64_t n = a.rows;
  for (int64_t col = 0; col < n; ++col) {
    int64_t piv = col;
    for (int64_t r = col + 1; r < n; ++r)
      if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
    if (std::abs(a(piv, col)) < 1e-300)
      throw NumericError("solve_linear: singular matrix");
    if (piv != col) {
      for (int64_t j = 0; j < n; ++j) std::swap(a(col, j), a(piv, j));
      std::swap(b[col], b[piv]);
    }
    double inv = 1.0 / a(col, col);
    for (int64_t r = col + 1; r < n; ++r) {
      double f = a(r, col) * inv;
      if (f == 0.0) continue;
      for (int64_t j = col; j < n; ++j) a(r, j) -= f * a(col, j);
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (int64_t r = n - 1; r >= 0; --r) {
    double acc = b[r];
    for (int64_t j = r + 1; j < n; ++j) acc -= a(r, j) * x[j];
    x[r] = acc / a(r, r);
  }
  return x;
}

}  // namespace pulaski
