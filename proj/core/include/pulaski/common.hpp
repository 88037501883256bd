#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace pulaski {

// Error taxonomy. The CLI maps InvalidArgument/ShapeError to exit code 2 and
// NumericError/ConvergenceError to exit code 3.
struct InvalidArgument : std::runtime_error {
  explicit InvalidArgument(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : InvalidArgument {
  explicit ShapeError(const std::string& msg) : InvalidArgument(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConvergenceError : NumericError {
  double residual;
  ConvergenceError(const std::string& msg, double res)
      : NumericError(msg), residual(res) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t e : shape) n *= e;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

inline bool same_shape(const Shape& a, const Shape& b) { return a == b; }

}  // namespace pulaski
