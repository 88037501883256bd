#pragma once

#include <cstdint>
#include <vector>

#include "pulaski/common.hpp"

namespace pulaski {

// Spatial extents are 2-D or 3-D, row-major storage.
struct BinaryMask {
  Shape extents;
  std::vector<uint8_t> values;  // strictly {0,1}

  int64_t size() const { return static_cast<int64_t>(values.size()); }
  void validate() const;
};

struct ProbabilityMap {
  Shape extents;
  std::vector<double> values;  // in [0,1]

  int64_t size() const { return static_cast<int64_t>(values.size()); }
  void validate() const;
};

// Threshold maximizing between-class variance over a `bins`-bin histogram of
// [lo, hi). When several edges tie (a plateau), the mean maximizing edge is
// taken, rounded toward the lower threshold. Requires >= 2 distinct values.
double otsu_threshold(const std::vector<double>& values, int bins = 256, double lo = 0.0,
                      double hi = 1.0);
double otsu_threshold(const ProbabilityMap& p, int bins = 256);

// s = 1 where p >= tau. tau must lie in (0,1).
BinaryMask binarize(const ProbabilityMap& p, double tau);

// Label 1 where eta1 > eta0; ties resolve to 0.
BinaryMask argmax_labels(const std::vector<double>& eta0, const std::vector<double>& eta1,
                         const Shape& extents);

// Voxelwise mean of the masks.
ProbabilityMap rate_of_occurrence(const std::vector<BinaryMask>& masks);

}  // namespace pulaski
