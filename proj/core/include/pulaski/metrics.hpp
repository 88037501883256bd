#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pulaski/seg.hpp"

namespace pulaski {

// Raised when a significance test has no defined value (all-zero differences
// or too few usable pairs). The CLI reports these as "n/a".
struct UndefinedTest : std::runtime_error {
  explicit UndefinedTest(const std::string& msg) : std::runtime_error(msg) {}
};

// Intersection over union; both masks empty counts as 1 by convention.
double iou(const BinaryMask& s, const BinaryMask& y);

// Squared generalized energy distance with ground distance d = 1 - IoU.
// Cross expectation runs over all |S|*|Y| pairs; within-set expectations over
// ordered distinct pairs. Singleton sets are rejected unless
// `allow_singleton`, in which case the self terms are zero.
double ged_squared(const std::vector<BinaryMask>& predictions,
                   const std::vector<BinaryMask>& annotations, bool allow_singleton = false);

enum class KalphaRegion { kAll, kRoi };

// Nominal binary Krippendorff alpha over pairwise rater comparisons per voxel.
// region = kRoi restricts to the union of foreground voxels of `masks` itself.
// All labels identical everywhere means zero expected disagreement; by
// convention alpha is then 1 and `degenerate` (when given) is set.
double krippendorff_alpha(const std::vector<BinaryMask>& masks, KalphaRegion region,
                          bool* degenerate = nullptr);

// Same, but restricted to an externally supplied region of interest.
double krippendorff_alpha_in_roi(const std::vector<BinaryMask>& masks, const BinaryMask& roi,
                                 bool* degenerate = nullptr);

// Voxelwise OR.
BinaryMask roi_union(const std::vector<BinaryMask>& annotations);

struct WilcoxonResult {
  double statistic = 0.0;  // W+ (sum of ranks of positive differences)
  double p_value = 1.0;    // two-sided
  int n_used = 0;          // pairs after dropping zero differences
  bool exact = false;      // exact distribution vs normal approximation
};

// Two-sided signed-rank test on paired samples. Zero differences are dropped;
// fewer than 5 usable pairs (or none at all) raises UndefinedTest. Ties share
// average ranks. Exact distribution for n <= exact_limit, normal approximation
// with continuity and tie correction beyond.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b,
                                    int exact_limit = 25);

// Per-image evaluation record and the aggregate report the CLI serializes.
struct ImageMetrics {
  std::string image_id;
  double ged = 0.0;
  double kalpha_all = 0.0;
  double kalpha_roi = 0.0;
};

struct MetricsReport {
  std::vector<ImageMetrics> per_image;
  double ged_mean = 0.0, ged_sd = 0.0;
  double kalpha_all_mean = 0.0, kalpha_all_sd = 0.0;
  double kalpha_roi_mean = 0.0, kalpha_roi_sd = 0.0;
  double annotation_kalpha_all_mean = 0.0, annotation_kalpha_all_sd = 0.0;
  double annotation_kalpha_roi_mean = 0.0, annotation_kalpha_roi_sd = 0.0;
};

}  // namespace pulaski
