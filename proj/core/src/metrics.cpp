#include "pulaski/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pulaski {

double iou(const BinaryMask& s, const BinaryMask& y) {
  if (s.extents != y.extents)
    throw ShapeError("iou: mask shapes differ, " + shape_str(s.extents) + " vs " +
                     shape_str(y.extents));
  int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < s.values.size(); ++i) {
    inter += (s.values[i] & y.values[i]);
    uni += (s.values[i] | y.values[i]);
  }
  if (uni == 0) return 1.0;  // both empty
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double ged_squared(const std::vector<BinaryMask>& predictions,
                   const std::vector<BinaryMask>& annotations, bool allow_singleton) {
  size_t ns = predictions.size(), ny = annotations.size();
  if (ns == 0 || ny == 0) throw InvalidArgument("ged_squared: empty mask set");
  if (!allow_singleton && (ns < 2 || ny < 2))
    throw InvalidArgument("ged_squared: sets need >= 2 masks (got " + std::to_string(ns) +
                          " and " + std::to_string(ny) + ")");

  auto d = [](const BinaryMask& a, const BinaryMask& b) { return 1.0 - iou(a, b); };

  double cross = 0.0;
  for (const BinaryMask& s : predictions)
    for (const BinaryMask& y : annotations) cross += d(s, y);
  cross /= static_cast<double>(ns * ny);

  auto within = [&](const std::vector<BinaryMask>& set) {
    size_t n = set.size();
    if (n < 2) return 0.0;  // singleton override: self term vanishes
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < n; ++j)
        if (i != j) acc += d(set[i], set[j]);
    return acc / static_cast<double>(n * (n - 1));
  };

  return 2.0 * cross - within(predictions) - within(annotations);
}

namespace {

double kalpha_over_units(const std::vector<BinaryMask>& masks,
                         const std::vector<int64_t>& units, bool* degenerate) {
  size_t raters = masks.size();
  if (raters < 2) throw InvalidArgument("krippendorff_alpha: needs >= 2 raters");
  for (const BinaryMask& m : masks)
    if (m.extents != masks[0].extents)
      throw ShapeError("krippendorff_alpha: mask shapes differ");
  if (units.empty()) throw InvalidArgument("krippendorff_alpha: empty unit set");

  // Binary nominal alpha from the coincidence matrix: with n_u1 positives among
  // R raters at unit u, each unit contributes 2*n_u0*n_u1/(R-1) observed
  // disagreement; marginals give the expected disagreement.
  double r = static_cast<double>(raters);
  double observed = 0.0;
  double n1_total = 0.0;
  for (int64_t u : units) {
    int64_t c1 = 0;
    for (const BinaryMask& m : masks) c1 += m.values[u];
    double n1 = static_cast<double>(c1), n0 = r - n1;
    observed += n0 * n1 / (r - 1.0);
    n1_total += n1;
  }
  double n_total = r * static_cast<double>(units.size());
  double n0_total = n_total - n1_total;
  if (degenerate) *degenerate = false;
  if (n0_total == 0.0 || n1_total == 0.0) {
    if (degenerate) *degenerate = true;
    return 1.0;  // zero expected disagreement
  }
  // alpha = 1 - (n-1) * sum_u n_u0 n_u1 / (R-1) / (n_0 n_1)
  return 1.0 - (n_total - 1.0) * observed / (n0_total * n1_total);
}

}  // namespace

double krippendorff_alpha(const std::vector<BinaryMask>& masks, KalphaRegion region,
                          bool* degenerate) {
  if (masks.empty()) throw InvalidArgument("krippendorff_alpha: no masks");
  std::vector<int64_t> units;
  if (region == KalphaRegion::kAll) {
    units.resize(masks[0].values.size());
    std::iota(units.begin(), units.end(), 0);
  } else {
    BinaryMask roi = roi_union(masks);
    for (size_t i = 0; i < roi.values.size(); ++i)
      if (roi.values[i]) units.push_back(static_cast<int64_t>(i));
    if (units.empty())
      throw InvalidArgument("krippendorff_alpha: ROI is empty, no rater marked any voxel");
  }
  return kalpha_over_units(masks, units, degenerate);
}

double krippendorff_alpha_in_roi(const std::vector<BinaryMask>& masks, const BinaryMask& roi,
                                 bool* degenerate) {
  if (masks.empty()) throw InvalidArgument("krippendorff_alpha: no masks");
  if (roi.extents != masks[0].extents)
    throw ShapeError("krippendorff_alpha: ROI shape differs from masks");
  std::vector<int64_t> units;
  for (size_t i = 0; i < roi.values.size(); ++i)
    if (roi.values[i]) units.push_back(static_cast<int64_t>(i));
  if (units.empty()) throw InvalidArgument("krippendorff_alpha: ROI is empty");
  return kalpha_over_units(masks, units, degenerate);
}

BinaryMask roi_union(const std::vector<BinaryMask>& annotations) {
  if (annotations.empty()) throw InvalidArgument("roi_union: no masks");
  BinaryMask out = annotations[0];
  for (size_t m = 1; m < annotations.size(); ++m) {
    if (annotations[m].extents != out.extents)
      throw ShapeError("roi_union: mask shapes differ");
    for (size_t i = 0; i < out.values.size(); ++i) out.values[i] |= annotations[m].values[i];
  }
  return out;
}

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b,
                                    int exact_limit) {
  if (a.size() != b.size())
    throw InvalidArgument("wilcoxon: paired samples must have equal length");
  std::vector<double> diff;
  for (size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    if (d != 0.0) diff.push_back(d);
  }
  if (diff.empty())
    throw UndefinedTest("wilcoxon: all differences are zero, test undefined");
  int n = static_cast<int>(diff.size());
  if (n < 5)
    throw UndefinedTest("wilcoxon: only " + std::to_string(n) +
                        " nonzero differences, need at least 5");

  // Average ranks of |d|, ties shared.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int i, int j) { return std::abs(diff[i]) < std::abs(diff[j]); });
  std::vector<double> rank(n);
  std::vector<int> tie_sizes;
  for (int i = 0; i < n;) {
    int j = i;
    while (j < n && std::abs(diff[order[j]]) == std::abs(diff[order[i]])) ++j;
    double avg = 0.5 * (i + 1 + j);  // mean of ranks i+1..j
    for (int k = i; k < j; ++k) rank[order[k]] = avg;
    tie_sizes.push_back(j - i);
    i = j;
  }

  double w_plus = 0.0;
  for (int i = 0; i < n; ++i)
    if (diff[i] > 0.0) w_plus += rank[i];

  WilcoxonResult res;
  res.statistic = w_plus;
  res.n_used = n;

  if (n <= exact_limit) {
    res.exact = true;
    // Distribution of W+ over all 2^n sign patterns, counted by subset-sum over
    // doubled ranks (average ranks are half-integers).
    std::vector<int> r2(n);
    int total2 = 0;
    for (int i = 0; i < n; ++i) {
      r2[i] = static_cast<int>(std::llround(2.0 * rank[i]));
      total2 += r2[i];
    }
    std::vector<double> count(total2 + 1, 0.0);
    count[0] = 1.0;
    int reach = 0;
    for (int i = 0; i < n; ++i) {
      reach += r2[i];
      for (int s = reach; s >= r2[i]; --s) count[s] += count[s - r2[i]];
    }
    double patterns = std::ldexp(1.0, n);
    int w2 = static_cast<int>(std::llround(2.0 * w_plus));
    double le = 0.0, ge = 0.0;
    for (int s = 0; s <= total2; ++s) {
      if (s <= w2) le += count[s];
      if (s >= w2) ge += count[s];
    }
    res.p_value = std::min(1.0, 2.0 * std::min(le, ge) / patterns);
  } else {
    res.exact = false;
    double nn = static_cast<double>(n);
    double mean = nn * (nn + 1.0) / 4.0;
    double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
    for (int t : tie_sizes) var -= (static_cast<double>(t) * t * t - t) / 48.0;
    double sd = std::sqrt(var);
    if (sd == 0.0) throw UndefinedTest("wilcoxon: zero variance under ties");
    double delta = w_plus - mean;
    double cc = delta > 0 ? -0.5 : (delta < 0 ? 0.5 : 0.0);  // continuity correction
    double z = (delta + cc) / sd;
    res.p_value = std::min(1.0, 2.0 * (1.0 - normal_cdf(std::abs(z))));
  }
  return res;
}

}  // namespace pulaski
