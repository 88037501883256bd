#include "pulaski/seg.hpp"

#include <algorithm>
#include <cmath>

namespace pulaski {

void BinaryMask::validate() const {
  if (numel(extents) != size())
    throw ShapeError("mask: value count does not match extents " + shape_str(extents));
  for (uint8_t v : values)
    if (v > 1) throw InvalidArgument("mask: values must be 0 or 1");
}

void ProbabilityMap::validate() const {
  if (numel(extents) != size())
    throw ShapeError("probability map: value count does not match extents " +
                     shape_str(extents));
  for (double v : values)
    if (!(v >= 0.0 && v <= 1.0))
      throw InvalidArgument("probability map: values must lie in [0,1]");
}

double otsu_threshold(const std::vector<double>& values, int bins, double lo, double hi) {
  if (bins < 2) throw InvalidArgument("otsu: needs at least 2 bins");
  if (!(lo < hi)) throw InvalidArgument("otsu: empty histogram range");
  if (values.empty()) throw InvalidArgument("otsu: empty input");

  double first = values[0];
  bool distinct = false;
  for (double v : values)
    if (v != first) { distinct = true; break; }
  if (!distinct)
    throw InvalidArgument("otsu: degenerate histogram, map is constant at " +
                          std::to_string(first));

  std::vector<double> hist(bins, 0.0);
  double width = (hi - lo) / bins;
  for (double v : values) {
    int64_t b = static_cast<int64_t>(std::floor((v - lo) / width));
    b = std::clamp<int64_t>(b, 0, bins - 1);
    hist[b] += 1.0;
  }

  // Cumulative mass and first moment; candidate edges split [0,k) vs [k,bins).
  double total = static_cast<double>(values.size());
  double total_mean = 0.0;
  for (int b = 0; b < bins; ++b) total_mean += hist[b] * (lo + (b + 0.5) * width);
  total_mean /= total;

  double best = -1.0;
  std::vector<int> best_edges;
  double w0 = 0.0, sum0 = 0.0;
  for (int k = 1; k < bins; ++k) {
    w0 += hist[k - 1];
    sum0 += hist[k - 1] * (lo + (k - 0.5) * width);
    double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    double mu0 = sum0 / w0;
    double mu1 = (total * total_mean - sum0) / w1;
    double var_between = (w0 / total) * (w1 / total) * (mu0 - mu1) * (mu0 - mu1);
    if (var_between > best * (1.0 + 1e-12)) {
      best = var_between;
      best_edges.assign(1, k);
    } else if (std::abs(var_between - best) <= 1e-12 * std::max(best, 1e-300)) {
      best_edges.push_back(k);
    }
  }
  if (best_edges.empty()) throw InvalidArgument("otsu: no admissible threshold");

  // Plateau rule: mean maximizing edge, rounded toward the lower threshold.
  double mean_k = 0.0;
  for (int k : best_edges) mean_k += k;
  mean_k /= static_cast<double>(best_edges.size());
  int k_star = static_cast<int>(std::floor(mean_k));
  return lo + k_star * width;
}

double otsu_threshold(const ProbabilityMap& p, int bins) {
  return otsu_threshold(p.values, bins, 0.0, 1.0);
}

BinaryMask binarize(const ProbabilityMap& p, double tau) {
  if (!(tau > 0.0 && tau < 1.0))
    throw InvalidArgument("binarize: tau must lie in (0,1), got " + std::to_string(tau));
  BinaryMask m;
  m.extents = p.extents;
  m.values.resize(p.values.size());
  for (size_t i = 0; i < p.values.size(); ++i) m.values[i] = p.values[i] >= tau ? 1 : 0;
  return m;
}

BinaryMask argmax_labels(const std::vector<double>& eta0, const std::vector<double>& eta1,
                         const Shape& extents) {
  if (eta0.size() != eta1.size() || numel(extents) != static_cast<int64_t>(eta0.size()))
    throw ShapeError("argmax_labels: logit planes do not match extents");
  BinaryMask m;
  m.extents = extents;
  m.values.resize(eta0.size());
  for (size_t i = 0; i < eta0.size(); ++i) m.values[i] = eta1[i] > eta0[i] ? 1 : 0;
  return m;
}

ProbabilityMap rate_of_occurrence(const std::vector<BinaryMask>& masks) {
  if (masks.empty()) throw InvalidArgument("rate_of_occurrence: no masks");
  for (const BinaryMask& m : masks)
    if (m.extents != masks[0].extents)
      throw ShapeError("rate_of_occurrence: mask shapes differ");
  ProbabilityMap p;
  p.extents = masks[0].extents;
  p.values.assign(masks[0].values.size(), 0.0);
  double inv = 1.0 / static_cast<double>(masks.size());
  for (const BinaryMask& m : masks)
    for (size_t i = 0; i < m.values.size(); ++i) p.values[i] += m.values[i] * inv;
  return p;
}

}  // namespace pulaski
