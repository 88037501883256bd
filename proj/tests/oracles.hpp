// Independent brute-force oracles used by the unit and acceptance suites.
// Everything here is deliberately naive: direct loops, full enumerations, no
// shared code with the implementations under test.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "pulaski/metrics.hpp"
#include "pulaski/ot.hpp"

namespace oracles {

// Exact optimal transport between uniform equal-size clouds by enumerating all
// N! permutation couplings; cost 0.5*|x-y|^2.
inline double permutation_ot(const pulaski::Matrix& a, const pulaski::Matrix& b) {
  int64_t n = a.rows;
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      double d2 = 0.0;
      for (int64_t k = 0; k < a.cols; ++k) {
        double d = a(i, k) - b(perm[i], k);
        d2 += d * d;
      }
      total += 0.5 * d2;
    }
    best = std::min(best, total / static_cast<double>(n));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Squared GED by direct pairwise loops, d = 1 - IoU.
inline double ged_pairwise(const std::vector<pulaski::BinaryMask>& s,
                           const std::vector<pulaski::BinaryMask>& y) {
  auto dist = [](const pulaski::BinaryMask& a, const pulaski::BinaryMask& b) {
    int64_t inter = 0, uni = 0;
    for (size_t i = 0; i < a.values.size(); ++i) {
      if (a.values[i] && b.values[i]) ++inter;
      if (a.values[i] || b.values[i]) ++uni;
    }
    return uni == 0 ? 0.0 : 1.0 - static_cast<double>(inter) / uni;
  };
  double cross = 0.0;
  for (const auto& si : s)
    for (const auto& yj : y) cross += dist(si, yj);
  cross /= static_cast<double>(s.size() * y.size());
  auto within = [&](const std::vector<pulaski::BinaryMask>& set) {
    if (set.size() < 2) return 0.0;
    double acc = 0.0;
    int cnt = 0;
    for (size_t i = 0; i < set.size(); ++i)
      for (size_t j = 0; j < set.size(); ++j)
        if (i != j) {
          acc += dist(set[i], set[j]);
          ++cnt;
        }
    return acc / cnt;
  };
  return 2.0 * cross - within(s) - within(y);
}

// Krippendorff alpha by literal enumeration of ordered rater pairs per voxel:
// coincidence matrix o_ck, marginals n_c, alpha = 1 - D_o/D_e.
inline double kalpha_enumeration(const std::vector<pulaski::BinaryMask>& masks,
                                 const std::vector<int64_t>& units) {
  double o[2][2] = {{0, 0}, {0, 0}};
  double nc[2] = {0, 0};
  double r = static_cast<double>(masks.size());
  for (int64_t u : units) {
    for (size_t i = 0; i < masks.size(); ++i) {
      nc[masks[i].values[u]] += 1.0;
      for (size_t j = 0; j < masks.size(); ++j) {
        if (i == j) continue;
        o[masks[i].values[u]][masks[j].values[u]] += 1.0 / (r - 1.0);
      }
    }
  }
  double n = nc[0] + nc[1];
  double d_o = o[0][1] + o[1][0];
  double d_e = (nc[0] * nc[1] + nc[1] * nc[0]) / (n - 1.0);
  if (d_e == 0.0) return 1.0;
  return 1.0 - d_o / d_e;
}

inline double kalpha_enumeration_all(const std::vector<pulaski::BinaryMask>& masks) {
  std::vector<int64_t> units(masks[0].values.size());
  std::iota(units.begin(), units.end(), 0);
  return kalpha_enumeration(masks, units);
}

// Exact two-sided Wilcoxon signed-rank p by enumerating all 2^n sign patterns.
inline double wilcoxon_2n(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> diff;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) diff.push_back(a[i] - b[i]);
  int n = static_cast<int>(diff.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int i, int j) { return std::abs(diff[i]) < std::abs(diff[j]); });
  std::vector<double> rank(n);
  for (int i = 0; i < n;) {
    int j = i;
    while (j < n && std::abs(diff[order[j]]) == std::abs(diff[order[i]])) ++j;
    double avg = 0.5 * (i + 1 + j);
    for (int k = i; k < j; ++k) rank[order[k]] = avg;
    i = j;
  }
  double w_obs = 0.0;
  for (int i = 0; i < n; ++i)
    if (diff[i] > 0.0) w_obs += rank[i];

  int64_t le = 0, ge = 0, total = int64_t{1} << n;
  for (int64_t mask = 0; mask < total; ++mask) {
    double w = 0.0;
    for (int i = 0; i < n; ++i)
      if (mask & (int64_t{1} << i)) w += rank[i];
    if (w <= w_obs + 1e-12) ++le;
    if (w >= w_obs - 1e-12) ++ge;
  }
  double p = 2.0 * static_cast<double>(std::min(le, ge)) / static_cast<double>(total);
  return std::min(1.0, p);
}

// Exhaustive Otsu: recompute the between-class variance at every bin edge with
// direct passes; same plateau rule (mean index, floored).
inline double otsu_exhaustive(const std::vector<double>& values, int bins, double lo,
                              double hi) {
  double width = (hi - lo) / bins;
  std::vector<double> hist(bins, 0.0);
  for (double v : values) {
    int64_t b = static_cast<int64_t>(std::floor((v - lo) / width));
    b = std::clamp<int64_t>(b, 0, static_cast<int64_t>(bins) - 1);
    hist[b] += 1.0;
  }
  double best = -1.0;
  std::vector<int> edges;
  for (int k = 1; k < bins; ++k) {
    double w0 = 0, w1 = 0, s0 = 0, s1 = 0;
    for (int b = 0; b < k; ++b) {
      w0 += hist[b];
      s0 += hist[b] * (lo + (b + 0.5) * width);
    }
    for (int b = k; b < bins; ++b) {
      w1 += hist[b];
      s1 += hist[b] * (lo + (b + 0.5) * width);
    }
    if (w0 == 0 || w1 == 0) continue;
    double total = w0 + w1;
    double var = (w0 / total) * (w1 / total) * (s0 / w0 - s1 / w1) * (s0 / w0 - s1 / w1);
    if (var > best * (1.0 + 1e-12)) {
      best = var;
      edges.assign(1, k);
    } else if (std::abs(var - best) <= 1e-12 * std::max(best, 1e-300)) {
      edges.push_back(k);
    }
  }
  double mean_k = 0.0;
  for (int k : edges) mean_k += k;
  mean_k /= static_cast<double>(edges.size());
  return lo + std::floor(mean_k) * width;
}

}  // namespace oracles
