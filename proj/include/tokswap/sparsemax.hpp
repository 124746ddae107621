#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "tokswap/error.hpp"

namespace tokswap {

/// Threshold tau such that max(z - tau, 0) sums to one.
inline double sparsemax_threshold(std::span<const double> scores) {
  if (scores.empty()) throw Error(ErrorKind::kEmptyInput, "sparsemax of an empty vector");
  std::vector<double> sorted(scores.begin(), scores.end());
  for (double s : sorted) {
    if (!std::isfinite(s)) throw Error(ErrorKind::kInvalidArgument, "sparsemax scores must be finite");
  }
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  // support size k is the largest k with 1 + k z_(k) > sum_{j<=k} z_(j)
  double cumsum = 0.0;
  double support_sum = sorted[0];
  std::size_t k = 1;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    cumsum += sorted[i];
    if (1.0 + static_cast<double>(i + 1) * sorted[i] > cumsum) {
      k = i + 1;
      support_sum = cumsum;
    }
  }
  return (support_sum - 1.0) / static_cast<double>(k);
}

/// Euclidean projection of `scores` onto the probability simplex.
inline std::vector<double> sparsemax(std::span<const double> scores) {
  const double tau = sparsemax_threshold(scores);
  std::vector<double> p(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) p[i] = std::max(scores[i] - tau, 0.0);
  return p;
}

inline std::vector<double> sparsemax(const std::vector<double>& scores) {
  return sparsemax(std::span<const double>(scores));
}

}  // namespace tokswap
