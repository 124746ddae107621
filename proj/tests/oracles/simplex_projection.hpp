#pragma once

// Test-only oracle: Euclidean projection onto the probability simplex by
// enumerating every candidate support. Independent of the sort/threshold
// route used by tokswap::sparsemax.

#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

namespace oracle {

inline std::vector<double> project_to_simplex(const std::vector<double>& z) {
  const std::size_t n = z.size();
  if (n == 0 || n > 20) throw std::invalid_argument("oracle supports 1..20 coordinates");
  std::vector<double> best;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t mask = 1; mask < (std::size_t{1} << n); ++mask) {
    // On support S the stationarity condition gives p_i = z_i - tau with
    // tau = (sum_S z - 1) / |S|; p is feasible when p_i >= 0 on S.
    double sum = 0.0;
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (std::size_t{1} << i)) {
        sum += z[i];
        ++k;
      }
    }
    const double tau = (sum - 1.0) / static_cast<double>(k);
    std::vector<double> p(n, 0.0);
    bool feasible = true;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (std::size_t{1} << i)) {
        p[i] = z[i] - tau;
        if (p[i] < 0.0) feasible = false;
      }
    }
    if (!feasible) continue;
    double dist = 0.0;
    for (std::size_t i = 0; i < n; ++i) dist += (p[i] - z[i]) * (p[i] - z[i]);
    if (dist < best_dist) {
      best_dist = dist;
      best = p;
    }
  }
  return best;
}

}  // namespace oracle
