#pragma once

#include "treebo/domain.hpp"
#include "treebo/rng.hpp"

namespace treebo {

/// Randomized Latin hypercube sample on the unit cube: per column, a random
/// permutation of the n equal-width bins with one uniform draw inside each.
inline Matrix lhs_unit(int n, int d, RngStream& rng) {
  if (n < 1 || d < 1) throw ArgumentError("lhs requires n >= 1 and d >= 1");
  Matrix pts(n, d);
  for (int j = 0; j < d; ++j) {
    const auto bins = rng.permutation(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      pts(i, j) = (static_cast<double>(bins[i]) + rng.u01()) / static_cast<double>(n);
  }
  return pts;
}

}  // namespace treebo
