#pragma once

#include <cstddef>
#include <vector>

namespace metastab::detail {

/// Poisson(mean) probabilities on the window [left, right] outside of which
/// the mass is below `tail`. Computed in log space, so large means are safe.
struct PoissonWindow {
  std::size_t left = 0;
  std::size_t right = 0;
  std::vector<double> weights;  // weights[k - left]

  double weight(std::size_t k) const {
    return (k < left || k > right) ? 0.0 : weights[k - left];
  }
};

PoissonWindow poisson_window(double mean, double tail);

}  // namespace metastab::detail
