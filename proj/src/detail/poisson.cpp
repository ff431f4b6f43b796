#include "detail/poisson.hpp"

#include <algorithm>
#include <cmath>

namespace metastab::detail {

namespace {

double log_pmf(double mean, std::size_t k) {
  const double kd = static_cast<double>(k);
  return kd * std::log(mean) - mean - std::lgamma(kd + 1.0);
}

}  // namespace

PoissonWindow poisson_window(double mean, double tail) {
  PoissonWindow w;
  if (mean <= 0.0) {
    w.weights = {1.0};
    return w;
  }
  const double spread = std::sqrt(mean);
  for (double width = 10.0;; width += 5.0) {
    const double lo = std::floor(mean - width * spread - width);
    w.left = lo > 0.0 ? static_cast<std::size_t>(lo) : 0;
    w.right = static_cast<std::size_t>(std::ceil(mean + width * spread + width));
    w.weights.resize(w.right - w.left + 1);
    double total = 0.0;
    for (std::size_t k = w.left; k <= w.right; ++k) {
      w.weights[k - w.left] = std::exp(log_pmf(mean, k));
      total += w.weights[k - w.left];
    }
    if (1.0 - total <= tail || width > 60.0) break;
  }
  return w;
}

}  // namespace metastab::detail
