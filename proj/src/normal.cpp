#include "difr/normal.hpp"

#include <cmath>
#include <numbers>

namespace difr::stats {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double log_normal_cdf(double z) {
  if (z > 0.0) return std::log1p(-0.5 * std::erfc(z / std::numbers::sqrt2));
  if (z > -30.0) return std::log(0.5 * std::erfc(-z / std::numbers::sqrt2));
  // Phi(z) = phi(z)/(-z) * (1 - 1/z^2 + 3/z^4 - 15/z^6 + ...)
  const double inv2 = 1.0 / (z * z);
  double term = 1.0;
  double series = 1.0;
  for (int n = 1; n <= 6; ++n) {
    term *= -(2.0 * n - 1.0) * inv2;
    series += term;
  }
  constexpr double kLogSqrt2Pi = 0.91893853320467274178;
  return -0.5 * z * z - kLogSqrt2Pi - std::log(-z) + std::log(series);
}

}  // namespace difr::stats
