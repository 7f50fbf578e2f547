#pragma once

#include <cmath>
#include <numbers>

namespace lever {

inline constexpr double kInvSqrt2 = 0.70710678118654752440;

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

inline double normal_upper_tail(double x) { return 0.5 * std::erfc(x * kInvSqrt2); }

// Phi(b) - Phi(a), sign-exact in the tails. The naive difference rounds to
// zero once both cdf values saturate at 1.0; routing through whichever tail
// keeps the arguments small preserves the sign of every nonzero difference.
inline double normal_cdf_diff(double a, double b) {
  if (a + b >= 0.0) return normal_upper_tail(a) - normal_upper_tail(b);
  return normal_cdf(b) - normal_cdf(a);
}

// log Phi(t). erfc underflows near t = -37.5; below that use the leading
// Mills-ratio asymptotic, which is plenty for likelihood comparisons.
inline double log_normal_cdf(double t) {
  if (t > -34.0) return std::log(normal_cdf(t));
  return -0.5 * t * t - std::log(-t) - 0.5 * std::log(2.0 * std::numbers::pi);
}

}  // namespace lever
