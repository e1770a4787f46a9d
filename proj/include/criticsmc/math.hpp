#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>

namespace criticsmc {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// log(sum_i exp(x_i)) with max shift. Empty or all -inf input yields -inf.
/// Inputs must not contain NaN; -inf entries are valid (zero mass).
inline double log_sum_exp(std::span<const double> xs) {
  double m = kNegInf;
  for (double x : xs) {
    if (x > m) m = x;
  }
  if (m == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - m);
  return m + std::log(acc);
}

/// log((1/n) sum_i exp(x_i)).
inline double log_mean_exp(std::span<const double> xs) {
  if (xs.empty()) return kNegInf;
  return log_sum_exp(xs) - std::log(static_cast<double>(xs.size()));
}

/// (sum w)^2 / sum w^2 from log-weights, computed with a shared max shift.
/// Value lies in [1, n] for any non-degenerate input; 0 when all weights are zero.
inline double effective_sample_size(std::span<const double> log_w) {
  double m = kNegInf;
  for (double x : log_w) {
    if (x > m) m = x;
  }
  if (m == kNegInf) return 0.0;
  double s1 = 0.0;
  double s2 = 0.0;
  for (double x : log_w) {
    const double e = std::exp(x - m);
    s1 += e;
    s2 += e * e;
  }
  return (s1 * s1) / s2;
}

}  // namespace criticsmc
