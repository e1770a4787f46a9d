#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "criticsmc/errors.hpp"
#include "criticsmc/math.hpp"
#include "criticsmc/rng.hpp"

namespace criticsmc {

enum class ResamplingVariant {
  multinomial,
  systematic,
};

using AncestorIndices = std::vector<std::uint32_t>;

namespace detail {

/// Normalized cumulative weights from log-weights, max-shifted.
/// Throws DegenerateParticleSystem when every weight is zero.
inline std::vector<double> cumulative_from_log(std::span<const double> log_w) {
  if (log_w.empty()) throw std::invalid_argument("resample: empty weight vector");
  for (double x : log_w) {
    if (std::isnan(x)) throw std::invalid_argument("resample: NaN log-weight");
  }
  const double norm = log_sum_exp(log_w);
  if (norm == kNegInf) {
    throw DegenerateParticleSystem("degenerate particle system: all weights are zero");
  }
  std::vector<double> cum(log_w.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < log_w.size(); ++i) {
    acc += std::exp(log_w[i] - norm);
    cum[i] = acc;
  }
  cum.back() = std::max(cum.back(), 1.0);
  return cum;
}

}  // namespace detail

/// Draw n_out ancestor indices with probability proportional to exp(log_w).
/// Multinomial consumes n_out uniforms; systematic consumes one. Cumulative-sum
/// boundaries resolve by strict less-than, so ties are deterministic given the seed.
inline AncestorIndices resample(std::span<const double> log_w, std::size_t n_out,
                                ResamplingVariant variant, Xoshiro256& rng) {
  const std::vector<double> cum = detail::cumulative_from_log(log_w);
  const std::size_t n = cum.size();
  AncestorIndices alpha(n_out);
  switch (variant) {
    case ResamplingVariant::multinomial: {
      for (std::size_t m = 0; m < n_out; ++m) {
        const double u = rng.uniform();
        const auto it = std::upper_bound(cum.begin(), cum.end(), u);
        alpha[m] = static_cast<std::uint32_t>(
            std::min<std::size_t>(static_cast<std::size_t>(it - cum.begin()), n - 1));
      }
      break;
    }
    case ResamplingVariant::systematic: {
      const double u = rng.uniform();
      std::size_t j = 0;
      for (std::size_t m = 0; m < n_out; ++m) {
        const double pos = (static_cast<double>(m) + u) / static_cast<double>(n_out);
        while (pos >= cum[j] && j + 1 < n) ++j;
        alpha[m] = static_cast<std::uint32_t>(j);
      }
      break;
    }
  }
  return alpha;
}

/// Flat putative index layout: flat(i, j) = i*K + j for particle i, putative j.
inline std::uint32_t flat_index_encode(std::uint32_t particle, std::uint32_t putative,
                                       std::uint32_t k) {
  return particle * k + putative;
}

struct FlatIndex {
  std::uint32_t particle;
  std::uint32_t putative;
  bool operator==(const FlatIndex&) const = default;
};

/// Inverse of flat_index_encode. Out-of-range alpha is a programming error.
inline FlatIndex flat_index_decode(std::uint32_t alpha, std::uint32_t k,
                                   std::uint32_t population) {
  if (k == 0 || alpha >= population) {
    throw std::logic_error("flat_index_decode: index out of range");
  }
  return FlatIndex{alpha / k, alpha % k};
}

}  // namespace criticsmc
