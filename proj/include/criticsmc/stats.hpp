#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "criticsmc/rng.hpp"

namespace criticsmc {

struct MeanStdErr {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Sample mean and its standard error (sample stddev / sqrt(n)).
inline MeanStdErr mean_and_std_error(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("mean_and_std_error: empty sample");
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double var = ss / static_cast<double>(xs.size() - 1);
  return {mean, std::sqrt(var / static_cast<double>(xs.size()))};
}

/// Paired cluster bootstrap over episodes. episode_rows[e] holds one value per
/// variant for episode e, aligned across variants by shared episode seeds.
/// Each resample draws episodes with replacement and hands the resampled
/// per-variant means to pred; returns the fraction of draws where pred holds.
template <class Pred>
double bootstrap_fraction(const std::vector<std::vector<double>>& episode_rows, int draws,
                          std::uint64_t seed, Pred&& pred) {
  if (episode_rows.empty()) throw std::invalid_argument("bootstrap_fraction: no episodes");
  if (draws < 1) throw std::invalid_argument("bootstrap_fraction: draws must be positive");
  const std::size_t n = episode_rows.size();
  const std::size_t width = episode_rows.front().size();
  if (width == 0) throw std::invalid_argument("bootstrap_fraction: empty rows");
  for (const auto& row : episode_rows) {
    if (row.size() != width) throw std::invalid_argument("bootstrap_fraction: ragged rows");
  }

  Xoshiro256 rng(mix_seed(seed, 0xb0075ULL));
  std::vector<double> means(width);
  long hits = 0;
  for (int d = 0; d < draws; ++d) {
    for (auto& m : means) m = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& row = episode_rows[rng.uniform_index(n)];
      for (std::size_t v = 0; v < width; ++v) means[v] += row[v];
    }
    for (auto& m : means) m /= static_cast<double>(n);
    if (pred(std::span<const double>(means))) hits += 1;
  }
  return static_cast<double>(hits) / static_cast<double>(draws);
}

/// One-sided sign-flip permutation test for paired differences, H1: mean < 0.
/// Under H0 the differences are symmetric about zero, so each |d_i| keeps its
/// magnitude and gets a random sign. Add-one smoothed Monte Carlo p-value; a
/// degenerate all-zero sample returns 1 (no evidence either way).
inline double sign_flip_pvalue_less(std::span<const double> diffs, int n_perm,
                                    std::uint64_t seed) {
  if (diffs.empty()) throw std::invalid_argument("sign_flip_pvalue_less: empty sample");
  if (n_perm < 1) throw std::invalid_argument("sign_flip_pvalue_less: n_perm must be positive");
  double obs = 0.0;
  double scale = 0.0;
  for (double d : diffs) {
    obs += d;
    scale = std::max(scale, std::abs(d));
  }
  obs /= static_cast<double>(diffs.size());
  if (scale == 0.0) return 1.0;

  Xoshiro256 rng(mix_seed(seed, 0x51f1ULL));
  long as_extreme = 0;
  for (int p = 0; p < n_perm; ++p) {
    double m = 0.0;
    for (double d : diffs) m += (rng() >> 63) ? d : -d;
    m /= static_cast<double>(diffs.size());
    if (m <= obs) as_extreme += 1;
  }
  return static_cast<double>(1 + as_extreme) / static_cast<double>(1 + n_perm);
}

}  // namespace criticsmc
