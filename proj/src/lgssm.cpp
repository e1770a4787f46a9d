#include "criticsmc/environments/lgssm.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "criticsmc/engine.hpp"
#include "criticsmc/math.hpp"

namespace criticsmc {

OracleEstimate lgssm_oracle_evidence(const LgssmConfig& cfg, int n_particles, int reps,
                                     std::uint64_t seed) {
  if (n_particles < 2 || reps < 2) throw std::invalid_argument("oracle needs n>=2, reps>=2");
  LgssmConfig pure = cfg;
  pure.transition_cost_iters = 0;  // outputs do not depend on the busy-work knob
  const LgssmWorld env(pure);
  EngineOptions opts;
  opts.record_trajectories = false;

  OracleEstimate est;
  est.reps.reserve(reps);
  for (int r = 0; r < reps; ++r) {
    const auto seeds = RunSeeds::from(mix_seed(seed, static_cast<std::uint64_t>(r)));
    est.reps.push_back(run_smc(env, n_particles, pure.horizon, seeds, opts).log_evidence);
  }
  double sum = 0.0;
  for (double v : est.reps) sum += v;
  est.mean = sum / reps;
  double ss = 0.0;
  for (double v : est.reps) ss += (v - est.mean) * (v - est.mean);
  est.std_error = std::sqrt(ss / (reps - 1.0) / reps);
  return est;
}

namespace {

constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5 * log(2*pi)

double log_normal_pdf(double u, double mu, double sigma) {
  const double z = (u - mu) / sigma;
  return -0.5 * z * z - std::log(sigma) - kHalfLog2Pi;
}

// Log-space trapezoid over one uniform grid piece: h * (f0/2 + f1 + ... + fn/2)
// computed as log h + lse with the endpoint logs shifted down by log 2.
// Mutates the endpoint entries of g.
double log_trapezoid(std::span<double> g, double h) {
  constexpr double kLog2 = 0.6931471805599453;
  g.front() -= kLog2;
  g.back() -= kLog2;
  return std::log(h) + log_sum_exp(std::span<const double>(g.data(), g.size()));
}

}  // namespace

double lgssm_quadrature_evidence(const LgssmConfig& cfg, int grid_points, double grid_halfwidth) {
  if (grid_points < 200) throw std::invalid_argument("grid too coarse");
  const double b = cfg.bound;
  const double g_half = grid_halfwidth;
  // Three pieces with the reward discontinuity at +-b placed exactly on piece
  // boundaries: [-G,-b], [-b,b], [b,G]. The value function itself is continuous,
  // so each piece's integrand is smooth and plain trapezoid converges fast.
  const int n_in = 41;
  const int n_out = std::max(200, (grid_points - n_in) / 2);
  std::vector<double> nodes;
  std::vector<int> piece_begin;  // start index of each piece; pieces share no nodes
  std::vector<double> piece_h;
  std::vector<double> piece_reward;
  auto add_piece = [&](double lo, double hi, int count, double reward) {
    piece_begin.push_back(static_cast<int>(nodes.size()));
    piece_h.push_back((hi - lo) / (count - 1));
    piece_reward.push_back(reward);
    for (int i = 0; i < count; ++i) {
      nodes.push_back(lo + (hi - lo) * static_cast<double>(i) / (count - 1));
    }
  };
  add_piece(-g_half, -b, n_out + 1, -cfg.penalty);
  add_piece(-b, b, n_in, 0.0);
  add_piece(b, g_half, n_out + 1, -cfg.penalty);
  const int total = static_cast<int>(nodes.size());

  // v[i] = log E[exp(sum of remaining rewards) | current state = nodes[i]].
  std::vector<double> v(total, 0.0), v_next(total, 0.0);
  std::vector<double> g(total);
  const double drift = 1.0 + cfg.prior_coef;  // s' = s + a, a ~ N(prior_coef*s, sigma^2)

  auto integrate_from = [&](double mu) {
    double acc = kNegInf;
    for (std::size_t p = 0; p < piece_begin.size(); ++p) {
      const int begin = piece_begin[p];
      const int count = (p + 1 < piece_begin.size() ? piece_begin[p + 1] : total) - begin;
      for (int i = 0; i < count; ++i) {
        g[begin + i] =
            log_normal_pdf(nodes[begin + i], mu, cfg.prior_sigma) + piece_reward[p] +
            v_next[begin + i];
      }
      const double piece_val = log_trapezoid(
          std::span<double>(&g[begin], static_cast<std::size_t>(count)), piece_h[p]);
      const double two[] = {acc, piece_val};
      acc = log_sum_exp(std::span<const double>(two, 2));
    }
    return acc;
  };

  for (int t = cfg.horizon - 1; t >= 0; --t) {
    v_next.swap(v);
    for (int i = 0; i < total; ++i) v[i] = integrate_from(drift * nodes[i]);
  }
  // Final integral over the standard-normal initial state; no reward applies to
  // the initial state itself, so fold v into a reward-free pass.
  v_next.swap(v);
  double acc = kNegInf;
  for (std::size_t p = 0; p < piece_begin.size(); ++p) {
    const int begin = piece_begin[p];
    const int count = (p + 1 < piece_begin.size() ? piece_begin[p + 1] : total) - begin;
    for (int i = 0; i < count; ++i) {
      g[begin + i] = log_normal_pdf(nodes[begin + i], 0.0, 1.0) + v_next[begin + i];
    }
    const double piece_val =
        log_trapezoid(std::span<double>(&g[begin], static_cast<std::size_t>(count)), piece_h[p]);
    const double two[] = {acc, piece_val};
    acc = log_sum_exp(std::span<const double>(two, 2));
  }
  return acc;
}

}  // namespace criticsmc
