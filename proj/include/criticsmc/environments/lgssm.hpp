#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "criticsmc/rng.hpp"

namespace criticsmc {

/// Hard-constraint linear Gaussian state-space model:
/// s_0 ~ N(0,1), a_t | s_t ~ N(prior_coef * s_t, prior_sigma^2), s_{t+1} = s_t + a_t,
/// reward 0 when |s_{t+1}| <= bound and -penalty otherwise.
///
/// transition_cost_iters is a wall-clock shaping knob for timing studies: the
/// transition runs that many side-effect-free xorshift iterations before
/// returning, standing in for an expensive dynamics model. Outputs are
/// identical for any value, so evidence oracles may run with it at 0.
struct LgssmConfig {
  double bound = 1e-2;
  double penalty = 10000.0;
  double prior_coef = 0.5;
  double prior_sigma = 1.0;
  int horizon = 10;
  long transition_cost_iters = 0;
};

namespace detail {

inline void busy_work(long iters, double a, double b) {
  if (iters <= 0) return;
  std::uint64_t x =
      (std::bit_cast<std::uint64_t>(a) ^ (std::bit_cast<std::uint64_t>(b) * 0x9e3779b97f4a7c15ULL)) |
      1ULL;
  for (long i = 0; i < iters; ++i) {
    x ^= x << 13;
    x ^= x >> 7;
    x ^= x << 17;
  }
  volatile std::uint64_t sink = x;
  (void)sink;
}

}  // namespace detail

class LgssmWorld {
 public:
  struct State {
    std::int32_t t = 0;
    double x = 0.0;
    bool operator==(const State&) const = default;
  };
  using Action = double;

  explicit LgssmWorld(LgssmConfig cfg = {}) : cfg_(cfg) {}

  State sample_initial(Xoshiro256& rng) const { return State{0, rng.normal()}; }
  State transition(const State& s, const Action& a) const {
    detail::busy_work(cfg_.transition_cost_iters, s.x, a);
    return State{s.t + 1, s.x + a};
  }
  double reward(const State&, const Action&, const State& s_next) const {
    return std::abs(s_next.x) <= cfg_.bound ? 0.0 : -cfg_.penalty;
  }
  bool constraint_ok(const State& s) const { return std::abs(s.x) <= cfg_.bound; }
  bool terminal(const State&) const { return false; }
  int horizon() const { return cfg_.horizon; }
  void prior_sample(const State& s, Xoshiro256& rng, std::span<Action> out) const {
    const double mu = cfg_.prior_coef * s.x;
    for (auto& a : out) a = mu + cfg_.prior_sigma * rng.normal();
  }

  const LgssmConfig& config() const { return cfg_; }

 private:
  LgssmConfig cfg_;
};

/// Heuristic critic for the LGSSM: Q(s,a) = -slope * |s + a|, maximized at the
/// action that lands the next state exactly on the constraint center.
class AnalyticLgssmCritic {
 public:
  explicit AnalyticLgssmCritic(double slope = 1000.0) : slope_(slope) {}

  void evaluate(const LgssmWorld::State& s, std::span<const LgssmWorld::Action> actions,
                std::span<double> out) const {
    for (std::size_t i = 0; i < actions.size(); ++i) {
      out[i] = -slope_ * std::abs(s.x + actions[i]);
    }
  }

  double slope() const { return slope_; }

 private:
  double slope_;
};

struct OracleEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::vector<double> reps;
};

/// Ground-truth log-evidence via repeated very-large-N SMC runs (busy-work knob
/// forced to 0; the model is unchanged by it).
OracleEstimate lgssm_oracle_evidence(const LgssmConfig& cfg, int n_particles, int reps,
                                     std::uint64_t seed);

/// Independent deterministic cross-check: backward value recursion on a dense
/// state grid, integrating the Gaussian action kernel by log-space trapezoid.
double lgssm_quadrature_evidence(const LgssmConfig& cfg, int grid_points = 4001,
                                 double grid_halfwidth = 8.0);

}  // namespace criticsmc
