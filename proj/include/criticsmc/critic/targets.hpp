#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "criticsmc/engine.hpp"
#include "criticsmc/math.hpp"
#include "criticsmc/rng.hpp"

namespace criticsmc {

/// K-sample TD target for fitted soft-Q iteration:
///   r + gamma * (logsumexp_j Q(s_next, a_j) - log K),
/// with a_j drawn from the prior policy at s_next. Terminal transitions have
/// no continuation value and return r alone.
template <EnvironmentModel E, class C>
  requires CriticModel<C, E>
double soft_q_target(double r, const typename E::State& s_next, bool terminal, const E& env,
                     const C& target_critic, int k, double gamma, Xoshiro256& rng) {
  if (k < 1) throw std::invalid_argument("soft_q_target: k must be >= 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("soft_q_target: bad gamma");
  if (terminal) return r;
  std::vector<typename E::Action> actions(static_cast<std::size_t>(k));
  std::vector<double> q(static_cast<std::size_t>(k));
  env.prior_sample(s_next, rng, std::span<typename E::Action>(actions));
  target_critic.evaluate(s_next, std::span<const typename E::Action>(actions),
                         std::span<double>(q));
  return r + gamma * (log_sum_exp(q) - std::log(static_cast<double>(k)));
}

/// Same sampling scheme with max_j Q(s_next, a_j) in place of the log-mean-exp.
template <EnvironmentModel E, class C>
  requires CriticModel<C, E>
double hard_q_target(double r, const typename E::State& s_next, bool terminal, const E& env,
                     const C& target_critic, int k, double gamma, Xoshiro256& rng) {
  if (k < 1) throw std::invalid_argument("hard_q_target: k must be >= 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("hard_q_target: bad gamma");
  if (terminal) return r;
  std::vector<typename E::Action> actions(static_cast<std::size_t>(k));
  std::vector<double> q(static_cast<std::size_t>(k));
  env.prior_sample(s_next, rng, std::span<typename E::Action>(actions));
  target_critic.evaluate(s_next, std::span<const typename E::Action>(actions),
                         std::span<double>(q));
  double best = q[0];
  for (double v : q) best = std::max(best, v);
  return r + gamma * best;
}

struct TdLossResult {
  double loss = 0.0;               // importance-weighted mean squared TD error
  std::vector<double> td_abs;      // |q - target| per entry, for priority refresh
  std::vector<double> dloss_dq;    // gradient of loss w.r.t. each prediction
};

/// Squared-error loss between predictions and fixed (stop-gradient) targets,
/// averaged over the batch with per-entry importance weights.
inline TdLossResult td_loss(std::span<const double> q_pred, std::span<const double> targets,
                            std::span<const double> is_weights) {
  if (q_pred.size() != targets.size() || q_pred.size() != is_weights.size()) {
    throw std::invalid_argument("td_loss: size mismatch");
  }
  if (q_pred.empty()) throw std::invalid_argument("td_loss: empty batch");
  TdLossResult out;
  const std::size_t n = q_pred.size();
  out.td_abs.resize(n);
  out.dloss_dq.resize(n);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = q_pred[i] - targets[i];
    out.td_abs[i] = std::abs(d);
    out.loss += is_weights[i] * d * d * inv_n;
    out.dloss_dq[i] = 2.0 * is_weights[i] * d * inv_n;
  }
  return out;
}

}  // namespace criticsmc
