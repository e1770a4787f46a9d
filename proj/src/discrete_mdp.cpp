#include "criticsmc/environments/discrete_mdp.hpp"

#include <cmath>
#include <stdexcept>

#include "criticsmc/errors.hpp"

#include "criticsmc/math.hpp"

namespace criticsmc {

DiscreteMdp::DiscreteMdp(int n_states, int n_actions, int horizon, std::vector<int> next,
                         std::vector<double> reward, std::vector<double> policy,
                         std::vector<double> p0, std::vector<std::uint8_t> terminal_mask)
    : n_states_(n_states),
      n_actions_(n_actions),
      horizon_(horizon),
      next_(std::move(next)),
      reward_(std::move(reward)),
      policy_(std::move(policy)),
      p0_(std::move(p0)) {
  const auto table = static_cast<std::size_t>(n_states) * n_actions;
  if (next_.size() != table || reward_.size() != table || policy_.size() != table ||
      p0_.size() != static_cast<std::size_t>(n_states)) {
    throw ConfigError("DiscreteMdp: table size mismatch");
  }
  terminal_mask_ = terminal_mask.empty() ? std::vector<std::uint8_t>(n_states, 0)
                                         : std::move(terminal_mask);
  if (terminal_mask_.size() != static_cast<std::size_t>(n_states)) {
    throw ConfigError("DiscreteMdp: terminal mask size mismatch");
  }
  for (int s = 0; s < n_states; ++s) {
    double row = 0.0;
    for (int a = 0; a < n_actions; ++a) {
      row += policy_[flat(s, a)];
      if (next_[flat(s, a)] < 0 || next_[flat(s, a)] >= n_states) {
        throw ConfigError("DiscreteMdp: transition target out of range");
      }
    }
    if (std::abs(row - 1.0) > 1e-12) {
      throw ConfigError("DiscreteMdp: policy row does not sum to 1");
    }
  }
  double mass = 0.0;
  for (double p : p0_) mass += p;
  if (std::abs(mass - 1.0) > 1e-12) {
    throw ConfigError("DiscreteMdp: initial distribution does not sum to 1");
  }
}

DiscreteMdp::State DiscreteMdp::sample_initial(Xoshiro256& rng) const {
  const double u = rng.uniform();
  double acc = 0.0;
  for (int s = 0; s < n_states_; ++s) {
    acc += p0_[s];
    if (u < acc) return State{0, s};
  }
  return State{0, n_states_ - 1};
}

void DiscreteMdp::prior_sample(const State& s, Xoshiro256& rng, std::span<Action> out) const {
  for (auto& a : out) {
    const double u = rng.uniform();
    double acc = 0.0;
    a = n_actions_ - 1;
    for (int c = 0; c < n_actions_; ++c) {
      acc += policy_[flat(s.s, c)];
      if (u < acc) {
        a = c;
        break;
      }
    }
  }
}

namespace {

// Linear-space recursion is exact here: per-step factors are pi * exp(r) with
// desk-scale rewards, far from double underflow.
double continuation(const DiscreteMdp& mdp, int s, int t) {
  if (t > mdp.horizon() || mdp.terminal_state(s)) return 1.0;
  double total = 0.0;
  for (int a = 0; a < mdp.n_actions(); ++a) {
    total += mdp.policy(s, a) * std::exp(mdp.reward_at(s, a)) *
             continuation(mdp, mdp.next_at(s, a), t + 1);
  }
  return total;
}

}  // namespace

double enumerate_log_evidence(const DiscreteMdp& mdp) {
  double total = 0.0;
  for (int s = 0; s < mdp.n_states(); ++s) {
    if (mdp.p0(s) > 0.0) total += mdp.p0(s) * continuation(mdp, s, 1);
  }
  return std::log(total);
}

double enumerate_log_conditional(const DiscreteMdp& mdp, int s, int a) {
  return std::log(std::exp(mdp.reward_at(s, a)) * continuation(mdp, mdp.next_at(s, a), 2));
}

SoftQTable soft_q_exact(const DiscreteMdp& mdp, double gamma) {
  SoftQTable out;
  out.horizon = mdp.horizon();
  out.n_states = mdp.n_states();
  out.n_actions = mdp.n_actions();
  out.q.assign(static_cast<std::size_t>(out.horizon) * out.n_states * out.n_actions, 0.0);
  std::vector<double> terms(out.n_actions);
  for (int t = out.horizon - 1; t >= 0; --t) {
    for (int s = 0; s < out.n_states; ++s) {
      for (int a = 0; a < out.n_actions; ++a) {
        double v = mdp.reward_at(s, a);
        const int sn = mdp.next_at(s, a);
        if (t + 1 < out.horizon && !mdp.terminal_state(sn)) {
          for (int an = 0; an < out.n_actions; ++an) {
            terms[an] = std::log(mdp.policy(sn, an)) + out.at(t + 1, sn, an);
          }
          v += gamma * log_sum_exp(std::span<const double>(terms));
        }
        out.at(t, s, a) = v;
      }
    }
  }
  return out;
}

}  // namespace criticsmc
