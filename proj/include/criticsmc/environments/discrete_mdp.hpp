#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "criticsmc/rng.hpp"

namespace criticsmc {

/// Finite-horizon tabular MDP with explicit transition/reward/policy tables.
/// Oracle substrate: small enough to enumerate every action sequence exactly.
/// States are time-indexed so critics can condition on remaining horizon.
/// An optional terminal mask freezes episodes early, mirroring environments
/// that stop on infraction; enumeration oracles respect it.
class DiscreteMdp {
 public:
  struct State {
    std::int32_t t = 0;
    std::int32_t s = 0;
    bool operator==(const State&) const = default;
  };
  using Action = std::int32_t;

  DiscreteMdp(int n_states, int n_actions, int horizon, std::vector<int> next,
              std::vector<double> reward, std::vector<double> policy, std::vector<double> p0,
              std::vector<std::uint8_t> terminal_mask = {});

  State sample_initial(Xoshiro256& rng) const;
  State transition(const State& s, const Action& a) const {
    return State{s.t + 1, next_[flat(s.s, a)]};
  }
  double reward(const State& s, const Action& a, const State&) const {
    return reward_[flat(s.s, a)];
  }
  bool constraint_ok(const State&) const { return true; }
  bool terminal(const State& s) const { return terminal_mask_[s.s] != 0; }
  int horizon() const { return horizon_; }
  void prior_sample(const State& s, Xoshiro256& rng, std::span<Action> out) const;

  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  double policy(int s, int a) const { return policy_[flat(s, a)]; }
  double reward_at(int s, int a) const { return reward_[flat(s, a)]; }
  int next_at(int s, int a) const { return next_[flat(s, a)]; }
  double p0(int s) const { return p0_[s]; }
  bool terminal_state(int s) const { return terminal_mask_[s] != 0; }

 private:
  std::size_t flat(int s, int a) const {
    return static_cast<std::size_t>(s) * n_actions_ + a;
  }

  int n_states_;
  int n_actions_;
  int horizon_;
  std::vector<int> next_;
  std::vector<double> reward_;
  std::vector<double> policy_;
  std::vector<double> p0_;
  std::vector<std::uint8_t> terminal_mask_;
};

/// Exact p(O_{1:T}) by summing prior probability times exp(total reward) over
/// every realizable action sequence (recursion handles early termination).
double enumerate_log_evidence(const DiscreteMdp& mdp);

/// Exact p(O_{1:T} | s_1 = s, a_1 = a): first action forced, rest enumerated.
double enumerate_log_conditional(const DiscreteMdp& mdp, int s, int a);

/// Time-indexed exact soft-Q table from the backward recursion
/// Q_t(s,a) = r(s,a) + gamma * log sum_a' pi(a'|s') exp Q_{t+1}(s',a'),
/// with Q at the final step equal to the immediate reward and terminal next
/// states contributing no continuation term.
struct SoftQTable {
  int horizon = 0;
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> q;  // [t][s][a]

  double at(int t, int s, int a) const {
    return q[(static_cast<std::size_t>(t) * n_states + s) * n_actions + a];
  }
  double& at(int t, int s, int a) {
    return q[(static_cast<std::size_t>(t) * n_states + s) * n_actions + a];
  }
};

SoftQTable soft_q_exact(const DiscreteMdp& mdp, double gamma);

/// Critic view over an exact (or fitted) time-indexed Q table.
class TableCritic {
 public:
  explicit TableCritic(SoftQTable table) : table_(std::move(table)) {}

  void evaluate(const DiscreteMdp::State& s, std::span<const DiscreteMdp::Action> actions,
                std::span<double> out) const {
    for (std::size_t i = 0; i < actions.size(); ++i) {
      out[i] = s.t < table_.horizon ? table_.at(s.t, s.s, actions[i]) : 0.0;
    }
  }

  const SoftQTable& table() const { return table_; }

 private:
  SoftQTable table_;
};

}  // namespace criticsmc
