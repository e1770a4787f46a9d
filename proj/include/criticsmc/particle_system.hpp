#pragma once

#include <cstdint>
#include <vector>

namespace criticsmc {

/// One particle's realized trajectory: states[0..t], actions[0..t-1].
template <class State, class Action>
struct Trajectory {
  std::vector<State> states;
  std::vector<Action> actions;
};

/// Per-step diagnostics row.
struct StepTrace {
  int t = 0;
  double ess = 0.0;           // effective sample size of the pre-resampling weights
  double step_log_norm = 0.0; // log sum of pre-resampling weights added this step
  int infractions = 0;        // particles whose ancestry contains an infraction
  int live = 0;               // particles that were stepped (not frozen) this step
};

/// One environment step actually executed by a surviving particle. This is the
/// unit of training data: duplicated ancestors produce duplicated records, in
/// proportion to their survival count.
template <class State, class Action>
struct ExecutedTransition {
  State s;
  Action a;
  double r = 0.0;
  State s_next;
  bool terminal = false;
};

/// Weighted particle population over trajectory prefixes.
///
/// Weights are kept in factored log space: log_w_post holds locally normalized
/// post-resampling weights (-log N plus the step correction) and log_evidence_acc
/// absorbs each step's log-normalizer, so no stored magnitude ever grows with T.
/// The current marginal-likelihood estimate is
///   log_evidence_acc + log_sum_exp(log_w_post).
template <class State, class Action>
struct ParticleSystem {
  std::vector<State> states;
  std::vector<Trajectory<State, Action>> trajectories;  // empty unless recording
  std::vector<double> log_w_pre;   // last step's pre-resampling weights (N or N*K)
  std::vector<double> log_w_post;  // stored post-resampling weights (N)
  double log_evidence_acc = 0.0;
  int t = 0;  // completed steps
  std::vector<std::uint8_t> terminated;  // frozen: no further sampling or transitions
  std::vector<std::uint8_t> infracted;   // ancestry ever violated the constraint
  std::vector<ExecutedTransition<State, Action>> executed;  // filled when collecting
};

template <class State, class Action>
struct RunResult {
  ParticleSystem<State, Action> particles;
  double log_evidence = 0.0;
  int best_index = 0;  // argmax of final log_w_post, ties to the lowest index
};

}  // namespace criticsmc
