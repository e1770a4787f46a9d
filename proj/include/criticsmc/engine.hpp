#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "criticsmc/math.hpp"
#include "criticsmc/particle_system.hpp"
#include "criticsmc/resampling.hpp"
#include "criticsmc/rng.hpp"

namespace criticsmc {

/// Deterministic-transition environment: stochasticity lives entirely in the
/// initial-state sampler and the prior policy sampler.
template <class E>
concept EnvironmentModel = requires(const E e, const typename E::State& s,
                                    const typename E::Action& a, Xoshiro256& rng,
                                    std::span<typename E::Action> out) {
  typename E::State;
  typename E::Action;
  { e.sample_initial(rng) } -> std::same_as<typename E::State>;
  { e.transition(s, a) } -> std::same_as<typename E::State>;
  { e.reward(s, a, s) } -> std::convertible_to<double>;
  { e.constraint_ok(s) } -> std::convertible_to<bool>;
  { e.terminal(s) } -> std::convertible_to<bool>;
  { e.horizon() } -> std::convertible_to<int>;
  e.prior_sample(s, rng, out);
};

/// Batch evaluator of Q(s, a) = log p(O_{t:T} | s_t = s, a_t = a).
template <class C, class E>
concept CriticModel = requires(const C c, const typename E::State& s,
                               std::span<const typename E::Action> actions,
                               std::span<double> out) {
  c.evaluate(s, actions, out);
};

struct ZeroCritic {
  template <class State, class Action>
  void evaluate(const State&, std::span<const Action> actions, std::span<double> out) const {
    for (std::size_t i = 0; i < actions.size(); ++i) out[i] = 0.0;
  }
};

/// Two independent seeds so callers can share initial conditions across runs
/// (same init, different dynamics). from(seed) derives both from one value.
struct RunSeeds {
  std::uint64_t init = 0;
  std::uint64_t dynamics = 0;
  static RunSeeds from(std::uint64_t seed) {
    return RunSeeds{mix_seed(seed, 0x5eedU), mix_seed(seed, 0xd15eU)};
  }
};

struct EngineOptions {
  ResamplingVariant resampling = ResamplingVariant::systematic;
  bool record_trajectories = true;
  bool collect_transitions = false;  // fill ParticleSystem::executed with survivor steps
  std::vector<StepTrace>* trace = nullptr;
};

namespace detail {

template <EnvironmentModel E>
ParticleSystem<typename E::State, typename E::Action> init_system(const E& env, int n,
                                                                  Xoshiro256& init_rng,
                                                                  bool record) {
  ParticleSystem<typename E::State, typename E::Action> sys;
  sys.states.reserve(n);
  for (int i = 0; i < n; ++i) sys.states.push_back(env.sample_initial(init_rng));
  sys.log_w_post.assign(n, -std::log(static_cast<double>(n)));
  sys.terminated.resize(n);
  sys.infracted.resize(n);
  for (int i = 0; i < n; ++i) {
    sys.terminated[i] = env.terminal(sys.states[i]) ? 1 : 0;
    sys.infracted[i] = env.constraint_ok(sys.states[i]) ? 0 : 1;
  }
  if (record) {
    sys.trajectories.resize(n);
    for (int i = 0; i < n; ++i) sys.trajectories[i].states.push_back(sys.states[i]);
  }
  return sys;
}

template <class State, class Action>
RunResult<State, Action> finalize(ParticleSystem<State, Action>&& sys) {
  RunResult<State, Action> out;
  out.log_evidence = sys.log_evidence_acc + log_sum_exp(std::span<const double>(sys.log_w_post));
  out.best_index = 0;
  for (std::size_t i = 1; i < sys.log_w_post.size(); ++i) {
    if (sys.log_w_post[i] > sys.log_w_post[out.best_index]) out.best_index = static_cast<int>(i);
  }
  out.particles = std::move(sys);
  return out;
}

template <class State, class Action>
void push_trace(const EngineOptions& opts, const ParticleSystem<State, Action>& sys, int t,
                std::span<const double> pre, double step_log_norm, int live) {
  if (opts.trace == nullptr) return;
  int infractions = 0;
  for (auto f : sys.infracted) infractions += f;
  opts.trace->push_back(StepTrace{t, effective_sample_size(pre), step_log_norm, infractions, live});
}

inline bool all_terminated(const std::vector<std::uint8_t>& term) {
  for (auto f : term) {
    if (!f) return false;
  }
  return true;
}

/// Pre-resampling weight of one putative slot; shared by run_critic_smc and
/// model_free_control so their arithmetic is bit-identical.
inline double putative_pre_weight(double log_w, double log_k, double q) {
  return log_w - log_k + q;
}

}  // namespace detail

/// Plain bootstrap SMC: sample an action from the prior, step, weight by the
/// reward, resample, reset weights to uniform. Terminated particles are frozen:
/// they skip sampling and transitions and carry their weight unchanged into
/// resampling. Each step's log-normalizer accumulates into the evidence estimate.
template <EnvironmentModel E>
RunResult<typename E::State, typename E::Action> run_smc(const E& env, int n_particles,
                                                         int horizon, RunSeeds seeds,
                                                         const EngineOptions& opts = {}) {
  using State = typename E::State;
  using Action = typename E::Action;
  const int n = n_particles;
  auto init_rng = make_stream(seeds.init, Stream::init);
  auto prop_rng = make_stream(seeds.dynamics, Stream::proposal);
  auto res_rng = make_stream(seeds.dynamics, Stream::resample);

  auto sys = detail::init_system(env, n, init_rng, opts.record_trajectories);
  std::vector<Action> actions(n);
  std::vector<State> candidates(n);
  std::vector<double> pre(n), r_step(n);
  std::vector<State> next_states(n);
  std::vector<double> next_w(n);
  std::vector<std::uint8_t> next_term(n), next_inf(n);
  std::vector<Trajectory<State, Action>> next_traj;

  for (int t = 1; t <= horizon; ++t) {
    if (detail::all_terminated(sys.terminated)) break;
    int live = 0;
    for (int i = 0; i < n; ++i) {
      if (sys.terminated[i]) {
        candidates[i] = sys.states[i];
        pre[i] = sys.log_w_post[i];
        continue;
      }
      ++live;
      env.prior_sample(sys.states[i], prop_rng, std::span<Action>(&actions[i], 1));
      candidates[i] = env.transition(sys.states[i], actions[i]);
      r_step[i] = env.reward(sys.states[i], actions[i], candidates[i]);
      pre[i] = sys.log_w_post[i] + r_step[i];
    }
    const double step_norm = log_sum_exp(std::span<const double>(pre));
    sys.log_evidence_acc += step_norm;
    const AncestorIndices alpha = resample(pre, n, opts.resampling, res_rng);

    const double neg_log_n = -std::log(static_cast<double>(n));
    if (opts.record_trajectories) next_traj.assign(n, {});
    for (int m = 0; m < n; ++m) {
      const std::uint32_t a = alpha[m];
      next_states[m] = candidates[a];
      next_w[m] = neg_log_n;
      if (sys.terminated[a]) {
        next_term[m] = 1;
        next_inf[m] = sys.infracted[a];
      } else {
        next_term[m] = env.terminal(candidates[a]) ? 1 : 0;
        next_inf[m] = (sys.infracted[a] || !env.constraint_ok(candidates[a])) ? 1 : 0;
        if (opts.collect_transitions) {
          sys.executed.push_back(
              {sys.states[a], actions[a], r_step[a], candidates[a], next_term[m] != 0});
        }
      }
      if (opts.record_trajectories) {
        next_traj[m] = sys.trajectories[a];
        if (!sys.terminated[a]) {
          next_traj[m].actions.push_back(actions[a]);
          next_traj[m].states.push_back(candidates[a]);
        }
      }
    }
    sys.states.swap(next_states);
    sys.log_w_post.swap(next_w);
    sys.terminated.swap(next_term);
    sys.infracted.swap(next_inf);
    if (opts.record_trajectories) sys.trajectories.swap(next_traj);
    sys.log_w_pre.assign(pre.begin(), pre.end());
    sys.t = t;
    detail::push_trace(opts, sys, t, pre, step_norm, live);
  }
  return detail::finalize(std::move(sys));
}

/// SMC with a K-fold putative expansion but no critic: every putative action is
/// stepped through the environment (N*K transition calls per step) and weighted
/// by its immediate reward; N survivors are resampled from the N*K population.
template <EnvironmentModel E>
RunResult<typename E::State, typename E::Action> run_smc_putative(
    const E& env, int n_particles, int n_putative, int horizon, RunSeeds seeds,
    const EngineOptions& opts = {}) {
  using State = typename E::State;
  using Action = typename E::Action;
  const int n = n_particles;
  const int k = n_putative;
  const std::size_t pop = static_cast<std::size_t>(n) * k;
  auto init_rng = make_stream(seeds.init, Stream::init);
  auto prop_rng = make_stream(seeds.dynamics, Stream::proposal);
  auto res_rng = make_stream(seeds.dynamics, Stream::resample);

  auto sys = detail::init_system(env, n, init_rng, opts.record_trajectories);
  std::vector<Action> actions(pop);
  std::vector<State> candidates(pop);
  std::vector<double> pre(pop), r_step(pop);
  std::vector<State> next_states(n);
  std::vector<double> next_w(n);
  std::vector<std::uint8_t> next_term(n), next_inf(n);
  std::vector<Trajectory<State, Action>> next_traj;
  const double log_k = std::log(static_cast<double>(k));

  for (int t = 1; t <= horizon; ++t) {
    if (detail::all_terminated(sys.terminated)) break;
    int live = 0;
    for (int i = 0; i < n; ++i) {
      const std::size_t base = static_cast<std::size_t>(i) * k;
      if (sys.terminated[i]) {
        for (int j = 0; j < k; ++j) pre[base + j] = sys.log_w_post[i] - log_k;
        continue;
      }
      ++live;
      env.prior_sample(sys.states[i], prop_rng, std::span<Action>(&actions[base], k));
      for (int j = 0; j < k; ++j) {
        candidates[base + j] = env.transition(sys.states[i], actions[base + j]);
        r_step[base + j] = env.reward(sys.states[i], actions[base + j], candidates[base + j]);
        pre[base + j] = sys.log_w_post[i] - log_k + r_step[base + j];
      }
    }
    const double step_norm = log_sum_exp(std::span<const double>(pre));
    sys.log_evidence_acc += step_norm;
    const AncestorIndices alpha = resample(pre, n, opts.resampling, res_rng);

    const double neg_log_n = -std::log(static_cast<double>(n));
    if (opts.record_trajectories) next_traj.assign(n, {});
    for (int m = 0; m < n; ++m) {
      const std::uint32_t i = flat_index_decode(alpha[m], static_cast<std::uint32_t>(k),
                                                static_cast<std::uint32_t>(pop))
                                  .particle;
      const std::size_t flat = alpha[m];
      next_w[m] = neg_log_n;
      if (sys.terminated[i]) {
        next_states[m] = sys.states[i];
        next_term[m] = 1;
        next_inf[m] = sys.infracted[i];
        if (opts.record_trajectories) next_traj[m] = sys.trajectories[i];
      } else {
        next_states[m] = candidates[flat];
        next_term[m] = env.terminal(candidates[flat]) ? 1 : 0;
        next_inf[m] = (sys.infracted[i] || !env.constraint_ok(candidates[flat])) ? 1 : 0;
        if (opts.collect_transitions) {
          sys.executed.push_back(
              {sys.states[i], actions[flat], r_step[flat], candidates[flat], next_term[m] != 0});
        }
        if (opts.record_trajectories) {
          next_traj[m] = sys.trajectories[i];
          next_traj[m].actions.push_back(actions[flat]);
          next_traj[m].states.push_back(candidates[flat]);
        }
      }
    }
    sys.states.swap(next_states);
    sys.log_w_post.swap(next_w);
    sys.terminated.swap(next_term);
    sys.infracted.swap(next_inf);
    if (opts.record_trajectories) sys.trajectories.swap(next_traj);
    sys.log_w_pre.assign(pre.begin(), pre.end());
    sys.t = t;
    detail::push_trace(opts, sys, t, pre, step_norm, live);
  }
  return detail::finalize(std::move(sys));
}

namespace detail {

/// Soft value: log (1/J) sum_j exp Q(s, a_j) over J prior-sampled actions.
template <EnvironmentModel E, CriticModel<E> C>
double soft_value(const E& env, const C& critic, const typename E::State& s, int j_samples,
                  Xoshiro256& rng, std::vector<typename E::Action>& action_scratch,
                  std::vector<double>& q_scratch) {
  action_scratch.resize(j_samples);
  q_scratch.resize(j_samples);
  env.prior_sample(s, rng, std::span<typename E::Action>(action_scratch));
  critic.evaluate(s, std::span<const typename E::Action>(action_scratch),
                  std::span<double>(q_scratch));
  return log_sum_exp(std::span<const double>(q_scratch)) -
         std::log(static_cast<double>(j_samples));
}

}  // namespace detail

/// Value-heuristic SMC: plain SMC with a pre-resampling factor
/// h_t = V(s_{t+1}) - V(s_t) that is subtracted back out after resampling, so the
/// evidence estimate is unchanged in expectation. V is the soft approximation
/// over j_samples prior actions; terminal states have V = 0 (no likelihood ahead).
/// Soft-V draws come from the critic stream so a zero critic reproduces run_smc
/// draw-for-draw.
template <EnvironmentModel E, CriticModel<E> C>
RunResult<typename E::State, typename E::Action> run_smc_value_heuristic(
    const E& env, const C& critic, int n_particles, int j_samples, int horizon, RunSeeds seeds,
    const EngineOptions& opts = {}) {
  using State = typename E::State;
  using Action = typename E::Action;
  const int n = n_particles;
  auto init_rng = make_stream(seeds.init, Stream::init);
  auto prop_rng = make_stream(seeds.dynamics, Stream::proposal);
  auto res_rng = make_stream(seeds.dynamics, Stream::resample);
  auto critic_rng = make_stream(seeds.dynamics, Stream::critic);

  auto sys = detail::init_system(env, n, init_rng, opts.record_trajectories);
  std::vector<Action> action_scratch;
  std::vector<double> q_scratch;
  std::vector<double> v_cur(n);
  for (int i = 0; i < n; ++i) {
    v_cur[i] = sys.terminated[i] ? 0.0
                                 : detail::soft_value(env, critic, sys.states[i], j_samples,
                                                      critic_rng, action_scratch, q_scratch);
  }
  std::vector<Action> actions(n);
  std::vector<State> candidates(n);
  std::vector<double> pre(n), h(n), v_hat(n), r_step(n);
  std::vector<State> next_states(n);
  std::vector<double> next_w(n), next_v(n);
  std::vector<std::uint8_t> next_term(n), next_inf(n);
  std::vector<Trajectory<State, Action>> next_traj;

  for (int t = 1; t <= horizon; ++t) {
    if (detail::all_terminated(sys.terminated)) break;
    int live = 0;
    for (int i = 0; i < n; ++i) {
      if (sys.terminated[i]) {
        candidates[i] = sys.states[i];
        h[i] = 0.0;
        v_hat[i] = v_cur[i];
        pre[i] = sys.log_w_post[i];
        continue;
      }
      ++live;
      env.prior_sample(sys.states[i], prop_rng, std::span<Action>(&actions[i], 1));
      candidates[i] = env.transition(sys.states[i], actions[i]);
      r_step[i] = env.reward(sys.states[i], actions[i], candidates[i]);
      v_hat[i] = env.terminal(candidates[i])
                     ? 0.0
                     : detail::soft_value(env, critic, candidates[i], j_samples, critic_rng,
                                          action_scratch, q_scratch);
      h[i] = v_hat[i] - v_cur[i];
      pre[i] = sys.log_w_post[i] + r_step[i] + h[i];
    }
    const double step_norm = log_sum_exp(std::span<const double>(pre));
    sys.log_evidence_acc += step_norm;
    const AncestorIndices alpha = resample(pre, n, opts.resampling, res_rng);

    const double neg_log_n = -std::log(static_cast<double>(n));
    if (opts.record_trajectories) next_traj.assign(n, {});
    for (int m = 0; m < n; ++m) {
      const std::uint32_t a = alpha[m];
      next_states[m] = candidates[a];
      next_w[m] = neg_log_n - h[a];
      next_v[m] = v_hat[a];
      if (sys.terminated[a]) {
        next_term[m] = 1;
        next_inf[m] = sys.infracted[a];
      } else {
        next_term[m] = env.terminal(candidates[a]) ? 1 : 0;
        next_inf[m] = (sys.infracted[a] || !env.constraint_ok(candidates[a])) ? 1 : 0;
        if (opts.collect_transitions) {
          sys.executed.push_back(
              {sys.states[a], actions[a], r_step[a], candidates[a], next_term[m] != 0});
        }
      }
      if (opts.record_trajectories) {
        next_traj[m] = sys.trajectories[a];
        if (!sys.terminated[a]) {
          next_traj[m].actions.push_back(actions[a]);
          next_traj[m].states.push_back(candidates[a]);
        }
      }
    }
    sys.states.swap(next_states);
    sys.log_w_post.swap(next_w);
    v_cur.swap(next_v);
    sys.terminated.swap(next_term);
    sys.infracted.swap(next_inf);
    if (opts.record_trajectories) sys.trajectories.swap(next_traj);
    sys.log_w_pre.assign(pre.begin(), pre.end());
    sys.t = t;
    detail::push_trace(opts, sys, t, pre, step_norm, live);
  }
  return detail::finalize(std::move(sys));
}

/// CriticSMC: each particle samples K putative actions scored by the critic
/// BEFORE any transition; N ancestors are resampled from the N*K pre-weights
/// (1/K) * w * exp(Q); only the N survivors are stepped through the environment,
/// and the critic factor is subtracted back out in the post-resampling weight
/// (1/N) * exp(r - Q). Exactly N transition and N*K critic calls per step while
/// all particles are live.
template <EnvironmentModel E, CriticModel<E> C>
RunResult<typename E::State, typename E::Action> run_critic_smc(const E& env, const C& critic,
                                                                int n_particles, int n_putative,
                                                                int horizon, RunSeeds seeds,
                                                                const EngineOptions& opts = {}) {
  using State = typename E::State;
  using Action = typename E::Action;
  const int n = n_particles;
  const int k = n_putative;
  const std::size_t pop = static_cast<std::size_t>(n) * k;
  auto init_rng = make_stream(seeds.init, Stream::init);
  auto prop_rng = make_stream(seeds.dynamics, Stream::proposal);
  auto res_rng = make_stream(seeds.dynamics, Stream::resample);

  auto sys = detail::init_system(env, n, init_rng, opts.record_trajectories);
  std::vector<Action> actions(pop);
  std::vector<double> q(pop);
  std::vector<double> pre(pop);
  std::vector<State> next_states(n);
  std::vector<double> next_w(n);
  std::vector<std::uint8_t> next_term(n), next_inf(n);
  std::vector<Trajectory<State, Action>> next_traj;
  const double log_k = std::log(static_cast<double>(k));
  const double neg_log_n = -std::log(static_cast<double>(n));

  for (int t = 1; t <= horizon; ++t) {
    if (detail::all_terminated(sys.terminated)) break;
    int live = 0;
    for (int i = 0; i < n; ++i) {
      const std::size_t base = static_cast<std::size_t>(i) * k;
      if (sys.terminated[i]) {
        for (int j = 0; j < k; ++j) pre[base + j] = sys.log_w_post[i] - log_k;
        continue;
      }
      ++live;
      env.prior_sample(sys.states[i], prop_rng, std::span<Action>(&actions[base], k));
      critic.evaluate(sys.states[i], std::span<const Action>(&actions[base], k),
                      std::span<double>(&q[base], k));
      for (int j = 0; j < k; ++j) {
        pre[base + j] = detail::putative_pre_weight(sys.log_w_post[i], log_k, q[base + j]);
      }
    }
    const double step_norm = log_sum_exp(std::span<const double>(pre));
    sys.log_evidence_acc += step_norm;
    const AncestorIndices alpha = resample(pre, n, opts.resampling, res_rng);

    if (opts.record_trajectories) next_traj.assign(n, {});
    for (int m = 0; m < n; ++m) {
      const FlatIndex fi = flat_index_decode(alpha[m], static_cast<std::uint32_t>(k),
                                             static_cast<std::uint32_t>(pop));
      const std::uint32_t i = fi.particle;
      if (sys.terminated[i]) {
        next_states[m] = sys.states[i];
        next_w[m] = neg_log_n;
        next_term[m] = 1;
        next_inf[m] = sys.infracted[i];
        if (opts.record_trajectories) next_traj[m] = sys.trajectories[i];
      } else {
        const Action& act = actions[alpha[m]];
        next_states[m] = env.transition(sys.states[i], act);
        const double r = env.reward(sys.states[i], act, next_states[m]);
        next_w[m] = neg_log_n + (r - q[alpha[m]]);
        next_term[m] = env.terminal(next_states[m]) ? 1 : 0;
        next_inf[m] = (sys.infracted[i] || !env.constraint_ok(next_states[m])) ? 1 : 0;
        if (opts.collect_transitions) {
          sys.executed.push_back({sys.states[i], act, r, next_states[m], next_term[m] != 0});
        }
        if (opts.record_trajectories) {
          next_traj[m] = sys.trajectories[i];
          next_traj[m].actions.push_back(act);
          next_traj[m].states.push_back(next_states[m]);
        }
      }
    }
    sys.states.swap(next_states);
    sys.log_w_post.swap(next_w);
    sys.terminated.swap(next_term);
    sys.infracted.swap(next_inf);
    if (opts.record_trajectories) sys.trajectories.swap(next_traj);
    sys.log_w_pre.assign(pre.begin(), pre.end());
    sys.t = t;
    detail::push_trace(opts, sys, t, pre, step_norm, live);
  }
  return detail::finalize(std::move(sys));
}

/// Model-free control: single-particle CriticSMC executed live. Per step, K
/// putative actions are drawn and scored, one is selected by resampling over the
/// critic-weighted pre-weights, and it is executed immediately; no lookahead and
/// no world-model rollouts. Shares the pre-weight arithmetic with run_critic_smc
/// so the two are trajectory-identical under shared seeds at N=1.
template <EnvironmentModel E, CriticModel<E> C>
RunResult<typename E::State, typename E::Action> model_free_control(
    const E& env, const C& critic, int n_putative, int horizon, RunSeeds seeds,
    const EngineOptions& opts = {}) {
  using State = typename E::State;
  using Action = typename E::Action;
  const int k = n_putative;
  auto init_rng = make_stream(seeds.init, Stream::init);
  auto prop_rng = make_stream(seeds.dynamics, Stream::proposal);
  auto res_rng = make_stream(seeds.dynamics, Stream::resample);

  auto sys = detail::init_system(env, 1, init_rng, opts.record_trajectories);
  std::vector<Action> actions(k);
  std::vector<double> q(k);
  std::vector<double> pre(k);
  const double log_k = std::log(static_cast<double>(k));
  const double neg_log_n = -std::log(1.0);

  for (int t = 1; t <= horizon; ++t) {
    if (sys.terminated[0]) break;
    env.prior_sample(sys.states[0], prop_rng, std::span<Action>(actions));
    critic.evaluate(sys.states[0], std::span<const Action>(actions), std::span<double>(q));
    for (int j = 0; j < k; ++j) {
      pre[j] = detail::putative_pre_weight(sys.log_w_post[0], log_k, q[j]);
    }
    const double step_norm = log_sum_exp(std::span<const double>(pre));
    sys.log_evidence_acc += step_norm;
    const AncestorIndices alpha = resample(pre, 1, opts.resampling, res_rng);
    const std::uint32_t sel = alpha[0];

    const Action act = actions[sel];
    const State prev = sys.states[0];
    sys.states[0] = env.transition(prev, act);
    const double r = env.reward(prev, act, sys.states[0]);
    sys.log_w_post[0] = neg_log_n + (r - q[sel]);
    sys.terminated[0] = env.terminal(sys.states[0]) ? 1 : 0;
    if (opts.collect_transitions) {
      sys.executed.push_back({prev, act, r, sys.states[0], sys.terminated[0] != 0});
    }
    sys.infracted[0] = (sys.infracted[0] || !env.constraint_ok(sys.states[0])) ? 1 : 0;
    if (opts.record_trajectories) {
      sys.trajectories[0].actions.push_back(act);
      sys.trajectories[0].states.push_back(sys.states[0]);
    }
    sys.log_w_pre.assign(pre.begin(), pre.end());
    sys.t = t;
    detail::push_trace(opts, sys, t, pre, step_norm, 1);
  }
  return detail::finalize(std::move(sys));
}

}  // namespace criticsmc
