#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "criticsmc/critic/checkpoint.hpp"
#include "criticsmc/engine.hpp"
#include "criticsmc/environments/discrete_mdp.hpp"
#include "criticsmc/environments/pursuit_world.hpp"
#include "criticsmc/errors.hpp"

namespace criticsmc {

/// Runs critic-guided planning episodes and hands every executed transition of
/// the surviving particles to `sink`. Episodes whose particle population
/// degenerates (all weights zero) are counted and skipped.
struct CollectStats {
  std::size_t episodes = 0;
  std::size_t transitions = 0;
  std::size_t degenerate_skipped = 0;
};

template <EnvironmentModel E, class C, class Sink>
  requires CriticModel<C, E>
CollectStats collect_experience(const E& env, const C& critic, int n, int k, int episodes,
                                std::uint64_t seed, Sink&& sink) {
  CollectStats stats;
  EngineOptions opts;
  opts.record_trajectories = false;
  opts.collect_transitions = true;
  for (int ep = 0; ep < episodes; ++ep) {
    const RunSeeds seeds = RunSeeds::from(mix_seed(seed, static_cast<std::uint64_t>(ep)));
    try {
      auto res = run_critic_smc(env, critic, n, k, env.horizon(), seeds, opts);
      stats.episodes += 1;
      stats.transitions += res.particles.executed.size();
      for (auto& tr : res.particles.executed) sink(std::move(tr));
    } catch (const DegenerateParticleSystem&) {
      stats.degenerate_skipped += 1;
    }
  }
  return stats;
}

/// Fitted soft-Q (or hard-Q) iteration for a finite MDP: the critic is a
/// time-indexed table, the buffer exhaustively covers every (t, s, a), and
/// targets are K-sample TD backups against a Polyak-averaged target table.
struct TabularTrainConfig {
  double gamma = 1.0;
  double learning_rate = 0.25;
  int train_steps = 4000;
  int batch = 64;
  int k_target = 64;           // prior draws per TD target
  bool hard_targets = false;   // max backup instead of log-mean-exp
  double polyak_rho = 0.05;
};

struct TabularTrainResult {
  SoftQTable table;
  double final_loss = 0.0;
};

TabularTrainResult train_tabular_critic(const DiscreteMdp& mdp, const TabularTrainConfig& cfg,
                                        std::uint64_t seed);

/// Schedule and hyperparameters for learning the pursuit-world critic.
/// Collection episodes each instantiate a fresh world layout; evaluation uses
/// a fixed held-out seed set disjoint from collection seeds.
struct MlpTrainConfig {
  PursuitConfig env;
  // Schedule. Environment steps count actual transition calls made while
  // collecting; training steps accrue at train_steps_per_env_step once the
  // warmup budget has been collected.
  std::uint64_t total_env_steps = 60'000;
  std::uint64_t warmup_env_steps = 2'000;
  double train_steps_per_env_step = 1.0;
  std::uint64_t eval_every_env_steps = 5'000;
  std::size_t buffer_capacity = 100'000;
  int n_collect = 8;
  int k_collect = 1024;
  // Optimization.
  int batch = 256;
  double learning_rate = 1e-3;
  double gamma = 0.99;
  int k_target = 32;          // prior draws per TD target
  bool hard_targets = false;
  double polyak_rho = 0.005;
  double is_exponent_start = 0.4;  // importance-sampling exponent, annealed to 1
  std::uint64_t init_seed_tag = 0x1417;  // network init stream tag
  // Critic reward system. Rewards are floored before entering TD targets: a
  // guidance score of e^reward_floor already removes a candidate from
  // resampling, so deeper penalties add no ranking information while their
  // magnitude would squash the live-state score differences that selection
  // runs on. reward_scale only conditions the regression (targets are fitted
  // divided by it and multiplied back at evaluation).
  double reward_floor = -20.0;
  double reward_scale = 5.0;
  // Evaluation.
  int eval_episodes = 32;
  int eval_n = 50;
  int eval_k = 1024;
  // Diagnostics directory for divergence dumps ("" = system temp).
  std::string diagnostics_dir;
};

struct TrainTelemetryRow {
  std::uint64_t env_steps = 0;
  std::uint64_t train_steps = 0;
  std::uint64_t buffer_size = 0;
  double mean_td_loss = 0.0;               // mean over train steps since the last row
  double buffer_infraction_fraction = 0.0; // fraction of buffered transitions with r < 0
  double eval_infraction_rate = -1.0;      // -1 when this row carries no evaluation
  double wall_seconds = 0.0;               // since training start
  std::vector<std::uint64_t> eval_seeds;   // per-episode seeds scoring this row's eval
};

struct MlpTrainResult {
  CriticCheckpoint best;   // lowest eval infraction rate, ties by mean TD loss
  CriticCheckpoint last;
  std::vector<TrainTelemetryRow> telemetry;
  double collect_seconds = 0.0;
  double train_seconds = 0.0;
  double eval_seconds = 0.0;
};

/// Alternates experience collection (CriticSMC with the current critic) and
/// prioritized TD training. Deterministic for a fixed (cfg, seed). Throws
/// TrainingDiverged on a non-finite loss, naming a diagnostic dump file.
MlpTrainResult train_pursuit_critic(const MlpTrainConfig& cfg, std::uint64_t seed);

/// Mean infraction rate of critic-guided planning over the given episode
/// seeds: one world and one rollout per seed, scored on the best particle.
double evaluate_pursuit_critic(const PursuitConfig& env, const CriticCheckpoint& ckpt,
                               std::span<const std::uint64_t> episode_seeds, int n, int k);

}  // namespace criticsmc
