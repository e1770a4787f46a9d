#include "criticsmc/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>

#include <nlohmann/json.hpp>

#include "criticsmc/critic/adam.hpp"
#include "criticsmc/critic/pursuit_critic.hpp"
#include "criticsmc/critic/replay.hpp"
#include "criticsmc/critic/targets.hpp"

namespace criticsmc {

namespace {

/// Non-owning critic view over a Q table, so Polyak blends do not copy it.
struct TableViewCritic {
  const SoftQTable* table;

  void evaluate(const DiscreteMdp::State& s, std::span<const DiscreteMdp::Action> actions,
                std::span<double> out) const {
    for (std::size_t i = 0; i < actions.size(); ++i) {
      out[i] = s.t < table->horizon ? table->at(s.t, s.s, actions[i]) : 0.0;
    }
  }
};

struct TabularItem {
  DiscreteMdp::State s;
  DiscreteMdp::Action a = 0;
  double r = 0.0;
  DiscreteMdp::State s_next;
  bool terminal = false;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

TabularTrainResult train_tabular_critic(const DiscreteMdp& mdp, const TabularTrainConfig& cfg,
                                        std::uint64_t seed) {
  if (cfg.train_steps < 1 || cfg.batch < 1 || cfg.k_target < 1) {
    throw ConfigError("train_tabular_critic: counts must be positive");
  }
  if (!(cfg.learning_rate > 0.0) || !(cfg.gamma > 0.0 && cfg.gamma <= 1.0) ||
      !(cfg.polyak_rho > 0.0 && cfg.polyak_rho <= 1.0)) {
    throw ConfigError("train_tabular_critic: bad hyperparameters");
  }

  // Exhaustive buffer: one entry per reachable (t, s, a) with s non-terminal.
  std::vector<TabularItem> buffer;
  for (int t = 0; t < mdp.horizon(); ++t) {
    for (int s = 0; s < mdp.n_states(); ++s) {
      if (mdp.terminal_state(s)) continue;
      for (int a = 0; a < mdp.n_actions(); ++a) {
        TabularItem it;
        it.s = {t, s};
        it.a = a;
        it.s_next = mdp.transition(it.s, a);
        it.r = mdp.reward(it.s, a, it.s_next);
        it.terminal = it.s_next.t >= mdp.horizon() || mdp.terminal(it.s_next);
        buffer.push_back(it);
      }
    }
  }

  SoftQTable online;
  online.horizon = mdp.horizon();
  online.n_states = mdp.n_states();
  online.n_actions = mdp.n_actions();
  online.q.assign(static_cast<std::size_t>(online.horizon) * online.n_states * online.n_actions,
                  0.0);
  SoftQTable target = online;
  const TableViewCritic target_view{&target};

  Xoshiro256 rng(mix_seed(seed, 0x7ab1eU));
  double loss_acc = 0.0;
  std::size_t loss_n = 0;
  const int tail_start = cfg.train_steps - std::max(1, cfg.train_steps / 10);
  for (int step = 0; step < cfg.train_steps; ++step) {
    // Learning rate decays toward a third of its initial value so the sampled
    // target noise stops dominating the late iterations.
    const double lr =
        cfg.learning_rate / (1.0 + 2.0 * static_cast<double>(step) / cfg.train_steps);
    double batch_loss = 0.0;
    for (int b = 0; b < cfg.batch; ++b) {
      const auto& it = buffer[rng.uniform_index(buffer.size())];
      const double y =
          cfg.hard_targets
              ? hard_q_target(it.r, it.s_next, it.terminal, mdp, target_view, cfg.k_target,
                              cfg.gamma, rng)
              : soft_q_target(it.r, it.s_next, it.terminal, mdp, target_view, cfg.k_target,
                              cfg.gamma, rng);
      double& q = online.at(it.s.t, it.s.s, it.a);
      const double d = q - y;
      batch_loss += d * d;
      q -= lr * d;
    }
    for (std::size_t i = 0; i < online.q.size(); ++i) {
      target.q[i] = (1.0 - cfg.polyak_rho) * target.q[i] + cfg.polyak_rho * online.q[i];
    }
    if (step >= tail_start) {
      loss_acc += batch_loss / cfg.batch;
      loss_n += 1;
    }
  }
  return TabularTrainResult{std::move(online), loss_acc / static_cast<double>(loss_n)};
}

namespace {

struct PursuitTransition {
  std::shared_ptr<const PursuitWorld> world;
  PursuitWorld::State s;
  Vec2 a;
  double r = 0.0;
  PursuitWorld::State s_next;
  bool terminal = false;
};

std::string write_divergence_dump(const std::string& dir_hint, std::uint64_t seed,
                                  std::uint64_t train_steps, std::uint64_t env_steps,
                                  double loss, std::span<const double> q_pred,
                                  std::span<const double> targets) {
  namespace fs = std::filesystem;
  fs::path dir = dir_hint.empty() ? fs::temp_directory_path() : fs::path(dir_hint);
  std::error_code ec;
  fs::create_directories(dir, ec);
  const fs::path path = dir / ("criticsmc-divergence-" + std::to_string(seed) + ".json");
  nlohmann::json j;
  j["train_steps"] = train_steps;
  j["env_steps"] = env_steps;
  j["loss"] = loss;
  j["q_pred"] = std::vector<double>(q_pred.begin(), q_pred.end());
  j["targets"] = std::vector<double>(targets.begin(), targets.end());
  std::ofstream out(path);
  out << j.dump(1) << '\n';
  return path.string();
}

}  // namespace

double evaluate_pursuit_critic(const PursuitConfig& env, const CriticCheckpoint& ckpt,
                               std::span<const std::uint64_t> episode_seeds, int n, int k) {
  if (episode_seeds.empty()) throw ConfigError("evaluate_pursuit_critic: no episode seeds");
  const MlpNet net = ckpt.to_net();
  EngineOptions opts;
  opts.record_trajectories = false;
  std::size_t infractions = 0;
  for (const std::uint64_t es : episode_seeds) {
    const PursuitWorld world(env, mix_seed(es, 1));
    const PursuitMlpCritic critic(world, net, ckpt.action_scale, ckpt.reward_scale);
    const RunSeeds seeds = RunSeeds::from(mix_seed(es, 2));
    try {
      const auto res = run_critic_smc(world, critic, n, k, world.horizon(), seeds, opts);
      if (res.particles.infracted[static_cast<std::size_t>(res.best_index)] != 0) {
        infractions += 1;
      }
    } catch (const DegenerateParticleSystem&) {
      infractions += 1;  // no weighable survivor: score as a failure
    }
  }
  return static_cast<double>(infractions) / static_cast<double>(episode_seeds.size());
}

MlpTrainResult train_pursuit_critic(const MlpTrainConfig& cfg, std::uint64_t seed) {
  if (cfg.warmup_env_steps > cfg.total_env_steps) {
    throw ConfigError("train_pursuit_critic: warmup exceeds total env steps");
  }
  if (cfg.total_env_steps == 0 || cfg.batch < 1 || cfg.k_target < 1 || cfg.n_collect < 1 ||
      cfg.k_collect < 1 || cfg.eval_episodes < 1 || cfg.eval_n < 1 || cfg.eval_k < 1 ||
      cfg.buffer_capacity == 0 || cfg.eval_every_env_steps == 0) {
    throw ConfigError("train_pursuit_critic: counts must be positive");
  }
  if (!(cfg.train_steps_per_env_step >= 0.0) || !(cfg.gamma > 0.0 && cfg.gamma <= 1.0) ||
      !(cfg.polyak_rho > 0.0 && cfg.polyak_rho <= 1.0) ||
      !(cfg.is_exponent_start >= 0.0 && cfg.is_exponent_start <= 1.0)) {
    throw ConfigError("train_pursuit_critic: bad hyperparameters");
  }

  if (!(cfg.reward_floor < 0.0) || !(cfg.reward_scale > 0.0)) {
    throw ConfigError("train_pursuit_critic: reward_floor must be negative and "
                      "reward_scale positive");
  }

  const double action_scale = cfg.env.max_step;
  const double reward_scale = cfg.reward_scale;
  const double v_min = cfg.gamma < 1.0 ? cfg.reward_floor / (1.0 - cfg.gamma)
                                       : cfg.reward_floor * (cfg.env.horizon + 1);
  const auto t0 = std::chrono::steady_clock::now();

  // Feature dimension depends only on the config, not on the layout seed.
  const int feature_dim = PursuitWorld(cfg.env, 0).feature_dim();
  const MlpDims dims{feature_dim, 2, 64};
  MlpNet online(dims, mix_seed(seed, cfg.init_seed_tag));
  MlpNet target = online;
  MlpNet grads = MlpNet::zeros_like(online);
  AdamOptimizer opt(online.param_count(), AdamConfig{.learning_rate = cfg.learning_rate});
  PrioritizedReplay<PursuitTransition> buffer(
      ReplayConfig{.capacity = cfg.buffer_capacity});
  Xoshiro256 train_rng(mix_seed(seed, 0x7e57U));

  std::vector<std::uint64_t> eval_seeds(static_cast<std::size_t>(cfg.eval_episodes));
  for (std::size_t i = 0; i < eval_seeds.size(); ++i) {
    eval_seeds[i] = mix_seed(seed, {0xeba1U, i});
  }

  MlpTrainResult result;
  std::uint64_t env_steps = 0;
  std::uint64_t effective_prev = 0;
  std::uint64_t train_steps = 0;
  std::uint64_t episode = 0;
  double debt = 0.0;
  double loss_acc = 0.0;
  std::size_t loss_n = 0;
  double best_rate = std::numeric_limits<double>::infinity();
  double best_loss = std::numeric_limits<double>::infinity();
  std::uint64_t next_eval = cfg.eval_every_env_steps;
  const double total_train_est = std::max(
      1.0, static_cast<double>(cfg.total_env_steps - cfg.warmup_env_steps) *
               cfg.train_steps_per_env_step);

  // Scratch for one training batch.
  const int batch_n = cfg.batch;
  Eigen::MatrixXd bs(feature_dim, batch_n);
  Eigen::MatrixXd ba(2, batch_n);
  std::vector<double> targets_scaled(static_cast<std::size_t>(batch_n));
  Eigen::RowVectorXd q_pred;
  MlpNet::Cache cache;
  std::vector<double> params(online.param_count());
  std::vector<double> grad_flat(online.param_count());

  const auto buffer_infraction_fraction = [&]() {
    if (buffer.size() == 0) return 0.0;
    std::size_t bad = 0;
    for (std::size_t i = 0; i < buffer.size(); ++i) {
      if (buffer[i].r < 0.0) bad += 1;
    }
    return static_cast<double>(bad) / static_cast<double>(buffer.size());
  };

  const auto make_checkpoint = [&](double rate, double td) {
    CriticCheckpoint ckpt = CriticCheckpoint::from_net(online);
    ckpt.action_scale = action_scale;
    ckpt.reward_scale = reward_scale;
    ckpt.gamma = cfg.gamma;
    ckpt.feature_layout = "displacements:adversaries-nearest-first,gates-by-x,goal";
    ckpt.trained_env_steps = env_steps;
    ckpt.train_seed = seed;
    ckpt.eval_infraction_rate = rate;
    ckpt.eval_td_loss = td;
    return ckpt;
  };

  const auto train_step = [&]() {
    const double frac = static_cast<double>(train_steps) / total_train_est;
    const double beta_is =
        std::min(1.0, cfg.is_exponent_start + (1.0 - cfg.is_exponent_start) * frac);
    const auto batch = buffer.sample(static_cast<std::size_t>(batch_n), beta_is, train_rng);
    for (int j = 0; j < batch_n; ++j) {
      const PursuitTransition& it = buffer[batch.indices[static_cast<std::size_t>(j)]];
      it.world->features(it.s, std::span<double>(bs.col(j).data(),
                                                 static_cast<std::size_t>(feature_dim)));
      ba(0, j) = it.a.x / action_scale;
      ba(1, j) = it.a.y / action_scale;
      const PursuitMlpTrainCritic target_view(*it.world, target, action_scale, reward_scale);
      const double r_floored = std::max(it.r, cfg.reward_floor);
      const double y_raw =
          cfg.hard_targets
              ? hard_q_target(r_floored, it.s_next, it.terminal, *it.world, target_view,
                              cfg.k_target, cfg.gamma, train_rng)
              : soft_q_target(r_floored, it.s_next, it.terminal, *it.world, target_view,
                              cfg.k_target, cfg.gamma, train_rng);
      // Valid range of a (floored) log-probability value: bootstrapped targets
      // outside it are estimation noise, and the positive side feeds back
      // through the log-sum-exp's max-of-noise bias until the loss diverges.
      targets_scaled[static_cast<std::size_t>(j)] = std::clamp(y_raw, v_min, 0.0) / reward_scale;
    }
    online.forward(bs, ba, q_pred, &cache);
    const auto tdl = td_loss(std::span<const double>(q_pred.data(), q_pred.size()),
                             targets_scaled, batch.is_weights);
    if (!std::isfinite(tdl.loss)) {
      const std::string dump = write_divergence_dump(
          cfg.diagnostics_dir, seed, train_steps, env_steps, tdl.loss,
          std::span<const double>(q_pred.data(), q_pred.size()), targets_scaled);
      throw TrainingDiverged("non-finite TD loss at train step " + std::to_string(train_steps) +
                             "; diagnostics: " + dump);
    }
    grads.set_zero();
    const Eigen::Map<const Eigen::RowVectorXd> dq(tdl.dloss_dq.data(),
                                                  static_cast<Eigen::Index>(batch_n));
    online.backward(bs, ba, cache, dq, grads);
    online.get_params(params);
    grads.get_params(grad_flat);
    opt.step(params, grad_flat);
    online.set_params(params);
    target.polyak_from(online, cfg.polyak_rho);
    buffer.update_priorities(batch.indices, tdl.td_abs);
    loss_acc += tdl.loss;
    loss_n += 1;
    train_steps += 1;
  };

  const auto run_eval = [&]() {
    const auto te = std::chrono::steady_clock::now();
    EngineOptions opts;
    opts.record_trajectories = false;
    std::size_t infractions = 0;
    for (const std::uint64_t es : eval_seeds) {
      const PursuitWorld world(cfg.env, mix_seed(es, 1));
      const PursuitMlpCritic critic(world, online, action_scale, reward_scale);
      const RunSeeds seeds = RunSeeds::from(mix_seed(es, 2));
      try {
        const auto res =
            run_critic_smc(world, critic, cfg.eval_n, cfg.eval_k, world.horizon(), seeds, opts);
        if (res.particles.infracted[static_cast<std::size_t>(res.best_index)] != 0) {
          infractions += 1;
        }
      } catch (const DegenerateParticleSystem&) {
        infractions += 1;
      }
    }
    const double rate = static_cast<double>(infractions) / static_cast<double>(cfg.eval_episodes);
    const double mean_loss = loss_n > 0 ? loss_acc / static_cast<double>(loss_n) : 0.0;
    TrainTelemetryRow row;
    row.env_steps = env_steps;
    row.train_steps = train_steps;
    row.buffer_size = buffer.size();
    row.mean_td_loss = mean_loss;
    row.buffer_infraction_fraction = buffer_infraction_fraction();
    row.eval_infraction_rate = rate;
    row.wall_seconds = seconds_since(t0);
    row.eval_seeds = eval_seeds;
    result.telemetry.push_back(std::move(row));
    loss_acc = 0.0;
    loss_n = 0;
    if (rate < best_rate || (rate == best_rate && mean_loss < best_loss)) {
      best_rate = rate;
      best_loss = mean_loss;
      result.best = make_checkpoint(rate, mean_loss);
    }
    result.eval_seconds += seconds_since(te);
  };

  EngineOptions collect_opts;
  collect_opts.record_trajectories = false;
  collect_opts.collect_transitions = true;

  while (env_steps < cfg.total_env_steps) {
    const auto tc = std::chrono::steady_clock::now();
    const auto world =
        std::make_shared<const PursuitWorld>(cfg.env, mix_seed(seed, {0xc0deU, episode}));
    const RunSeeds seeds = RunSeeds::from(mix_seed(seed, {0x5a3bU, episode}));
    episode += 1;
    bool collected = false;
    try {
      const PursuitMlpCritic snapshot(*world, online, action_scale, reward_scale);
      auto res = run_critic_smc(*world, snapshot, cfg.n_collect, cfg.k_collect,
                                world->horizon(), seeds, collect_opts);
      env_steps += res.particles.executed.size();
      for (auto& tr : res.particles.executed) {
        buffer.push(PursuitTransition{world, tr.s, tr.a, tr.r, tr.s_next, tr.terminal});
      }
      collected = true;
    } catch (const DegenerateParticleSystem&) {
      // Skipped: nothing usable survived this episode.
    } catch (const std::invalid_argument&) {
      // Non-finite particle weights: the critic itself has blown up (for
      // example float overflow after runaway parameters). Same failure class
      // as a non-finite loss, caught one stage later.
      online.get_params(params);
      double lo = params[0], hi = params[0];
      for (double p : params) {
        lo = std::min(lo, p);
        hi = std::max(hi, p);
      }
      const double extremes[2] = {lo, hi};
      const std::string dump = write_divergence_dump(cfg.diagnostics_dir, seed, train_steps,
                                                     env_steps, std::nan(""),
                                                     std::span<const double>(extremes, 2), {});
      throw TrainingDiverged("non-finite particle weights while collecting at env step " +
                             std::to_string(env_steps) + "; diagnostics: " + dump);
    }
    result.collect_seconds += seconds_since(tc);
    if (!collected) continue;

    const std::uint64_t effective =
        env_steps > cfg.warmup_env_steps ? env_steps - cfg.warmup_env_steps : 0;
    debt += static_cast<double>(effective - effective_prev) * cfg.train_steps_per_env_step;
    effective_prev = effective;
    const auto tt = std::chrono::steady_clock::now();
    while (debt >= 1.0 && buffer.size() >= static_cast<std::size_t>(batch_n)) {
      debt -= 1.0;
      train_step();
    }
    result.train_seconds += seconds_since(tt);

    if (env_steps >= next_eval) {
      run_eval();
      while (next_eval <= env_steps) next_eval += cfg.eval_every_env_steps;
    }
  }

  // Closing evaluation so the final parameters compete for best-checkpoint,
  // unless an eval already ran at exactly this point.
  if (result.telemetry.empty() || result.telemetry.back().env_steps != env_steps ||
      result.telemetry.back().train_steps != train_steps) {
    run_eval();
  }
  result.last = make_checkpoint(result.telemetry.back().eval_infraction_rate,
                                result.telemetry.back().mean_td_loss);
  if (!std::isfinite(best_rate)) {
    result.best = result.last;
  }
  return result;
}

}  // namespace criticsmc
