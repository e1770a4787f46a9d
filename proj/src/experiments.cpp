#include "criticsmc/experiments.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <thread>
#include <unordered_set>

#include "criticsmc/critic/pursuit_critic.hpp"
#include "criticsmc/engine.hpp"
#include "criticsmc/environments/discrete_mdp.hpp"
#include "criticsmc/errors.hpp"
#include "criticsmc/stats.hpp"

namespace criticsmc {

namespace {

using nlohmann::json;

void require_keys(const json& j, const char* where,
                  std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected a JSON object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) throw ConfigError(std::string(where) + ": unknown key '" + item.key() + "'");
  }
}

template <class T>
void read_key(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

void parse_pursuit(const json& j, PursuitConfig& c) {
  require_keys(j, "pursuit",
               {"ego_radius", "adversary_radius", "goal_radius", "adversary_speed", "max_step",
                "action_sigma", "horizon", "barrier_y", "barrier_half_thickness", "gate_width",
                "n_adversaries", "penalty"});
  read_key(j, "ego_radius", c.ego_radius);
  read_key(j, "adversary_radius", c.adversary_radius);
  read_key(j, "goal_radius", c.goal_radius);
  read_key(j, "adversary_speed", c.adversary_speed);
  read_key(j, "max_step", c.max_step);
  read_key(j, "action_sigma", c.action_sigma);
  read_key(j, "horizon", c.horizon);
  read_key(j, "barrier_y", c.barrier_y);
  read_key(j, "barrier_half_thickness", c.barrier_half_thickness);
  read_key(j, "gate_width", c.gate_width);
  read_key(j, "n_adversaries", c.n_adversaries);
  read_key(j, "penalty", c.penalty);
}

void parse_lgssm(const json& j, LgssmConfig& c) {
  require_keys(j, "lgssm",
               {"bound", "penalty", "prior_coef", "prior_sigma", "horizon",
                "transition_cost_iters"});
  read_key(j, "bound", c.bound);
  read_key(j, "penalty", c.penalty);
  read_key(j, "prior_coef", c.prior_coef);
  read_key(j, "prior_sigma", c.prior_sigma);
  read_key(j, "horizon", c.horizon);
  read_key(j, "transition_cost_iters", c.transition_cost_iters);
}

void parse_training(const json& j, MlpTrainConfig& c) {
  require_keys(j, "training",
               {"total_env_steps", "warmup_env_steps", "train_steps_per_env_step",
                "eval_every_env_steps", "buffer_capacity", "n_collect", "k_collect", "batch",
                "learning_rate", "gamma", "k_target", "polyak_rho", "is_exponent_start",
                "eval_episodes", "eval_n", "eval_k", "reward_floor", "reward_scale"});
  read_key(j, "total_env_steps", c.total_env_steps);
  read_key(j, "warmup_env_steps", c.warmup_env_steps);
  read_key(j, "train_steps_per_env_step", c.train_steps_per_env_step);
  read_key(j, "eval_every_env_steps", c.eval_every_env_steps);
  read_key(j, "buffer_capacity", c.buffer_capacity);
  read_key(j, "n_collect", c.n_collect);
  read_key(j, "k_collect", c.k_collect);
  read_key(j, "batch", c.batch);
  read_key(j, "learning_rate", c.learning_rate);
  read_key(j, "gamma", c.gamma);
  read_key(j, "k_target", c.k_target);
  read_key(j, "polyak_rho", c.polyak_rho);
  read_key(j, "is_exponent_start", c.is_exponent_start);
  read_key(j, "eval_episodes", c.eval_episodes);
  read_key(j, "eval_n", c.eval_n);
  read_key(j, "eval_k", c.eval_k);
  read_key(j, "reward_floor", c.reward_floor);
  read_key(j, "reward_scale", c.reward_scale);
}

json pursuit_json(const PursuitConfig& c) {
  return json{{"ego_radius", c.ego_radius},
              {"adversary_radius", c.adversary_radius},
              {"goal_radius", c.goal_radius},
              {"adversary_speed", c.adversary_speed},
              {"max_step", c.max_step},
              {"action_sigma", c.action_sigma},
              {"horizon", c.horizon},
              {"barrier_y", c.barrier_y},
              {"barrier_half_thickness", c.barrier_half_thickness},
              {"gate_width", c.gate_width},
              {"n_adversaries", c.n_adversaries},
              {"penalty", c.penalty}};
}

json lgssm_json(const LgssmConfig& c) {
  return json{{"bound", c.bound},
              {"penalty", c.penalty},
              {"prior_coef", c.prior_coef},
              {"prior_sigma", c.prior_sigma},
              {"horizon", c.horizon},
              {"transition_cost_iters", c.transition_cost_iters}};
}

json training_json(const MlpTrainConfig& c) {
  return json{{"total_env_steps", c.total_env_steps},
              {"warmup_env_steps", c.warmup_env_steps},
              {"train_steps_per_env_step", c.train_steps_per_env_step},
              {"eval_every_env_steps", c.eval_every_env_steps},
              {"buffer_capacity", c.buffer_capacity},
              {"n_collect", c.n_collect},
              {"k_collect", c.k_collect},
              {"batch", c.batch},
              {"learning_rate", c.learning_rate},
              {"gamma", c.gamma},
              {"k_target", c.k_target},
              {"polyak_rho", c.polyak_rho},
              {"is_exponent_start", c.is_exponent_start},
              {"eval_episodes", c.eval_episodes},
              {"eval_n", c.eval_n},
              {"eval_k", c.eval_k},
              {"reward_floor", c.reward_floor},
              {"reward_scale", c.reward_scale}};
}

const std::unordered_set<std::string> kVariants = {
    "prior", "rejection", "smc", "smc_value_heuristic", "critic_smc", "model_free_control"};

void validate_config(const ExperimentConfig& c) {
  if (c.environment != "pursuit" && c.environment != "lgssm") {
    throw ConfigError("config: environment must be 'pursuit' or 'lgssm'");
  }
  if (!kVariants.contains(c.variant)) {
    throw ConfigError("config: unknown sampler variant '" + c.variant + "'");
  }
  if (c.critic_target != "soft" && c.critic_target != "hard") {
    throw ConfigError("config: critic_target must be 'soft' or 'hard'");
  }
  if (c.n < 1 || c.k < 1 || c.episodes < 1 || c.rollouts_per_episode < 1 ||
      c.rejection_max_trials < 1 || c.workers < 1) {
    throw ConfigError("config: counts must be positive");
  }
  if (c.experiment_id.empty()) throw ConfigError("config: experiment_id must be non-empty");
}

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

/// Runs fn(0..count-1) on a small thread pool; with workers <= 1 it stays on
/// the calling thread. The first exception is rethrown after all workers join.
void parallel_for(int count, int workers, const std::function<void(int)>& fn) {
  if (workers <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  const int n_threads = std::min(workers, count);
  pool.reserve(static_cast<std::size_t>(n_threads));
  for (int w = 0; w < n_threads; ++w) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

constexpr std::uint64_t kWorldTag = 0x3017;
constexpr std::uint64_t kInitTag = 0xa11;
constexpr std::uint64_t kDynamicsTag = 0xd7a;

std::uint64_t episode_seed(const ExperimentConfig& cfg, int episode) {
  return mix_seed(cfg.master_seed, static_cast<std::uint64_t>(episode));
}

RunSeeds rollout_seeds(std::uint64_t ep_seed, int rollout) {
  return RunSeeds{mix_seed(ep_seed, kInitTag),
                  mix_seed(ep_seed, {kDynamicsTag, static_cast<std::uint64_t>(rollout)})};
}

bool variant_needs_critic(const std::string& variant) {
  return variant == "smc_value_heuristic" || variant == "critic_smc" ||
         variant == "model_free_control";
}

json row_config_json(const ExperimentConfig& cfg, const std::string& variant, int n, int k) {
  ExperimentConfig resolved = cfg;
  resolved.variant = variant;
  resolved.n = n;
  resolved.k = k;
  if (variant == "smc" && k > 1) {
    resolved.notes = "smc with k>1 is the putative expansion: n*k transition calls per step";
  }
  return experiment_config_json(resolved);
}

}  // namespace

ExperimentConfig parse_experiment_config(const json& j) {
  require_keys(j, "config",
               {"experiment_id", "environment", "pursuit", "lgssm", "variant", "n", "k", "t",
                "critic", "critic_target", "episodes", "rollouts_per_episode", "master_seed",
                "out", "rejection_max_trials", "workers", "training", "command", "notes"});
  ExperimentConfig c;
  read_key(j, "experiment_id", c.experiment_id);
  read_key(j, "environment", c.environment);
  if (j.contains("pursuit")) parse_pursuit(j.at("pursuit"), c.pursuit);
  if (j.contains("lgssm")) parse_lgssm(j.at("lgssm"), c.lgssm);
  read_key(j, "variant", c.variant);
  read_key(j, "n", c.n);
  read_key(j, "k", c.k);
  read_key(j, "t", c.t);
  read_key(j, "critic", c.critic);
  read_key(j, "critic_target", c.critic_target);
  read_key(j, "episodes", c.episodes);
  read_key(j, "rollouts_per_episode", c.rollouts_per_episode);
  read_key(j, "master_seed", c.master_seed);
  read_key(j, "out", c.out);
  read_key(j, "rejection_max_trials", c.rejection_max_trials);
  read_key(j, "workers", c.workers);
  if (j.contains("training")) parse_training(j.at("training"), c.training);
  read_key(j, "command", c.command);
  read_key(j, "notes", c.notes);
  c.training.env = c.pursuit;
  c.training.hard_targets = (c.critic_target == "hard");
  validate_config(c);
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config: " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_experiment_config(j);
}

json experiment_config_json(const ExperimentConfig& cfg) {
  return json{{"experiment_id", cfg.experiment_id},
              {"environment", cfg.environment},
              {"pursuit", pursuit_json(cfg.pursuit)},
              {"lgssm", lgssm_json(cfg.lgssm)},
              {"variant", cfg.variant},
              {"n", cfg.n},
              {"k", cfg.k},
              {"t", cfg.t},
              {"critic", cfg.critic},
              {"critic_target", cfg.critic_target},
              {"episodes", cfg.episodes},
              {"rollouts_per_episode", cfg.rollouts_per_episode},
              {"master_seed", cfg.master_seed},
              {"out", cfg.out},
              {"rejection_max_trials", cfg.rejection_max_trials},
              {"workers", cfg.workers},
              {"training", training_json(cfg.training)},
              {"command", cfg.command},
              {"notes", cfg.notes}};
}

std::filesystem::path resolve_out_dir(const ExperimentConfig& cfg) {
  if (!cfg.out.empty()) return cfg.out;
  if (const char* env = std::getenv("CRITICSMC_OUT_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
  return ".";
}

void append_result_rows(const std::filesystem::path& csv_path, std::span<const ResultRow> rows) {
  std::error_code ec;
  const bool fresh = !std::filesystem::exists(csv_path, ec) ||
                     std::filesystem::file_size(csv_path, ec) == 0;
  std::ofstream out(csv_path, std::ios::app);
  if (!out) throw std::runtime_error("cannot open results file " + csv_path.string());
  if (fresh) {
    out << "# criticsmc results, schema v1\n"
           "# experiment_id: string label of the experiment\n"
           "# variant: sampler in {prior,rejection,smc,smc_value_heuristic,critic_smc,"
           "model_free_control}\n"
           "# n: particle count; k: putative actions per particle (soft-value samples for "
           "smc_value_heuristic)\n"
           "# seed: uint64 master seed; episode e derives its seeds from mix_seed(seed, e)\n"
           "# infraction_rate: fraction of rollouts in [0,1] whose best-particle trajectory "
           "violates a constraint (rejection failures count)\n"
           "# mean_log_evidence: mean log evidence estimate over all rollouts, nats\n"
           "# evidence_std_error: standard error over per-episode means, nats\n"
           "# wall_clock_seconds: inference time only, excludes training and file writes; "
           "not covered by determinism guarantees\n"
           "# resolved_config: full config JSON; re-running it reproduces every other column "
           "bit-identically in single-worker mode\n"
           "experiment_id,variant,n,k,seed,infraction_rate,mean_log_evidence,"
           "evidence_std_error,wall_clock_seconds,resolved_config\n";
  }
  for (const auto& r : rows) {
    out << csv_quote(r.experiment_id) << ',' << csv_quote(r.variant) << ',' << r.n << ',' << r.k
        << ',' << r.seed << ',' << fmt_double(r.infraction_rate) << ','
        << fmt_double(r.mean_log_evidence) << ',' << fmt_double(r.evidence_std_error) << ','
        << fmt_double(r.wall_clock_seconds) << ',' << csv_quote(r.resolved_config) << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + csv_path.string());
}

std::vector<ResultRow> read_result_rows(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw std::runtime_error("cannot open results file " + csv_path.string());
  std::vector<ResultRow> rows;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      header_seen = true;  // column-name row
      continue;
    }
    const auto f = split_csv_line(line);
    if (f.size() != 10) {
      throw std::runtime_error("malformed results row in " + csv_path.string());
    }
    ResultRow r;
    r.experiment_id = f[0];
    r.variant = f[1];
    r.n = std::stoi(f[2]);
    r.k = std::stoi(f[3]);
    r.seed = std::stoull(f[4]);
    r.infraction_rate = std::strtod(f[5].c_str(), nullptr);
    r.mean_log_evidence = std::strtod(f[6].c_str(), nullptr);
    r.evidence_std_error = std::strtod(f[7].c_str(), nullptr);
    r.wall_clock_seconds = std::strtod(f[8].c_str(), nullptr);
    r.resolved_config = f[9];
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_config_sidecar(const std::filesystem::path& csv_path, const ExperimentConfig& cfg) {
  const auto path = csv_path.string() + ".config.json";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open sidecar " + path);
  out << experiment_config_json(cfg).dump(1) << '\n';
}

std::vector<RolloutOutcome> run_pursuit_variant(const ExperimentConfig& cfg,
                                                const std::string& variant, int n, int k,
                                                const CriticCheckpoint* critic,
                                                double* wall_seconds) {
  if (cfg.environment != "pursuit") {
    throw ConfigError("run_pursuit_variant: config environment is not 'pursuit'");
  }
  if (variant_needs_critic(variant) && critic == nullptr) {
    throw ConfigError("variant '" + variant + "' requires a critic checkpoint");
  }
  const int horizon = cfg.t > 0 ? cfg.t : cfg.pursuit.horizon;
  const int rollouts = cfg.rollouts_per_episode;
  std::vector<RolloutOutcome> outcomes(static_cast<std::size_t>(cfg.episodes) * rollouts);
  std::vector<double> episode_wall(static_cast<std::size_t>(cfg.episodes), 0.0);

  parallel_for(cfg.episodes, cfg.workers, [&](int ep) {
    const std::uint64_t ep_seed = episode_seed(cfg, ep);
    const auto t0 = std::chrono::steady_clock::now();
    const PursuitWorld world(cfg.pursuit, mix_seed(ep_seed, kWorldTag));
    std::optional<PursuitMlpCritic> mlp;
    if (variant_needs_critic(variant)) mlp.emplace(world, *critic);
    EngineOptions opts;
    opts.record_trajectories = false;

    for (int r = 0; r < rollouts; ++r) {
      const RunSeeds seeds = rollout_seeds(ep_seed, r);
      RolloutOutcome oc;
      oc.episode = ep;
      oc.rollout = r;
      if (variant == "prior") {
        const auto res = run_smc(world, 1, horizon, seeds, opts);
        oc.infracted = res.particles.infracted[static_cast<std::size_t>(res.best_index)] != 0;
        oc.log_evidence = res.log_evidence;
      } else if (variant == "rejection") {
        // Whole-episode rejection: prior rollouts until one is infraction-free.
        // Trial 0 reuses the shared rollout seed so max_trials=1 is exactly the
        // prior baseline; failure after max trials scores as an infraction.
        oc.infracted = true;
        for (int trial = 0; trial < cfg.rejection_max_trials; ++trial) {
          RunSeeds ts = seeds;
          if (trial > 0) {
            ts.dynamics = mix_seed(ep_seed, {kDynamicsTag, static_cast<std::uint64_t>(r),
                                             static_cast<std::uint64_t>(trial)});
          }
          const auto res = run_smc(world, 1, horizon, ts, opts);
          oc.trials = trial + 1;
          oc.log_evidence = res.log_evidence;
          if (res.particles.infracted[0] == 0) {
            oc.infracted = false;
            break;
          }
        }
      } else if (variant == "smc") {
        const auto res = k > 1 ? run_smc_putative(world, n, k, horizon, seeds, opts)
                               : run_smc(world, n, horizon, seeds, opts);
        oc.infracted = res.particles.infracted[static_cast<std::size_t>(res.best_index)] != 0;
        oc.log_evidence = res.log_evidence;
      } else if (variant == "smc_value_heuristic") {
        const auto res = run_smc_value_heuristic(world, *mlp, n, k, horizon, seeds, opts);
        oc.infracted = res.particles.infracted[static_cast<std::size_t>(res.best_index)] != 0;
        oc.log_evidence = res.log_evidence;
      } else if (variant == "critic_smc") {
        const auto res = run_critic_smc(world, *mlp, n, k, horizon, seeds, opts);
        oc.infracted = res.particles.infracted[static_cast<std::size_t>(res.best_index)] != 0;
        oc.log_evidence = res.log_evidence;
      } else if (variant == "model_free_control") {
        const auto res = model_free_control(world, *mlp, k, horizon, seeds, opts);
        oc.infracted = res.particles.infracted[0] != 0;
        oc.log_evidence = res.log_evidence;
      } else {
        throw ConfigError("unknown sampler variant '" + variant + "'");
      }
      outcomes[static_cast<std::size_t>(ep) * rollouts + r] = oc;
    }
    episode_wall[static_cast<std::size_t>(ep)] = seconds_since(t0);
  });

  if (wall_seconds != nullptr) {
    double total = 0.0;
    for (double w : episode_wall) total += w;
    *wall_seconds = total;
  }
  return outcomes;
}

ResultRow summarize_outcomes(const ExperimentConfig& cfg, const std::string& variant, int n,
                             int k, std::span<const RolloutOutcome> outcomes, double wall_seconds,
                             std::vector<double>* episode_rates) {
  if (outcomes.empty()) throw std::invalid_argument("summarize_outcomes: no outcomes");
  const int rollouts = cfg.rollouts_per_episode;
  const int episodes = static_cast<int>(outcomes.size()) / rollouts;

  double infractions = 0.0;
  double log_ev_sum = 0.0;
  std::vector<double> episode_means(static_cast<std::size_t>(episodes), 0.0);
  if (episode_rates != nullptr) episode_rates->assign(static_cast<std::size_t>(episodes), 0.0);
  for (const auto& oc : outcomes) {
    infractions += oc.infracted ? 1.0 : 0.0;
    log_ev_sum += oc.log_evidence;
    episode_means[static_cast<std::size_t>(oc.episode)] += oc.log_evidence / rollouts;
    if (episode_rates != nullptr) {
      (*episode_rates)[static_cast<std::size_t>(oc.episode)] +=
          (oc.infracted ? 1.0 : 0.0) / rollouts;
    }
  }
  const auto ev = mean_and_std_error(episode_means);

  ResultRow row;
  row.experiment_id = cfg.experiment_id;
  row.variant = variant;
  row.n = n;
  row.k = k;
  row.seed = cfg.master_seed;
  row.infraction_rate = infractions / static_cast<double>(outcomes.size());
  row.mean_log_evidence = log_ev_sum / static_cast<double>(outcomes.size());
  row.evidence_std_error = ev.std_error;
  row.wall_clock_seconds = std::max(wall_seconds, 1e-9);
  row.resolved_config = row_config_json(cfg, variant, n, k).dump();
  return row;
}

ToyBenchmarkResult cmd_toy_benchmark(const ExperimentConfig& cfg, const CriticCheckpoint& ckpt) {
  ExperimentConfig local = cfg;
  local.command = "toy-benchmark";
  ToyBenchmarkResult result;

  struct Spec {
    const char* variant;
    int n;
    int k;
    bool needs_critic;
  };
  const Spec specs[] = {
      {"prior", 1, 1, false},
      {"rejection", 1, 1, false},
      {"smc_value_heuristic", local.n, local.k, true},
      {"critic_smc", local.n, local.k, true},
  };
  result.episode_rates.assign(static_cast<std::size_t>(local.episodes),
                              std::vector<double>(4, 0.0));
  int col = 0;
  for (const auto& spec : specs) {
    double wall = 0.0;
    const auto outcomes = run_pursuit_variant(local, spec.variant, spec.n, spec.k,
                                              spec.needs_critic ? &ckpt : nullptr, &wall);
    std::vector<double> rates;
    result.rows.push_back(
        summarize_outcomes(local, spec.variant, spec.n, spec.k, outcomes, wall, &rates));
    for (int e = 0; e < local.episodes; ++e) {
      result.episode_rates[static_cast<std::size_t>(e)][static_cast<std::size_t>(col)] =
          rates[static_cast<std::size_t>(e)];
    }
    if (std::string(spec.variant) == "rejection") {
      result.rejection_trials.reserve(outcomes.size());
      for (const auto& oc : outcomes) result.rejection_trials.push_back(oc.trials);
    }
    ++col;
  }
  return result;
}

std::vector<AblationCell> cmd_ablation_grid(const ExperimentConfig& cfg,
                                            const CriticCheckpoint& ckpt) {
  ExperimentConfig local = cfg;
  local.command = "ablation";
  std::vector<AblationCell> cells;
  const int ns[] = {1, 5, 10, 20, 50};
  const int ks[] = {1, 1024};
  for (const char* variant : {"smc", "critic_smc"}) {
    for (int k : ks) {
      for (int n : ns) {
        AblationCell cell;
        cell.variant = variant;
        cell.n = n;
        cell.k = k;
        double wall = 0.0;
        const bool needs_critic = std::string(variant) == "critic_smc";
        const auto outcomes = run_pursuit_variant(local, variant, n, k,
                                                  needs_critic ? &ckpt : nullptr, &wall);
        cell.row =
            summarize_outcomes(local, variant, n, k, outcomes, wall, &cell.episode_rates);
        cells.push_back(std::move(cell));
      }
    }
  }
  return cells;
}

LgssmStudyResult cmd_lgssm_study(const ExperimentConfig& cfg, int oracle_particles,
                                 int oracle_reps) {
  ExperimentConfig local = cfg;
  local.command = "lgssm";
  local.environment = "lgssm";
  LgssmStudyResult result;

  const auto oracle = lgssm_oracle_evidence(local.lgssm, oracle_particles, oracle_reps,
                                            mix_seed(local.master_seed, 0x09ac1eULL));
  result.oracle_log_evidence = oracle.mean;
  result.oracle_std_error = oracle.std_error;

  const LgssmWorld world(local.lgssm);
  const AnalyticLgssmCritic critic;
  const int horizon = local.t > 0 ? local.t : local.lgssm.horizon;
  const int reps = local.episodes;
  EngineOptions opts;
  opts.record_trajectories = false;

  const int ns[] = {1, 5, 10};
  const int ks[] = {1, 100, 1000};
  for (const char* variant : {"smc", "critic_smc"}) {
    for (int k : ks) {
      for (int n : ns) {
        LgssmCell cell;
        cell.variant = variant;
        cell.n = n;
        cell.k = k;
        cell.rep_log_evidence.assign(static_cast<std::size_t>(reps), 0.0);
        std::vector<double> rep_wall(static_cast<std::size_t>(reps), 0.0);
        std::vector<std::uint8_t> rep_inf(static_cast<std::size_t>(reps), 0);

        parallel_for(reps, local.workers, [&](int rep) {
          const RunSeeds seeds = rollout_seeds(episode_seed(local, rep), 0);
          const auto t0 = std::chrono::steady_clock::now();
          const auto res =
              std::string(variant) == "critic_smc"
                  ? run_critic_smc(world, critic, n, k, horizon, seeds, opts)
                  : (k > 1 ? run_smc_putative(world, n, k, horizon, seeds, opts)
                           : run_smc(world, n, horizon, seeds, opts));
          rep_wall[static_cast<std::size_t>(rep)] = seconds_since(t0);
          cell.rep_log_evidence[static_cast<std::size_t>(rep)] = res.log_evidence;
          rep_inf[static_cast<std::size_t>(rep)] =
              res.particles.infracted[static_cast<std::size_t>(res.best_index)];
        });

        cell.abs_nll_errors.reserve(static_cast<std::size_t>(reps));
        double wall = 0.0;
        double inf = 0.0;
        double lev = 0.0;
        for (int rep = 0; rep < reps; ++rep) {
          cell.abs_nll_errors.push_back(
              std::abs(cell.rep_log_evidence[static_cast<std::size_t>(rep)] - oracle.mean));
          wall += rep_wall[static_cast<std::size_t>(rep)];
          inf += rep_inf[static_cast<std::size_t>(rep)];
          lev += cell.rep_log_evidence[static_cast<std::size_t>(rep)];
        }
        cell.mean_wall_seconds = wall / reps;

        ResultRow row;
        row.experiment_id = local.experiment_id;
        row.variant = variant;
        row.n = n;
        row.k = k;
        row.seed = local.master_seed;
        row.infraction_rate = inf / reps;
        row.mean_log_evidence = lev / reps;
        row.evidence_std_error =
            mean_and_std_error(std::span<const double>(cell.rep_log_evidence)).std_error;
        row.wall_clock_seconds = std::max(wall, 1e-9);
        row.resolved_config = row_config_json(local, variant, n, k).dump();
        cell.row = std::move(row);
        result.cells.push_back(std::move(cell));
      }
    }
  }
  return result;
}

ModelFreeResult cmd_model_free_control(const ExperimentConfig& cfg,
                                       const CriticCheckpoint& ckpt) {
  ExperimentConfig local = cfg;
  local.command = "model-free";
  ModelFreeResult result;
  result.episode_rates.assign(static_cast<std::size_t>(local.episodes),
                              std::vector<double>(2, 0.0));

  double wall = 0.0;
  auto outcomes = run_pursuit_variant(local, "model_free_control", 1, local.k, &ckpt, &wall);
  std::vector<double> rates;
  result.rows.push_back(
      summarize_outcomes(local, "model_free_control", 1, local.k, outcomes, wall, &rates));
  for (int e = 0; e < local.episodes; ++e) {
    result.episode_rates[static_cast<std::size_t>(e)][0] = rates[static_cast<std::size_t>(e)];
  }

  outcomes = run_pursuit_variant(local, "prior", 1, 1, nullptr, &wall);
  result.rows.push_back(summarize_outcomes(local, "prior", 1, 1, outcomes, wall, &rates));
  for (int e = 0; e < local.episodes; ++e) {
    result.episode_rates[static_cast<std::size_t>(e)][1] = rates[static_cast<std::size_t>(e)];
  }
  return result;
}

UnbiasednessReport cmd_unbiasedness_suite(int runs_per_case, std::uint64_t seed,
                                          bool mutation_mode) {
  if (runs_per_case < 2) throw ConfigError("unbiasedness suite: need at least 2 runs per case");
  // Enumerable 3-state MDP with skewed policy, mixed rewards, and state cycling.
  const DiscreteMdp mdp(3, 2, 3, {1, 2, 2, 0, 0, 1},
                        {0.3, -0.4, -0.1, 0.25, -0.6, 0.15},
                        {0.7, 0.3, 0.45, 0.55, 0.2, 0.8}, {0.5, 0.2, 0.3});
  const double truth = std::exp(enumerate_log_evidence(mdp));

  const auto exact = soft_q_exact(mdp, 1.0);
  // Parity-keyed offsets re-rank actions away from the exact scores, so the
  // proposal is actively misled while the post-weights must cancel the distortion.
  // Amplitudes stay moderate: larger ones keep the estimator unbiased but push the
  // weight distribution into tails a sample mean of this size cannot resolve.
  SoftQTable adversarial = exact;
  for (int t = 0; t < mdp.horizon(); ++t) {
    for (int s = 0; s < mdp.n_states(); ++s) {
      for (int a = 0; a < mdp.n_actions(); ++a) {
        adversarial.at(t, s, a) += ((s + a) % 2 == 0) ? 1.5 : -1.0;
      }
    }
  }
  const TableCritic exact_critic(exact);
  const TableCritic adv_critic(adversarial);

  EngineOptions opts;
  opts.record_trajectories = false;
  // A deliberately broken estimator for the negative control: every step leaks
  // a constant factor into the evidence, as a missed weight normalization would.
  const double mutation_bias = mutation_mode ? 0.25 * mdp.horizon() : 0.0;

  struct Case {
    std::string name;
    std::function<double(RunSeeds)> run;
  };
  const std::vector<Case> cases = {
      {"smc_n3",
       [&](RunSeeds s) { return run_smc(mdp, 3, mdp.horizon(), s, opts).log_evidence; }},
      {"value_heuristic_exact_n3_j2",
       [&](RunSeeds s) {
         return run_smc_value_heuristic(mdp, exact_critic, 3, 2, mdp.horizon(), s, opts)
             .log_evidence;
       }},
      {"value_heuristic_adversarial_n3_j2",
       [&](RunSeeds s) {
         return run_smc_value_heuristic(mdp, adv_critic, 3, 2, mdp.horizon(), s, opts)
             .log_evidence;
       }},
      {"critic_smc_adversarial_n3_k1",
       [&](RunSeeds s) {
         return run_critic_smc(mdp, adv_critic, 3, 1, mdp.horizon(), s, opts).log_evidence;
       }},
      {"critic_smc_adversarial_n3_k4",
       [&](RunSeeds s) {
         return run_critic_smc(mdp, adv_critic, 3, 4, mdp.horizon(), s, opts).log_evidence;
       }},
  };

  UnbiasednessReport report;
  report.mutated = mutation_mode;
  report.all_pass = true;
  std::vector<double> ests(static_cast<std::size_t>(runs_per_case));
  for (std::size_t c = 0; c < cases.size(); ++c) {
    for (int r = 0; r < runs_per_case; ++r) {
      const RunSeeds seeds = RunSeeds::from(
          mix_seed(seed, {static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(r)}));
      ests[static_cast<std::size_t>(r)] = std::exp(cases[c].run(seeds) + mutation_bias);
    }
    const auto ms = mean_and_std_error(ests);
    UnbiasednessCase uc;
    uc.name = cases[c].name;
    uc.runs = runs_per_case;
    uc.truth = truth;
    uc.mean = ms.mean;
    uc.std_error = ms.std_error;
    uc.z = ms.std_error > 0.0 ? (ms.mean - truth) / ms.std_error
                              : (ms.mean == truth ? 0.0 : std::numeric_limits<double>::infinity());
    uc.pass = std::abs(uc.z) < 3.0;
    report.all_pass = report.all_pass && uc.pass;
    report.cases.push_back(std::move(uc));
  }
  return report;
}

std::filesystem::path cmd_train_critic(const ExperimentConfig& cfg, MlpTrainResult* result) {
  ExperimentConfig local = cfg;
  local.command = "train-critic";
  MlpTrainConfig tc = local.training;
  tc.env = local.pursuit;
  tc.hard_targets = (local.critic_target == "hard");

  const auto out_dir = resolve_out_dir(local);
  std::filesystem::create_directories(out_dir);
  tc.diagnostics_dir = out_dir.string();

  MlpTrainResult trained = train_pursuit_critic(tc, local.master_seed);

  const auto ckpt_path = out_dir / (local.experiment_id + "_critic.json");
  save_checkpoint(trained.best, ckpt_path.string());

  const auto telemetry_path = out_dir / (local.experiment_id + "_training.csv");
  {
    std::ofstream out(telemetry_path);
    if (!out) throw std::runtime_error("cannot open " + telemetry_path.string());
    out << "# criticsmc training telemetry, schema v1\n"
           "# buffer_infraction_fraction: infracting share of stored transitions\n"
           "# eval_infraction_rate: frozen-critic eval on held-out seeds, -1 before first eval\n"
           "env_steps,train_steps,buffer_size,mean_td_loss,buffer_infraction_fraction,"
           "eval_infraction_rate,wall_seconds\n";
    for (const auto& row : trained.telemetry) {
      out << row.env_steps << ',' << row.train_steps << ',' << row.buffer_size << ','
          << fmt_double(row.mean_td_loss) << ',' << fmt_double(row.buffer_infraction_fraction)
          << ',' << fmt_double(row.eval_infraction_rate) << ',' << fmt_double(row.wall_seconds)
          << '\n';
    }
  }
  if (result != nullptr) *result = std::move(trained);
  return ckpt_path;
}

CriticCheckpoint resolve_critic(const ExperimentConfig& cfg) {
  if (cfg.critic == "train") {
    MlpTrainResult trained;
    cmd_train_critic(cfg, &trained);
    return trained.best;
  }
  return load_checkpoint(cfg.critic);
}

}  // namespace criticsmc
