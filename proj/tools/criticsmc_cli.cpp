// Command-line front end for the experiment harness. Each subcommand loads an
// optional JSON config, applies flag overrides, runs the corresponding command
// from the experiments library, and writes CSV results plus a resolved-config
// sidecar into the output directory. Errors exit nonzero after printing a
// single machine-readable JSON line on stderr.
#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nlohmann/json.hpp"

#include "criticsmc/experiments.hpp"
#include "criticsmc/stats.hpp"

namespace {

using namespace criticsmc;

// Flag storage plus the CLI11 options, so only flags the user actually set
// override config-file keys.
struct ConfigFlags {
  std::string config_path;
  std::string id;
  std::string out;
  std::string critic;
  std::string critic_target;
  std::uint64_t seed = 0;
  int n =  0;
  int k = 0;
  int t = 0;
  int episodes = 0;
  int rollouts = 0;
  int workers = 0;
  int rejection_max_trials = 0;

  CLI::Option* o_id = nullptr;
  CLI::Option* o_out = nullptr;
  CLI::Option* o_critic = nullptr;
  CLI::Option* o_critic_target = nullptr;
  CLI::Option* o_seed = nullptr;
  CLI::Option* o_n = nullptr;
  CLI::Option* o_k = nullptr;
  CLI::Option* o_t = nullptr;
  CLI::Option* o_episodes = nullptr;
  CLI::Option* o_rollouts = nullptr;
  CLI::Option* o_workers = nullptr;
  CLI::Option* o_rejection = nullptr;
};

void attach_config_flags(CLI::App* sub, ConfigFlags& f) {
  sub->add_option("--config", f.config_path, "JSON config file; flags override its keys");
  f.o_id = sub->add_option("--id", f.id, "Experiment id (names the output files)");
  f.o_out = sub->add_option("--out", f.out,
                            "Output directory (default: config key, else $CRITICSMC_OUT_DIR, "
                            "else the working directory)");
  f.o_seed = sub->add_option("--seed", f.seed, "Master seed; episode seeds derive from it");
  f.o_critic = sub->add_option("--critic", f.critic,
                               "Critic checkpoint path, or 'train' to fit one first");
  f.o_critic_target =
      sub->add_option("--critic-target", f.critic_target, "TD target rule: soft | hard");
  f.o_n = sub->add_option("--n", f.n, "Particle count");
  f.o_k = sub->add_option("--k", f.k, "Putative actions per particle");
  f.o_t = sub->add_option("--t", f.t, "Horizon override; -1 keeps the environment default");
  f.o_episodes = sub->add_option("--episodes", f.episodes, "Episode (or repetition) count");
  f.o_rollouts = sub->add_option("--rollouts", f.rollouts, "Rollouts per episode");
  f.o_workers = sub->add_option("--workers", f.workers, "Worker threads (1 = serial)");
  f.o_rejection = sub->add_option("--rejection-max-trials", f.rejection_max_trials,
                                  "Whole-episode rejection retry budget");
}

// Defaults, then config file, then explicitly set flags. Re-validates through
// the strict parser so overrides face the same checks as file keys.
ExperimentConfig build_config(const ConfigFlags& f, const std::string& command) {
  ExperimentConfig cfg;
  if (!f.config_path.empty()) cfg = load_experiment_config(f.config_path);
  if (f.o_id->count() > 0) cfg.experiment_id = f.id;
  if (f.o_out->count() > 0) cfg.out = f.out;
  if (f.o_seed->count() > 0) cfg.master_seed = f.seed;
  if (f.o_critic->count() > 0) cfg.critic = f.critic;
  if (f.o_critic_target->count() > 0) cfg.critic_target = f.critic_target;
  if (f.o_n->count() > 0) cfg.n = f.n;
  if (f.o_k->count() > 0) cfg.k = f.k;
  if (f.o_t->count() > 0) cfg.t = f.t;
  if (f.o_episodes->count() > 0) cfg.episodes = f.episodes;
  if (f.o_rollouts->count() > 0) cfg.rollouts_per_episode = f.rollouts;
  if (f.o_workers->count() > 0) cfg.workers = f.workers;
  if (f.o_rejection->count() > 0) cfg.rejection_max_trials = f.rejection_max_trials;
  cfg.command = command;
  return parse_experiment_config(experiment_config_json(cfg));
}

std::filesystem::path prepare_out_dir(const ExperimentConfig& cfg) {
  const auto dir = resolve_out_dir(cfg);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "ConfigError";
  if (dynamic_cast<const CheckpointError*>(&e)) return "CheckpointError";
  if (dynamic_cast<const TrainingDiverged*>(&e)) return "TrainingDiverged";
  if (dynamic_cast<const DegenerateParticleSystem*>(&e)) return "DegenerateParticleSystem";
  return "RuntimeError";
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void print_row(const ResultRow& row) {
  std::printf("  variant=%-20s n=%-3d k=%-5d rate=%.4f logZ=%+.4f se=%.4f wall=%.3fs\n",
              row.variant.c_str(), row.n, row.k, row.infraction_rate, row.mean_log_evidence,
              row.evidence_std_error, row.wall_clock_seconds);
}

int run_toy_benchmark(const ExperimentConfig& cfg) {
  const auto dir = prepare_out_dir(cfg);
  const CriticCheckpoint ckpt = resolve_critic(cfg);
  const ToyBenchmarkResult result = cmd_toy_benchmark(cfg, ckpt);

  const auto csv = dir / (cfg.experiment_id + ".csv");
  append_result_rows(csv, result.rows);
  write_config_sidecar(csv, cfg);

  // Per-rollout rejection trial counts, episode-major; a failed rollout used
  // the full budget and still counts as an infraction in the main rows.
  const auto trials_csv = dir / (cfg.experiment_id + "_rejection_trials.csv");
  {
    std::ofstream out(trials_csv);
    out << "# rejection trial counts, schema v1: one row per rollout of the rejection "
           "variant\n";
    out << "episode,rollout,trials\n";
    const int rollouts = cfg.rollouts_per_episode;
    for (std::size_t i = 0; i < result.rejection_trials.size(); ++i) {
      out << (i / rollouts) << ',' << (i % rollouts) << ',' << result.rejection_trials[i]
          << '\n';
    }
  }

  std::printf("toy-benchmark: %d episodes x %d rollouts, seed %" PRIu64 "\n", cfg.episodes,
              cfg.rollouts_per_episode, cfg.master_seed);
  for (const auto& row : result.rows) print_row(row);
  std::printf("  wrote %s and %s\n", csv.string().c_str(), trials_csv.string().c_str());
  return 0;
}

int run_ablation(const ExperimentConfig& cfg) {
  const auto dir = prepare_out_dir(cfg);
  const CriticCheckpoint ckpt = resolve_critic(cfg);
  const std::vector<AblationCell> cells = cmd_ablation_grid(cfg, ckpt);

  std::vector<ResultRow> rows;
  rows.reserve(cells.size());
  for (const auto& cell : cells) rows.push_back(cell.row);
  const auto csv = dir / (cfg.experiment_id + ".csv");
  append_result_rows(csv, rows);
  write_config_sidecar(csv, cfg);

  std::printf("ablation: %zu cells, %d episodes each, seed %" PRIu64 "\n", cells.size(),
              cfg.episodes, cfg.master_seed);
  for (const auto& cell : cells) {
    print_row(cell.row);
    if (cell.variant == "smc" && cell.k > 1) {
      std::printf("    ^ putative expansion: %d*%d transition calls per step\n", cell.n, cell.k);
    }
  }
  std::printf("  wrote %s\n", csv.string().c_str());
  return 0;
}

int run_lgssm(const ExperimentConfig& cfg, int oracle_particles, int oracle_reps) {
  const auto dir = prepare_out_dir(cfg);
  const LgssmStudyResult result = cmd_lgssm_study(cfg, oracle_particles, oracle_reps);

  std::vector<ResultRow> rows;
  rows.reserve(result.cells.size());
  for (const auto& cell : result.cells) rows.push_back(cell.row);
  const auto csv = dir / (cfg.experiment_id + ".csv");
  append_result_rows(csv, rows);
  write_config_sidecar(csv, cfg);

  // Cell-level error summary against the large-N oracle.
  const auto cells_csv = dir / (cfg.experiment_id + "_cells.csv");
  {
    std::ofstream out(cells_csv);
    out << "# linear-Gaussian study cells, schema v1: mean |NLL error| vs the oracle "
           "evidence, wall clock is inference only\n";
    out << "variant,n,k,reps,mean_abs_nll_error,se_abs_nll_error,mean_wall_seconds,"
           "oracle_log_evidence,oracle_std_error\n";
    for (const auto& cell : result.cells) {
      const MeanStdErr err = mean_and_std_error(cell.abs_nll_errors);
      out << cell.variant << ',' << cell.n << ',' << cell.k << ','
          << cell.abs_nll_errors.size() << ',' << fmt17(err.mean) << ','
          << fmt17(err.std_error) << ',' << fmt17(cell.mean_wall_seconds) << ','
          << fmt17(result.oracle_log_evidence) << ',' << fmt17(result.oracle_std_error) << '\n';
    }
  }

  std::printf("lgssm: %zu cells, %d repetitions each, oracle logZ %.6f (se %.2e)\n",
              result.cells.size(), cfg.episodes, result.oracle_log_evidence,
              result.oracle_std_error);
  for (const auto& cell : result.cells) {
    const MeanStdErr err = mean_and_std_error(cell.abs_nll_errors);
    std::printf("  variant=%-10s n=%-3d k=%-5d |NLL err|=%.4f (se %.4f) wall=%.3fs\n",
                cell.variant.c_str(), cell.n, cell.k, err.mean, err.std_error,
                cell.mean_wall_seconds);
  }
  std::printf("  wrote %s and %s\n", csv.string().c_str(), cells_csv.string().c_str());
  return 0;
}

int run_model_free(const ExperimentConfig& cfg) {
  const auto dir = prepare_out_dir(cfg);
  const CriticCheckpoint ckpt = resolve_critic(cfg);
  const ModelFreeResult result = cmd_model_free_control(cfg, ckpt);

  const auto csv = dir / (cfg.experiment_id + ".csv");
  append_result_rows(csv, result.rows);
  write_config_sidecar(csv, cfg);

  const double frac = bootstrap_fraction(
      result.episode_rates, 2000, cfg.master_seed,
      [](std::span<const double> means) { return means[0] < means[1]; });
  std::printf("model-free: %d episodes x %d rollouts, k=%d, seed %" PRIu64 "\n", cfg.episodes,
              cfg.rollouts_per_episode, cfg.k, cfg.master_seed);
  for (const auto& row : result.rows) print_row(row);
  std::printf("  bootstrap fraction (model-free rate < prior rate): %.4f\n", frac);
  std::printf("  wrote %s\n", csv.string().c_str());
  return 0;
}

int run_unbiasedness(const ExperimentConfig& cfg, int runs, bool mutation_mode) {
  const auto dir = prepare_out_dir(cfg);
  const UnbiasednessReport report = cmd_unbiasedness_suite(runs, cfg.master_seed, mutation_mode);

  const auto csv = dir / (cfg.experiment_id + ".csv");
  {
    std::ofstream out(csv);
    out << "# evidence unbiasedness suite, schema v1: z = (mean - truth) / std_error, pass "
           "means |z| < 3\n";
    out << "case,runs,truth,mean,std_error,z,pass,mutation_mode\n";
    for (const auto& c : report.cases) {
      out << c.name << ',' << c.runs << ',' << fmt17(c.truth) << ',' << fmt17(c.mean) << ','
          << fmt17(c.std_error) << ',' << fmt17(c.z) << ',' << (c.pass ? 1 : 0) << ','
          << (report.mutated ? 1 : 0) << '\n';
    }
  }
  write_config_sidecar(csv, cfg);

  std::printf("unbiasedness: %d runs per case, seed %" PRIu64 "%s\n", runs, cfg.master_seed,
              mutation_mode ? ", mutation mode (expected to fail)" : "");
  for (const auto& c : report.cases) {
    std::printf("  case=%-36s truth=%.6f mean=%.6f z=%+8.3f %s\n", c.name.c_str(), c.truth,
                c.mean, c.z, c.pass ? "pass" : "FAIL");
  }
  std::printf("  wrote %s\n", csv.string().c_str());

  // In mutation mode the injected bias must trip every case; otherwise every
  // case must sit within tolerance.
  bool ok = true;
  if (mutation_mode) {
    for (const auto& c : report.cases) ok = ok && !c.pass;
    if (ok) std::printf("  negative control confirmed: all cases flagged the injected bias\n");
  } else {
    ok = report.all_pass;
  }
  if (!ok) {
    nlohmann::json err = {{"status", "error"},
                          {"type", "SuiteFailure"},
                          {"command", "unbiasedness"},
                          {"message", mutation_mode
                                          ? "mutation mode: injected bias was not flagged"
                                          : "one or more cases exceeded |z| < 3"}};
    std::fprintf(stderr, "%s\n", err.dump().c_str());
    return 3;
  }
  return 0;
}

int run_train_critic(const ExperimentConfig& cfg) {
  MlpTrainResult result;
  const std::filesystem::path ckpt_path = cmd_train_critic(cfg, &result);
  const auto dir = resolve_out_dir(cfg);
  write_config_sidecar(dir / (cfg.experiment_id + "_training.csv"), cfg);

  std::printf("train-critic: %" PRIu64 " env steps, seed %" PRIu64 "\n",
              static_cast<std::uint64_t>(result.telemetry.empty()
                                             ? 0
                                             : result.telemetry.back().env_steps),
              cfg.master_seed);
  std::printf("  best eval infraction rate: %.4f (td loss %.6f)\n",
              result.best.eval_infraction_rate, result.best.eval_td_loss);
  std::printf("  collect %.1fs, train %.1fs, eval %.1fs\n", result.collect_seconds,
              result.train_seconds, result.eval_seconds);
  std::printf("  wrote %s\n", ckpt_path.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequential Monte Carlo planning experiments"};
  app.require_subcommand(1);

  ConfigFlags toy_f, abl_f, lgssm_f, mf_f, unb_f, train_f;
  int oracle_particles = 1000000;
  int oracle_reps = 24;
  int unb_runs = 10000;
  bool mutation_mode = false;

  CLI::App* toy = app.add_subcommand(
      "toy-benchmark", "Prior, rejection, value-heuristic, and critic-guided SMC on the "
                       "pursuit world");
  attach_config_flags(toy, toy_f);

  CLI::App* abl = app.add_subcommand(
      "ablation", "Particle-count by putative-action grid for plain and critic-guided SMC");
  attach_config_flags(abl, abl_f);

  CLI::App* lg = app.add_subcommand(
      "lgssm", "Evidence-error study on the linear-Gaussian model against a large-N oracle");
  attach_config_flags(lg, lgssm_f);
  lg->add_option("--oracle-particles", oracle_particles, "Particles per oracle repetition");
  lg->add_option("--oracle-reps", oracle_reps, "Oracle repetitions");

  CLI::App* mf = app.add_subcommand(
      "model-free", "Live single-particle control with putative actions, paired with the "
                    "prior baseline");
  attach_config_flags(mf, mf_f);

  CLI::App* unb = app.add_subcommand(
      "unbiasedness", "Evidence z-score suite against an enumeration oracle");
  attach_config_flags(unb, unb_f);
  unb->add_option("--runs", unb_runs, "Runs per case");
  unb->add_flag("--mutation-mode", mutation_mode,
                "Inject a per-step evidence bias; the suite must flag it (negative control)");

  CLI::App* train = app.add_subcommand(
      "train-critic", "Fit the soft-Q critic on the pursuit world and save a checkpoint");
  attach_config_flags(train, train_f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code != 0) {
      nlohmann::json err = {{"status", "error"},
                            {"type", "UsageError"},
                            {"message", e.what()}};
      std::fprintf(stderr, "%s\n", err.dump().c_str());
    }
    return code;
  }

  std::string command;
  try {
    if (toy->parsed()) {
      command = "toy-benchmark";
      return run_toy_benchmark(build_config(toy_f, command));
    }
    if (abl->parsed()) {
      command = "ablation";
      return run_ablation(build_config(abl_f, command));
    }
    if (lg->parsed()) {
      command = "lgssm";
      return run_lgssm(build_config(lgssm_f, command), oracle_particles, oracle_reps);
    }
    if (mf->parsed()) {
      command = "model-free";
      return run_model_free(build_config(mf_f, command));
    }
    if (unb->parsed()) {
      command = "unbiasedness";
      return run_unbiasedness(build_config(unb_f, command), unb_runs, mutation_mode);
    }
    command = "train-critic";
    return run_train_critic(build_config(train_f, command));
  } catch (const std::exception& e) {
    nlohmann::json err = {{"status", "error"},
                          {"type", error_kind(e)},
                          {"command", command},
                          {"message", e.what()}};
    std::fprintf(stderr, "%s\n", err.dump().c_str());
    return 1;
  }
}
