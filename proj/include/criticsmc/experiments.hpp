#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "criticsmc/critic/checkpoint.hpp"
#include "criticsmc/environments/lgssm.hpp"
#include "criticsmc/environments/pursuit_world.hpp"
#include "criticsmc/training.hpp"

namespace criticsmc {

/// Fully resolved experiment description. Parsed from a strict-key JSON file;
/// every field (including defaults) is serialized back into each result row so
/// a row alone suffices to reproduce its numbers.
struct ExperimentConfig {
  std::string experiment_id = "experiment";
  std::string environment = "pursuit";  // "pursuit" | "lgssm"
  PursuitConfig pursuit;
  LgssmConfig lgssm;
  std::string variant = "critic_smc";  // prior | rejection | smc | smc_value_heuristic |
                                       // critic_smc | model_free_control
  int n = 50;
  int k = 1024;
  int t = -1;  // horizon override; -1 uses the environment default
  std::string critic = "train";        // checkpoint path, or "train" to fit one first
  std::string critic_target = "soft";  // "soft" | "hard"
  int episodes = 500;
  int rollouts_per_episode = 6;
  std::uint64_t master_seed = 0;
  std::string out;  // output directory; empty means CRITICSMC_OUT_DIR or "."
  int rejection_max_trials = 1000;
  int workers = 1;
  MlpTrainConfig training;  // training.env is overwritten by the pursuit block
  std::string command;      // subcommand that produced this row ("" for hand-written configs)
  std::string notes;        // derivation notes attached by commands (e.g. putative expansion)
};

ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
nlohmann::json experiment_config_json(const ExperimentConfig& cfg);

/// Output directory resolution: config value, else $CRITICSMC_OUT_DIR, else ".".
std::filesystem::path resolve_out_dir(const ExperimentConfig& cfg);

struct ResultRow {
  std::string experiment_id;
  std::string variant;
  int n = 0;
  int k = 0;
  std::uint64_t seed = 0;
  double infraction_rate = 0.0;
  double mean_log_evidence = 0.0;
  double evidence_std_error = 0.0;
  double wall_clock_seconds = 0.0;   // inference only; excluded from determinism checks
  std::string resolved_config;       // compact JSON, the full provenance for this row
};

/// Append rows to a CSV, creating it with a schema-versioned documentation
/// header when new or empty. Existing non-empty files receive rows only.
void append_result_rows(const std::filesystem::path& csv_path, std::span<const ResultRow> rows);

/// Parse rows back (comment and header lines skipped). Used by determinism checks.
std::vector<ResultRow> read_result_rows(const std::filesystem::path& csv_path);

/// Writes "<csv>.config.json" with the resolved config next to a results CSV.
void write_config_sidecar(const std::filesystem::path& csv_path, const ExperimentConfig& cfg);

/// One rollout's outcome. "infracted" scores the evidence-weighted best
/// particle's whole trajectory; rejection failure after max trials counts as an
/// infraction. "trials" is 1 except for the rejection variant.
struct RolloutOutcome {
  int episode = 0;
  int rollout = 0;
  bool infracted = false;
  double log_evidence = 0.0;
  int trials = 1;
};

/// Runs one pursuit variant over episodes x rollouts on the shared episode-seed
/// grid. The critic pointer may be null for critic-free variants.
std::vector<RolloutOutcome> run_pursuit_variant(const ExperimentConfig& cfg,
                                                const std::string& variant, int n, int k,
                                                const CriticCheckpoint* critic,
                                                double* wall_seconds);

/// Reduce outcomes to a result row plus per-episode infraction fractions
/// (episode-major, for paired cluster bootstraps).
ResultRow summarize_outcomes(const ExperimentConfig& cfg, const std::string& variant, int n,
                             int k, std::span<const RolloutOutcome> outcomes, double wall_seconds,
                             std::vector<double>* episode_rates);

struct ToyBenchmarkResult {
  std::vector<ResultRow> rows;  // prior, rejection, smc_value_heuristic, critic_smc
  // episode_rates[e] = per-variant infraction fraction of episode e, row order above
  std::vector<std::vector<double>> episode_rates;
  std::vector<int> rejection_trials;  // per rollout, episode-major
};
ToyBenchmarkResult cmd_toy_benchmark(const ExperimentConfig& cfg, const CriticCheckpoint& ckpt);

struct AblationCell {
  std::string variant;
  int n = 0;
  int k = 0;
  std::vector<double> episode_rates;
  ResultRow row;
};
/// Full grid N x K x {smc, critic_smc}; K>1 smc cells run the putative
/// expansion (N*K transitions per step) and are flagged in the row provenance.
std::vector<AblationCell> cmd_ablation_grid(const ExperimentConfig& cfg,
                                            const CriticCheckpoint& ckpt);

struct LgssmCell {
  std::string variant;
  int n = 0;
  int k = 0;
  std::vector<double> rep_log_evidence;
  std::vector<double> abs_nll_errors;  // |log_evidence - oracle| per repetition
  double mean_wall_seconds = 0.0;
  ResultRow row;
};
struct LgssmStudyResult {
  std::vector<LgssmCell> cells;
  double oracle_log_evidence = 0.0;
  double oracle_std_error = 0.0;
};
/// Both samplers on the grid N in {1,5,10} x K in {1,100,1000}, paired across
/// cells by shared repetition seeds; cfg.episodes is the repetition count. The
/// oracle is a large-N self-estimate with the transition cost knob disabled.
LgssmStudyResult cmd_lgssm_study(const ExperimentConfig& cfg, int oracle_particles = 1000000,
                                 int oracle_reps = 24);

struct ModelFreeResult {
  std::vector<ResultRow> rows;  // model_free_control, prior
  std::vector<std::vector<double>> episode_rates;
};
ModelFreeResult cmd_model_free_control(const ExperimentConfig& cfg, const CriticCheckpoint& ckpt);

struct UnbiasednessCase {
  std::string name;
  int runs = 0;
  double truth = 0.0;      // enumerated p(O)
  double mean = 0.0;       // mean of exp(log_evidence)
  double std_error = 0.0;  // standard error of that mean
  double z = 0.0;
  bool pass = false;  // |z| < 3
};
struct UnbiasednessReport {
  std::vector<UnbiasednessCase> cases;
  bool all_pass = false;
  bool mutated = false;
};
/// Enumeration-oracle z-score suite over all sampler variants on a 3-state
/// MDP, including an adversarial critic whose constant offsets re-rank actions
/// against the exact scores. Mutation mode injects a deliberate per-step
/// evidence bias (a simulated broken weight normalization) that the suite must
/// flag as failure.
UnbiasednessReport cmd_unbiasedness_suite(int runs_per_case, std::uint64_t seed,
                                          bool mutation_mode);

/// Train a critic per the config's pursuit + training blocks, saving the best
/// checkpoint and a telemetry CSV into the out directory. Returns the
/// checkpoint path.
std::filesystem::path cmd_train_critic(const ExperimentConfig& cfg, MlpTrainResult* result);

/// Loads cfg.critic, or trains first when it equals "train".
CriticCheckpoint resolve_critic(const ExperimentConfig& cfg);

}  // namespace criticsmc
