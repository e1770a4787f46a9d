#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "criticsmc/critic/mlp_net.hpp"

namespace criticsmc {

/// Serialized critic: layer shapes, flat parameters, and the input/output
/// normalization constants needed to reproduce evaluations exactly.
///   - actions are divided by action_scale before entering the network;
///   - network outputs are multiplied by reward_scale to recover log-space
///     values (training regresses rewards scaled by 1/reward_scale).
struct CriticCheckpoint {
  static constexpr int kVersion = 1;

  MlpDims dims;
  std::vector<double> params;  // MlpNet flat layout
  double action_scale = 1.0;
  double reward_scale = 1.0;
  double gamma = 0.99;
  std::string feature_layout;  // documents the feature convention the net was trained on

  // Training provenance; informational only.
  std::uint64_t trained_env_steps = 0;
  std::uint64_t train_seed = 0;
  double eval_infraction_rate = -1.0;  // -1 = never evaluated
  double eval_td_loss = -1.0;

  static CriticCheckpoint from_net(const MlpNet& net);
  MlpNet to_net() const;  // throws CheckpointError if params do not match dims
};

/// Human-readable JSON with full shortest-round-trip doubles.
void save_checkpoint(const CriticCheckpoint& ckpt, const std::string& path);

/// Throws CheckpointError on missing file, malformed JSON, wrong format tag or
/// version, or any shape/parameter-count mismatch.
CriticCheckpoint load_checkpoint(const std::string& path);

}  // namespace criticsmc
