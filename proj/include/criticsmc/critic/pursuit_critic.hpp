#pragma once

#include <span>
#include <vector>

#include "criticsmc/critic/checkpoint.hpp"
#include "criticsmc/critic/mlp_net.hpp"
#include "criticsmc/environments/pursuit_world.hpp"

namespace criticsmc {

/// Rollout-time critic over the pursuit world: float32 snapshot of a trained
/// network. Feature extraction runs once per state; each putative action then
/// costs one action-tower plus head pass. Outputs are rescaled to log-space
/// units (network regresses rewards divided by reward_scale). Copy one
/// instance per worker; evaluate reuses internal scratch and is not
/// thread-safe on a shared instance.
class PursuitMlpCritic {
 public:
  PursuitMlpCritic(const PursuitWorld& world, const MlpNet& net, double action_scale,
                   double reward_scale);

  /// Validates checkpoint dimensions against the world's feature layout.
  PursuitMlpCritic(const PursuitWorld& world, const CriticCheckpoint& ckpt);

  void evaluate(const PursuitWorld::State& s, std::span<const Vec2> actions,
                std::span<double> out) const;

  double action_scale() const { return action_scale_; }
  double reward_scale() const { return reward_scale_; }

 private:
  const PursuitWorld* world_;
  MlpNetF net_;
  double action_scale_;
  double reward_scale_;
  mutable std::vector<double> feat_;
  mutable Eigen::VectorXf feat_f_;
  mutable Eigen::MatrixXf acts_;
  mutable Eigen::RowVectorXf q_;
};

/// Double-precision critic view over a live training network; used for TD
/// target computation so that training numerics stay in one precision.
class PursuitMlpTrainCritic {
 public:
  PursuitMlpTrainCritic(const PursuitWorld& world, const MlpNet& net, double action_scale,
                        double reward_scale)
      : world_(&world), net_(&net), action_scale_(action_scale), reward_scale_(reward_scale) {}

  void evaluate(const PursuitWorld::State& s, std::span<const Vec2> actions,
                std::span<double> out) const;

 private:
  const PursuitWorld* world_;
  const MlpNet* net_;
  double action_scale_;
  double reward_scale_;
  mutable std::vector<double> feat_;
  mutable Eigen::MatrixXd states_;
  mutable Eigen::MatrixXd acts_;
  mutable Eigen::RowVectorXd q_;
};

}  // namespace criticsmc
