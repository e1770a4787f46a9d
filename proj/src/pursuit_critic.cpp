#include "criticsmc/critic/pursuit_critic.hpp"

#include <stdexcept>

#include "criticsmc/errors.hpp"

namespace criticsmc {

PursuitMlpCritic::PursuitMlpCritic(const PursuitWorld& world, const MlpNet& net,
                                   double action_scale, double reward_scale)
    : world_(&world), net_(net), action_scale_(action_scale), reward_scale_(reward_scale) {
  if (net.dims().state != world.feature_dim() || net.dims().action != 2) {
    throw ConfigError("PursuitMlpCritic: network dimensions do not match the world");
  }
  if (!(action_scale > 0.0) || !(reward_scale > 0.0)) {
    throw ConfigError("PursuitMlpCritic: scales must be positive");
  }
}

namespace {

MlpNet checked_net(const PursuitWorld& world, const CriticCheckpoint& ckpt) {
  if (ckpt.dims.state != world.feature_dim() || ckpt.dims.action != 2) {
    throw CheckpointError("checkpoint dimensions (" + std::to_string(ckpt.dims.state) + ", " +
                          std::to_string(ckpt.dims.action) +
                          ") do not match the world's feature layout (" +
                          std::to_string(world.feature_dim()) + ", 2)");
  }
  return ckpt.to_net();
}

}  // namespace

PursuitMlpCritic::PursuitMlpCritic(const PursuitWorld& world, const CriticCheckpoint& ckpt)
    : PursuitMlpCritic(world, checked_net(world, ckpt), ckpt.action_scale, ckpt.reward_scale) {}

void PursuitMlpCritic::evaluate(const PursuitWorld::State& s, std::span<const Vec2> actions,
                                std::span<double> out) const {
  if (actions.size() != out.size()) {
    throw std::invalid_argument("PursuitMlpCritic::evaluate: size mismatch");
  }
  const int dim = world_->feature_dim();
  feat_.resize(static_cast<std::size_t>(dim));
  world_->features(s, feat_);
  feat_f_ = Eigen::Map<const Eigen::VectorXd>(feat_.data(), dim).cast<float>();
  const auto ctx = net_.encode_state(feat_f_);
  const auto k = static_cast<Eigen::Index>(actions.size());
  acts_.resize(2, k);
  const float inv = static_cast<float>(1.0 / action_scale_);
  for (Eigen::Index i = 0; i < k; ++i) {
    acts_(0, i) = static_cast<float>(actions[static_cast<std::size_t>(i)].x) * inv;
    acts_(1, i) = static_cast<float>(actions[static_cast<std::size_t>(i)].y) * inv;
  }
  q_.resize(k);
  net_.score_actions(ctx, acts_, q_);
  for (Eigen::Index i = 0; i < k; ++i) {
    out[static_cast<std::size_t>(i)] = reward_scale_ * static_cast<double>(q_(i));
  }
}

void PursuitMlpTrainCritic::evaluate(const PursuitWorld::State& s, std::span<const Vec2> actions,
                                     std::span<double> out) const {
  if (actions.size() != out.size()) {
    throw std::invalid_argument("PursuitMlpTrainCritic::evaluate: size mismatch");
  }
  const int dim = world_->feature_dim();
  feat_.resize(static_cast<std::size_t>(dim));
  world_->features(s, feat_);
  const auto k = static_cast<Eigen::Index>(actions.size());
  states_.resize(dim, k);
  states_.colwise() = Eigen::Map<const Eigen::VectorXd>(feat_.data(), dim);
  acts_.resize(2, k);
  const double inv = 1.0 / action_scale_;
  for (Eigen::Index i = 0; i < k; ++i) {
    acts_(0, i) = actions[static_cast<std::size_t>(i)].x * inv;
    acts_(1, i) = actions[static_cast<std::size_t>(i)].y * inv;
  }
  net_->forward(states_, acts_, q_);
  for (Eigen::Index i = 0; i < k; ++i) {
    out[static_cast<std::size_t>(i)] = reward_scale_ * q_(i);
  }
}

}  // namespace criticsmc
