#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "criticsmc/rng.hpp"

namespace criticsmc {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Vec2&) const = default;
};

/// Planar pursuit-evasion arena on [0,1]^2. The ego agent random-walks toward a
/// goal on the far side of a horizontal barrier pierced by three gates while
/// deterministic adversaries chase it. An infraction (adversary overlap, barrier
/// hit, crossing outside a gate, or leaving the arena) scores -penalty once and
/// terminates the episode, as does reaching the goal.
struct PursuitConfig {
  double ego_radius = 0.02;
  double adversary_radius = 0.03;
  double goal_radius = 0.04;
  double adversary_speed = 0.01;
  double max_step = 0.025;
  double action_sigma = 0.02;
  int horizon = 40;
  double barrier_y = 0.5;
  double barrier_half_thickness = 0.005;
  double gate_width = 0.08;
  int n_adversaries = 3;
  double penalty = 10000.0;
};

class PursuitWorld {
 public:
  static constexpr int kGates = 3;
  static constexpr int kMaxAdversaries = 6;

  struct State {
    std::int32_t t = 0;
    std::uint8_t blocked = 0;  // last transition crossed the barrier line outside a gate
    Vec2 ego;
    std::array<Vec2, kMaxAdversaries> adversaries{};
    bool operator==(const State&) const = default;
  };
  using Action = Vec2;

  /// Builds one episode's world: ego and adversaries are placed uniformly below
  /// the barrier (adversaries at least 0.1 from the ego), the goal uniformly
  /// above it, and three gates on the barrier with disjoint openings. All
  /// placement randomness derives from world_seed.
  PursuitWorld(const PursuitConfig& cfg, std::uint64_t world_seed);

  /// The initial state is fixed per world; the rng argument is not consumed.
  State sample_initial(Xoshiro256&) const { return initial_; }
  State transition(const State& s, const Action& a) const;
  double reward(const State&, const Action&, const State& s_next) const;
  bool constraint_ok(const State& s) const;
  bool terminal(const State& s) const { return reached_goal(s) || !constraint_ok(s); }
  int horizon() const { return cfg_.horizon; }
  void prior_sample(const State& s, Xoshiro256& rng, std::span<Action> out) const;

  bool reached_goal(const State& s) const;

  /// Critic features: displacement vectors from the ego, normalized by the unit
  /// arena size, in the fixed order [adversaries nearest-first] x M, [gates by
  /// ascending x] x 3, [goal]; dimension 2*(n_adversaries + 4).
  int feature_dim() const { return 2 * (cfg_.n_adversaries + kGates + 1); }
  void features(const State& s, std::span<double> out) const;

  const PursuitConfig& config() const { return cfg_; }
  const Vec2& goal() const { return goal_; }
  std::span<const double> gate_centers() const { return {gate_x_.data(), gate_x_.size()}; }
  const State& initial_state() const { return initial_; }

 private:
  bool gate_admits(double x) const;

  PursuitConfig cfg_;
  Vec2 goal_;
  std::array<double, kGates> gate_x_{};
  State initial_;
};

}  // namespace criticsmc
