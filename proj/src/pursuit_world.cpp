#include "criticsmc/environments/pursuit_world.hpp"

#include <algorithm>
#include <cmath>

#include "criticsmc/errors.hpp"

namespace criticsmc {

namespace {

double dist(const Vec2& a, const Vec2& b) { return std::hypot(a.x - b.x, a.y - b.y); }

double uniform_in(Xoshiro256& rng, double lo, double hi) {
  return lo + (hi - lo) * rng.uniform();
}

}  // namespace

PursuitWorld::PursuitWorld(const PursuitConfig& cfg, std::uint64_t world_seed) : cfg_(cfg) {
  if (cfg_.n_adversaries < 0 || cfg_.n_adversaries > kMaxAdversaries) {
    throw ConfigError("n_adversaries out of range [0, 6]");
  }
  if (cfg_.gate_width <= 2.0 * cfg_.ego_radius) {
    throw ConfigError("gate_width must exceed the ego diameter");
  }
  Xoshiro256 rng(mix_seed(world_seed, 0x708ddULL));
  constexpr int kMaxTries = 100000;

  initial_.ego = {uniform_in(rng, 0.1, 0.9), uniform_in(rng, 0.1, 0.35)};
  goal_ = {uniform_in(rng, 0.1, 0.9), uniform_in(rng, 0.65, 0.9)};

  // Gates: 3 disjoint openings on the barrier with at least 0.06 clearance
  // between opening edges.
  const double min_gap = cfg_.gate_width + 0.06;
  bool placed = false;
  for (int attempt = 0; attempt < kMaxTries && !placed; ++attempt) {
    for (auto& x : gate_x_) x = uniform_in(rng, 0.08, 0.92);
    std::sort(gate_x_.begin(), gate_x_.end());
    placed = gate_x_[1] - gate_x_[0] >= min_gap && gate_x_[2] - gate_x_[1] >= min_gap;
  }
  if (!placed) throw ConfigError("could not place gates with required separation");

  for (int i = 0; i < cfg_.n_adversaries; ++i) {
    bool ok = false;
    for (int attempt = 0; attempt < kMaxTries && !ok; ++attempt) {
      Vec2 p{uniform_in(rng, 0.05, 0.95), uniform_in(rng, 0.05, 0.45)};
      ok = dist(p, initial_.ego) >= 0.1;
      for (int j = 0; ok && j < i; ++j) {
        ok = dist(p, initial_.adversaries[j]) >= 2.0 * cfg_.adversary_radius;
      }
      if (ok) initial_.adversaries[i] = p;
    }
    if (!ok) throw ConfigError("could not place adversaries with required separation");
  }
}

bool PursuitWorld::gate_admits(double x) const {
  const double half_opening = cfg_.gate_width / 2.0 - cfg_.ego_radius;
  for (double c : gate_x_) {
    if (std::abs(x - c) <= half_opening) return true;
  }
  return false;
}

PursuitWorld::State PursuitWorld::transition(const State& s, const Action& a) const {
  State next = s;
  next.t = s.t + 1;

  // Displacement clamped to the max step norm, direction preserved.
  double ax = a.x, ay = a.y;
  const double norm = std::hypot(ax, ay);
  if (norm > cfg_.max_step) {
    const double scale = cfg_.max_step / norm;
    ax *= scale;
    ay *= scale;
  }
  next.ego = {s.ego.x + ax, s.ego.y + ay};

  // Crossing the barrier line counts as blocked unless the crossing point lies
  // within a gate opening (shrunk by the ego radius).
  const double d0 = s.ego.y - cfg_.barrier_y;
  const double d1 = next.ego.y - cfg_.barrier_y;
  next.blocked = 0;
  if (d0 * d1 < 0.0) {
    const double x_cross = s.ego.x + (next.ego.x - s.ego.x) * (d0 / (d0 - d1));
    if (!gate_admits(x_cross)) next.blocked = 1;
  }

  // Adversaries chase the ego's start-of-step position at fixed speed.
  for (int i = 0; i < cfg_.n_adversaries; ++i) {
    const Vec2& p = s.adversaries[i];
    const double d = dist(p, s.ego);
    if (d > 0.0) {
      const double step = std::min(cfg_.adversary_speed, d);
      next.adversaries[i] = {p.x + (s.ego.x - p.x) / d * step, p.y + (s.ego.y - p.y) / d * step};
    }
  }
  return next;
}

bool PursuitWorld::constraint_ok(const State& s) const {
  if (s.blocked) return false;
  if (s.ego.x < 0.0 || s.ego.x > 1.0 || s.ego.y < 0.0 || s.ego.y > 1.0) return false;
  // Barrier body: the ego disc may only overlap the barrier band inside a gate.
  if (std::abs(s.ego.y - cfg_.barrier_y) < cfg_.barrier_half_thickness + cfg_.ego_radius &&
      !gate_admits(s.ego.x)) {
    return false;
  }
  const double r_sum = cfg_.ego_radius + cfg_.adversary_radius;
  for (int i = 0; i < cfg_.n_adversaries; ++i) {
    if (dist(s.adversaries[i], s.ego) < r_sum) return false;
  }
  return true;
}

double PursuitWorld::reward(const State&, const Action&, const State& s_next) const {
  return constraint_ok(s_next) ? 0.0 : -cfg_.penalty;
}

bool PursuitWorld::reached_goal(const State& s) const {
  return dist(s.ego, goal_) <= cfg_.goal_radius + cfg_.ego_radius;
}

void PursuitWorld::prior_sample(const State& s, Xoshiro256& rng, std::span<Action> out) const {
  const double dx = goal_.x - s.ego.x;
  const double dy = goal_.y - s.ego.y;
  const double d = std::hypot(dx, dy);
  Vec2 mu{0.0, 0.0};
  if (d > 0.0) {
    const double step = std::min(cfg_.max_step, d);
    mu = {dx / d * step, dy / d * step};
  }
  for (auto& a : out) {
    a.x = mu.x + cfg_.action_sigma * rng.normal();
    a.y = mu.y + cfg_.action_sigma * rng.normal();
  }
}

void PursuitWorld::features(const State& s, std::span<double> out) const {
  const int m = cfg_.n_adversaries;
  std::array<int, kMaxAdversaries> order{};
  std::array<double, kMaxAdversaries> d2{};
  for (int i = 0; i < m; ++i) {
    order[i] = i;
    const double dx = s.adversaries[i].x - s.ego.x;
    const double dy = s.adversaries[i].y - s.ego.y;
    d2[i] = dx * dx + dy * dy;
  }
  // Nearest-first; distance ties break on the lower index for determinism.
  std::sort(order.begin(), order.begin() + m,
            [&](int a, int b) { return d2[a] != d2[b] ? d2[a] < d2[b] : a < b; });
  std::size_t k = 0;
  for (int i = 0; i < m; ++i) {
    const Vec2& p = s.adversaries[order[i]];
    out[k++] = p.x - s.ego.x;
    out[k++] = p.y - s.ego.y;
  }
  for (double c : gate_x_) {
    out[k++] = c - s.ego.x;
    out[k++] = cfg_.barrier_y - s.ego.y;
  }
  out[k++] = goal_.x - s.ego.x;
  out[k++] = goal_.y - s.ego.y;
}

}  // namespace criticsmc
