#include <doctest.h>

#include <cmath>
#include <vector>

#include "criticsmc/engine.hpp"
#include "criticsmc/environments/pursuit_world.hpp"

using namespace criticsmc;

namespace {

double dist(const Vec2& a, const Vec2& b) { return std::hypot(a.x - b.x, a.y - b.y); }

}  // namespace

TEST_CASE("world generation is deterministic and well formed") {
  const PursuitConfig cfg;
  const PursuitWorld a(cfg, 123), b(cfg, 123), c(cfg, 124);
  CHECK(a.initial_state() == b.initial_state());
  CHECK(a.goal() == b.goal());
  CHECK_FALSE(a.initial_state() == c.initial_state());

  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const PursuitWorld w(cfg, seed);
    const auto& s0 = w.initial_state();
    CHECK(w.constraint_ok(s0));
    CHECK_FALSE(w.terminal(s0));
    // Ego below the barrier, goal above it.
    CHECK(s0.ego.y < cfg.barrier_y);
    CHECK(w.goal().y > cfg.barrier_y);
    // Adversaries respect the separation radius.
    for (int i = 0; i < cfg.n_adversaries; ++i) {
      CHECK(dist(s0.adversaries[i], s0.ego) >= 0.1);
    }
    // Gates are sorted with disjoint openings.
    const auto gates = w.gate_centers();
    REQUIRE(gates.size() == 3);
    CHECK(gates[1] - gates[0] >= cfg.gate_width + 0.06);
    CHECK(gates[2] - gates[1] >= cfg.gate_width + 0.06);
  }
}

TEST_CASE("adversaries close in by exactly their speed") {
  const PursuitConfig cfg;
  const PursuitWorld w(cfg, 7);
  auto s = w.initial_state();
  const double before = dist(s.adversaries[0], s.ego);
  const auto next = w.transition(s, {0.0, 0.0});
  const double after = dist(next.adversaries[0], s.ego);
  CHECK(after == doctest::Approx(before - cfg.adversary_speed).epsilon(1e-12));
}

TEST_CASE("a stationary ego inside pursuit range is always caught") {
  const PursuitConfig cfg;
  const PursuitWorld w(cfg, 99);
  auto s = w.initial_state();
  // Closest adversary starts within horizon * speed of the ego by construction
  // of this particular seed; verify, then roll forward with zero actions.
  double dmin = 1e9;
  for (int i = 0; i < cfg.n_adversaries; ++i) dmin = std::min(dmin, dist(s.adversaries[i], s.ego));
  REQUIRE(dmin <= cfg.horizon * cfg.adversary_speed);
  bool infracted = false;
  for (int t = 0; t < cfg.horizon && !infracted; ++t) {
    s = w.transition(s, {0.0, 0.0});
    infracted = !w.constraint_ok(s);
    if (infracted) CHECK(w.reward(s, {0.0, 0.0}, s) == -cfg.penalty);
  }
  CHECK(infracted);
}

TEST_CASE("displacements clamp to the maximum step norm") {
  const PursuitConfig cfg;
  const PursuitWorld w(cfg, 3);
  const auto s = w.initial_state();
  const auto big = w.transition(s, {1.0, 0.0});
  CHECK(big.ego.x == doctest::Approx(s.ego.x + cfg.max_step).epsilon(1e-12));
  CHECK(big.ego.y == doctest::Approx(s.ego.y).epsilon(1e-12));
  // Direction preserved under clamping.
  const auto diag = w.transition(s, {3.0, 4.0});
  const double dx = diag.ego.x - s.ego.x, dy = diag.ego.y - s.ego.y;
  CHECK(std::hypot(dx, dy) == doctest::Approx(cfg.max_step).epsilon(1e-12));
  CHECK(dy / dx == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
  // Small actions pass through exactly.
  const auto small = w.transition(s, {0.01, -0.005});
  CHECK(small.ego.x == s.ego.x + 0.01);
  CHECK(small.ego.y == s.ego.y - 0.005);
}

TEST_CASE("barrier crossings are blocked outside gates and admitted inside") {
  PursuitConfig cfg;
  cfg.n_adversaries = 0;  // isolate the barrier rules
  const PursuitWorld w(cfg, 5);
  const auto gates = w.gate_centers();

  // Mid-point between gate 0 and gate 1 is guaranteed wall.
  const double wall_x = (gates[0] + gates[1]) / 2.0;
  PursuitWorld::State s = w.initial_state();
  s.ego = {wall_x, cfg.barrier_y - 0.013};
  auto hit = w.transition(s, {0.0, 0.025});
  CHECK(hit.blocked == 1);
  CHECK_FALSE(w.constraint_ok(hit));
  CHECK(w.terminal(hit));
  CHECK(w.reward(s, {0.0, 0.025}, hit) == -cfg.penalty);

  // Same jump through a gate center is clean: end state is past the band.
  s.ego = {gates[1], cfg.barrier_y - 0.013};
  auto through = w.transition(s, {0.0, 0.025});
  CHECK(through.blocked == 0);
  // |y - barrier| = 0.012 < 0.025 still overlaps the band but sits inside the
  // gate opening, so it is admitted.
  CHECK(w.constraint_ok(through));

  // Grazing the band outside a gate without crossing the line is still a hit.
  s.ego = {wall_x, cfg.barrier_y - 0.030};
  auto graze = w.transition(s, {0.0, 0.008});
  CHECK(graze.blocked == 0);
  CHECK_FALSE(w.constraint_ok(graze));
}

TEST_CASE("leaving the arena is an infraction") {
  PursuitConfig cfg;
  cfg.n_adversaries = 0;
  const PursuitWorld w(cfg, 11);
  PursuitWorld::State s = w.initial_state();
  s.ego = {0.99, 0.2};
  const auto out = w.transition(s, {0.025, 0.0});
  CHECK(out.ego.x > 1.0);
  CHECK_FALSE(w.constraint_ok(out));
  CHECK(w.terminal(out));
}

TEST_CASE("goal contact terminates without infraction") {
  PursuitConfig cfg;
  cfg.n_adversaries = 0;
  const PursuitWorld w(cfg, 13);
  PursuitWorld::State s = w.initial_state();
  s.ego = {w.goal().x, w.goal().y - cfg.goal_radius - cfg.ego_radius + 1e-9};
  CHECK(w.reached_goal(s));
  CHECK(w.terminal(s));
  CHECK(w.constraint_ok(s));
  s.ego.y -= 0.01;
  CHECK_FALSE(w.reached_goal(s));
}

TEST_CASE("prior drives toward the goal with configured noise") {
  PursuitConfig cfg;
  const PursuitWorld w(cfg, 17);
  const auto s = w.initial_state();
  const double d = dist(s.ego, w.goal());
  REQUIRE(d > cfg.max_step);

  Xoshiro256 rng(55);
  std::vector<Vec2> acts(100000);
  w.prior_sample(s, rng, std::span<Vec2>(acts));
  double mx = 0.0, my = 0.0;
  for (const auto& a : acts) {
    mx += a.x;
    my += a.y;
  }
  mx /= acts.size();
  my /= acts.size();
  const double ex = (w.goal().x - s.ego.x) / d * cfg.max_step;
  const double ey = (w.goal().y - s.ego.y) / d * cfg.max_step;
  const double tol = 4.0 * cfg.action_sigma / std::sqrt(static_cast<double>(acts.size()));
  CHECK(std::abs(mx - ex) < tol);
  CHECK(std::abs(my - ey) < tol);

  // Zero noise collapses to the deterministic step toward the goal.
  PursuitConfig det = cfg;
  det.action_sigma = 0.0;
  const PursuitWorld wd(det, 17);
  Vec2 one[1];
  wd.prior_sample(wd.initial_state(), rng, std::span<Vec2>(one, 1));
  CHECK(one[0].x == doctest::Approx(ex).epsilon(1e-12));
  CHECK(one[0].y == doctest::Approx(ey).epsilon(1e-12));

  // At the goal the mean displacement is zero.
  PursuitWorld::State at_goal = s;
  at_goal.ego = wd.goal();
  wd.prior_sample(at_goal, rng, std::span<Vec2>(one, 1));
  CHECK(one[0].x == 0.0);
  CHECK(one[0].y == 0.0);
}

TEST_CASE("feature blocks are ego-relative displacements in documented order") {
  const PursuitConfig cfg;
  const PursuitWorld w(cfg, 19);
  REQUIRE(w.feature_dim() == 14);
  const auto s = w.initial_state();
  std::vector<double> f(w.feature_dim());
  w.features(s, std::span<double>(f));

  // Adversary block: nearest first, each entry an (dx, dy) pair.
  std::vector<double> dists;
  for (int i = 0; i < cfg.n_adversaries; ++i) dists.push_back(dist(s.adversaries[i], s.ego));
  std::sort(dists.begin(), dists.end());
  for (int i = 0; i < cfg.n_adversaries; ++i) {
    CHECK(std::hypot(f[2 * i], f[2 * i + 1]) == doctest::Approx(dists[i]).epsilon(1e-12));
  }
  // Gate block mirrors gate centers.
  const auto gates = w.gate_centers();
  for (int g = 0; g < 3; ++g) {
    CHECK(f[6 + 2 * g] == gates[g] - s.ego.x);
    CHECK(f[6 + 2 * g + 1] == cfg.barrier_y - s.ego.y);
  }
  // Goal block last.
  CHECK(f[12] == w.goal().x - s.ego.x);
  CHECK(f[13] == w.goal().y - s.ego.y);

  // Equal shifts of ego and referents leave the blocks unchanged, verified by
  // comparing against a manually shifted copy of the same geometry.
  PursuitWorld::State shifted = s;
  shifted.ego = {s.ego.x + 0.02, s.ego.y - 0.01};
  for (int i = 0; i < cfg.n_adversaries; ++i) {
    shifted.adversaries[i] = {s.adversaries[i].x + 0.02, s.adversaries[i].y - 0.01};
  }
  std::vector<double> g(w.feature_dim());
  w.features(shifted, std::span<double>(g));
  for (int i = 0; i < 2 * cfg.n_adversaries; ++i) {
    CHECK(std::abs(g[i] - f[i]) < 1e-12);
  }
}

TEST_CASE("prior rollouts mostly fail while many particles beat the wall") {
  // Smoke calibration: single prior rollouts should usually infract, and a
  // moderately sized particle system should find clean trajectories far more
  // often, otherwise the task is mistuned for the planner comparisons.
  const PursuitConfig cfg;
  int prior_infractions = 0;
  int smc_clean = 0;
  const int episodes = 60;
  EngineOptions opts;
  opts.record_trajectories = false;
  for (std::uint64_t e = 0; e < episodes; ++e) {
    const PursuitWorld w(cfg, mix_seed(5000, e));
    const auto seeds = RunSeeds::from(mix_seed(6000, e));
    const auto solo = run_smc(w, 1, cfg.horizon, seeds, opts);
    prior_infractions += solo.particles.infracted[0] != 0;
    const auto many = run_smc(w, 50, cfg.horizon, seeds, opts);
    bool any_clean = false;
    for (std::size_t i = 0; i < many.particles.infracted.size(); ++i) {
      any_clean = any_clean || many.particles.infracted[i] == 0;
    }
    smc_clean += any_clean;
  }
  // Loose bands; exact rates are calibrated and recorded by the experiment
  // harness, this guards against gross mistuning.
  CHECK(prior_infractions >= episodes / 2);
  CHECK(prior_infractions <= episodes - 2);
  CHECK(smc_clean >= episodes / 2);
}
