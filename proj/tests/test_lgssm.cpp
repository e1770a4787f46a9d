#include <doctest.h>

#include <cmath>
#include <vector>

#include "criticsmc/engine.hpp"
#include "criticsmc/environments/lgssm.hpp"

using namespace criticsmc;

namespace {

// Independent re-derivation of the T=1 evidence: the one-step state is
// s_1 = 1.5 s_0 + eps with s_0, eps standard normal, so
//   p(O_1) = E_{s_0}[Phi(0.01 - 1.5 s_0) - Phi(-0.01 - 1.5 s_0)]
// up to the e^{-10000} mass outside the band. Simpson over s_0 with erf.
double t1_log_evidence_by_erf() {
  auto gauss_cdf = [](double x) { return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))); };
  const int n = 100001;
  const double lo = -10.0, hi = 10.0;
  const double h = (hi - lo) / (n - 1);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = lo + i * h;
    const double band = gauss_cdf(0.01 - 1.5 * x) - gauss_cdf(-0.01 - 1.5 * x);
    const double f = std::exp(-0.5 * x * x) / std::sqrt(2.0 * 3.14159265358979323846) * band;
    acc += f * ((i == 0 || i == n - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0));
  }
  return std::log(acc * h / 3.0);
}

}  // namespace

TEST_CASE("reward and constraint agree on the band edge") {
  const LgssmWorld env;
  using S = LgssmWorld::State;
  CHECK(env.constraint_ok(S{0, 0.01}));
  CHECK_FALSE(env.constraint_ok(S{0, 0.010000001}));
  CHECK(env.reward(S{0, 0.5}, 0.0, S{1, -0.01}) == 0.0);
  CHECK(env.reward(S{0, 0.5}, 0.0, S{1, 0.02}) == -10000.0);
  CHECK_FALSE(env.terminal(S{3, 55.0}));
}

TEST_CASE("busy-work iterations never change the dynamics") {
  LgssmConfig heavy;
  heavy.transition_cost_iters = 20000;
  const LgssmWorld slow(heavy), fast(LgssmConfig{});
  const LgssmWorld::State s{2, 0.3125};
  const auto a = slow.transition(s, -0.17);
  const auto b = fast.transition(s, -0.17);
  CHECK(a.x == b.x);
  CHECK(a.t == b.t);
}

TEST_CASE("prior sampler centers on half the current state") {
  const LgssmWorld env;
  Xoshiro256 rng(21);
  std::vector<double> a(200000);
  env.prior_sample(LgssmWorld::State{0, 0.8}, rng, std::span<double>(a));
  double sum = 0.0, sq = 0.0;
  for (double v : a) {
    sum += v;
    sq += v * v;
  }
  const double n = static_cast<double>(a.size());
  const double mean = sum / n;
  CHECK(std::abs(mean - 0.4) < 4.0 / std::sqrt(n));
  CHECK(std::abs(sq / n - mean * mean - 1.0) < 4.0 * std::sqrt(2.0 / n));
}

TEST_CASE("quadrature matches an erf-based integration at horizon one") {
  LgssmConfig cfg;
  cfg.horizon = 1;
  const double quad = lgssm_quadrature_evidence(cfg);
  const double ref = t1_log_evidence_by_erf();
  CHECK(quad == doctest::Approx(ref).epsilon(5e-7));
  // Value pinned so regressions in either integrator are loud.
  CHECK(quad == doctest::Approx(-5.4202941649983245).epsilon(1e-6));
}

TEST_CASE("quadrature is stable under grid refinement") {
  LgssmConfig cfg;
  cfg.horizon = 2;
  const double coarse = lgssm_quadrature_evidence(cfg, 2001, 8.0);
  const double fine = lgssm_quadrature_evidence(cfg, 4001, 8.0);
  const double wider = lgssm_quadrature_evidence(cfg, 4001, 9.0);
  CHECK(coarse == doctest::Approx(fine).epsilon(1e-6));
  CHECK(wider == doctest::Approx(fine).epsilon(1e-6));
}

TEST_CASE("large-N runs agree with the deterministic quadrature") {
  LgssmConfig cfg;
  const double truth = lgssm_quadrature_evidence(cfg);
  const auto est = lgssm_oracle_evidence(cfg, 20000, 12, 314);
  REQUIRE(est.reps.size() == 12);
  REQUIRE(est.std_error > 0.0);
  CHECK(std::abs(est.mean - truth) < 4.0 * est.std_error);
  // Sanity on the scale itself: about -49 nats for the default model.
  CHECK(est.mean < -40.0);
  CHECK(est.mean > -60.0);
}

TEST_CASE("analytic critic peaks at the action that re-centers the state") {
  const AnalyticLgssmCritic critic(1000.0);
  const LgssmWorld::State s{0, 0.37};
  const double actions[] = {-0.37, 0.0, 1.0};
  double q[3];
  critic.evaluate(s, std::span<const double>(actions, 3), std::span<double>(q, 3));
  CHECK(q[0] == 0.0);
  CHECK(q[1] == doctest::Approx(-370.0));
  CHECK(q[2] == doctest::Approx(-1370.0));
}

TEST_CASE("critic guidance cuts the failure rate at equal particle count") {
  // With N=30 plain SMC usually loses every particle to the penalty; the
  // analytic critic at the same N keeps runs in-band dramatically more often.
  const LgssmWorld env;
  const AnalyticLgssmCritic critic(1000.0);
  EngineOptions opts;
  opts.record_trajectories = false;
  int smc_hits = 0, guided_hits = 0;
  const int reps = 40;
  for (int r = 0; r < reps; ++r) {
    const auto seeds = RunSeeds::from(mix_seed(777, static_cast<std::uint64_t>(r)));
    const auto plain = run_smc(env, 30, env.horizon(), seeds, opts);
    const auto guided = run_critic_smc(env, critic, 30, 128, env.horizon(), seeds, opts);
    // A run "hits" if its evidence shows no penalty hit: above -10000 + slack.
    smc_hits += plain.log_evidence > -5000.0;
    guided_hits += guided.log_evidence > -5000.0;
  }
  CHECK(guided_hits >= smc_hits);
  CHECK(guided_hits >= reps / 2);
}
