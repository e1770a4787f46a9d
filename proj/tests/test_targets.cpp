#include <cmath>
#include <span>
#include <vector>

#include "criticsmc/critic/targets.hpp"
#include "criticsmc/environments/discrete_mdp.hpp"
#include "criticsmc/math.hpp"
#include "doctest.h"

using namespace criticsmc;

namespace {

DiscreteMdp hand_mdp() {
  return DiscreteMdp(2, 2, 2, {0, 1, 0, 1}, {-1.0, -0.5, -1.0, -0.5},
                     {0.5, 0.5, 0.5, 0.5}, {1.0, 0.0});
}

/// Wrapper whose prior "sampler" enumerates the action set in order. With a
/// uniform policy, a K=n_actions draw makes the K-sample log-mean-exp equal
/// the exact expectation under the prior.
struct ExhaustiveMdp {
  const DiscreteMdp* mdp;
  using State = DiscreteMdp::State;
  using Action = DiscreteMdp::Action;
  State sample_initial(Xoshiro256& rng) const { return mdp->sample_initial(rng); }
  State transition(const State& s, const Action& a) const { return mdp->transition(s, a); }
  double reward(const State& s, const Action& a, const State& sn) const {
    return mdp->reward(s, a, sn);
  }
  bool constraint_ok(const State& s) const { return mdp->constraint_ok(s); }
  bool terminal(const State& s) const { return mdp->terminal(s); }
  int horizon() const { return mdp->horizon(); }
  void prior_sample(const State&, Xoshiro256&, std::span<Action> out) const {
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = static_cast<Action>(i % static_cast<std::size_t>(mdp->n_actions()));
    }
  }
};

struct ConstantCritic {
  double c;
  void evaluate(const DiscreteMdp::State&, std::span<const DiscreteMdp::Action> actions,
                std::span<double> out) const {
    for (std::size_t i = 0; i < actions.size(); ++i) out[i] = c;
  }
};

struct ActionValueCritic {
  std::vector<double> by_action;
  void evaluate(const DiscreteMdp::State&, std::span<const DiscreteMdp::Action> actions,
                std::span<double> out) const {
    for (std::size_t i = 0; i < actions.size(); ++i) {
      out[i] = by_action[static_cast<std::size_t>(actions[i])];
    }
  }
};

}  // namespace

TEST_CASE("targets: constant critic gives r + gamma*c exactly, any K") {
  const auto mdp = hand_mdp();
  const ExhaustiveMdp env{&mdp};
  const ConstantCritic critic{-2.5};
  Xoshiro256 rng(3);
  const DiscreteMdp::State s_next{1, 0};
  for (int k : {1, 3, 7, 64}) {
    // Soft: lse of K equal values minus log K cancels up to one rounding step.
    CHECK(soft_q_target(0.0, s_next, false, env, critic, k, 0.99, rng) ==
          doctest::Approx(0.99 * -2.5).epsilon(1e-15));
    // Hard: max of equal values is exact.
    CHECK(hard_q_target(0.0, s_next, false, env, critic, k, 0.99, rng) == 0.99 * -2.5);
  }
}

TEST_CASE("targets: terminal transitions return the reward alone") {
  const auto mdp = hand_mdp();
  const ExhaustiveMdp env{&mdp};
  const ConstantCritic critic{55.0};
  Xoshiro256 rng(4);
  const DiscreteMdp::State s_next{2, 0};
  CHECK(soft_q_target(-10000.0, s_next, true, env, critic, 8, 0.99, rng) == -10000.0);
  CHECK(hard_q_target(-10000.0, s_next, true, env, critic, 8, 0.99, rng) == -10000.0);
}

TEST_CASE("targets: hard takes the max, soft the log-mean-exp") {
  const auto mdp = hand_mdp();
  const ExhaustiveMdp env{&mdp};
  const ActionValueCritic critic{{-1.0, -3.0}};
  Xoshiro256 rng(5);
  const DiscreteMdp::State s_next{1, 0};
  CHECK(hard_q_target(0.0, s_next, false, env, critic, 2, 1.0, rng) == -1.0);
  const double expect_soft = std::log(0.5 * (std::exp(-1.0) + std::exp(-3.0)));
  CHECK(soft_q_target(0.0, s_next, false, env, critic, 2, 1.0, rng) ==
        doctest::Approx(expect_soft).epsilon(1e-15));
}

TEST_CASE("targets: exhaustive soft targets reproduce the exact backward recursion") {
  // Uniform prior makes enumeration equivalent to exact expectation.
  const auto mdp = hand_mdp();
  const ExhaustiveMdp env{&mdp};
  const SoftQTable exact = soft_q_exact(mdp, 1.0);
  const TableCritic critic(exact);
  Xoshiro256 rng(6);
  for (int t = 0; t < mdp.horizon(); ++t) {
    for (int s = 0; s < mdp.n_states(); ++s) {
      if (mdp.terminal_state(s)) continue;
      for (int a = 0; a < mdp.n_actions(); ++a) {
        const DiscreteMdp::State st{t, s};
        const auto sn = mdp.transition(st, a);
        const bool term = sn.t >= mdp.horizon() || mdp.terminal(sn);
        const double y = soft_q_target(mdp.reward(st, a, sn), sn, term, env, critic,
                                       mdp.n_actions(), 1.0, rng);
        CHECK(std::abs(y - exact.at(t, s, a)) < 1e-12);
      }
    }
  }
}

TEST_CASE("targets: hard >= soft on shared action draws") {
  const auto mdp = hand_mdp();
  Xoshiro256 table_rng(7);
  SoftQTable noisy;
  noisy.horizon = mdp.horizon();
  noisy.n_states = mdp.n_states();
  noisy.n_actions = mdp.n_actions();
  noisy.q.resize(static_cast<std::size_t>(2 * 2 * 2));
  for (auto& v : noisy.q) v = 3.0 * table_rng.normal();
  const TableCritic critic(noisy);
  Xoshiro256 rng(8);
  const DiscreteMdp::State s_next{1, 1};
  for (int rep = 0; rep < 200; ++rep) {
    Xoshiro256 rng_soft = rng;  // identical draw streams for both targets
    Xoshiro256 rng_hard = rng;
    const double soft = soft_q_target(-0.25, s_next, false, mdp, critic, 5, 0.9, rng_soft);
    const double hard = hard_q_target(-0.25, s_next, false, mdp, critic, 5, 0.9, rng_hard);
    CHECK(hard >= soft);
    rng = rng_soft;
  }
}

TEST_CASE("targets: argument validation") {
  const auto mdp = hand_mdp();
  const ConstantCritic critic{0.0};
  Xoshiro256 rng(9);
  const DiscreteMdp::State sn{1, 0};
  CHECK_THROWS_AS(soft_q_target(0.0, sn, false, mdp, critic, 0, 1.0, rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(hard_q_target(0.0, sn, false, mdp, critic, 2, 0.0, rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(soft_q_target(0.0, sn, false, mdp, critic, 2, 1.5, rng),
                  std::invalid_argument);
}

TEST_CASE("td_loss: hand arithmetic, weighting, and errors") {
  SUBCASE("single entry") {
    const std::vector<double> q{1.0}, y{3.0}, w{1.0};
    const auto r = td_loss(q, y, w);
    CHECK(r.loss == 4.0);
    CHECK(r.td_abs[0] == 2.0);
    CHECK(r.dloss_dq[0] == doctest::Approx(2.0 * (1.0 - 3.0)).epsilon(1e-15));
  }
  SUBCASE("weighted mean over the batch") {
    const std::vector<double> q{1.0, 0.0}, y{3.0, -1.0}, w{0.5, 2.0};
    const auto r = td_loss(q, y, w);
    CHECK(r.loss == doctest::Approx((0.5 * 4.0 + 2.0 * 1.0) / 2.0).epsilon(1e-15));
    CHECK(r.td_abs == std::vector<double>{2.0, 1.0});
    CHECK(r.dloss_dq[1] == doctest::Approx(2.0 * 2.0 * (0.0 + 1.0) / 2.0).epsilon(1e-15));
  }
  SUBCASE("zero error means zero loss") {
    const std::vector<double> q{0.5, -2.0}, w{1.0, 1.0};
    const auto r = td_loss(q, q, w);
    CHECK(r.loss == 0.0);
  }
  SUBCASE("size mismatch throws") {
    const std::vector<double> q{1.0}, y{1.0, 2.0}, w{1.0};
    CHECK_THROWS_AS(td_loss(q, y, w), std::invalid_argument);
    const std::vector<double> empty;
    CHECK_THROWS_AS(td_loss(empty, empty, empty), std::invalid_argument);
  }
}
