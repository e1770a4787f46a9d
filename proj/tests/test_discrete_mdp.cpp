#include <doctest.h>

#include <cmath>
#include <vector>

#include "criticsmc/environments/discrete_mdp.hpp"
#include "criticsmc/errors.hpp"
#include "criticsmc/math.hpp"
#include "criticsmc/rng.hpp"

using namespace criticsmc;

namespace {

// Two states, two actions, next[s][a] = a, r(s,0) = -1, r(s,1) = -0.5, uniform
// policy, start in state 0, horizon 2. Enumerating the 4 action sequences:
//   log Z = log(0.25 (e^-2 + 2 e^-1.5 + e^-1)) = -1.4381403927596772.
DiscreteMdp hand_mdp() {
  return DiscreteMdp(2, 2, 2,
                     /*next=*/{0, 1, 0, 1},
                     /*reward=*/{-1.0, -0.5, -1.0, -0.5},
                     /*policy=*/{0.5, 0.5, 0.5, 0.5},
                     /*p0=*/{1.0, 0.0});
}

// Three states with non-uniform everything; used as the default fixture for
// sampler correctness checks. Rewards are O(1) so weights stay benign.
DiscreteMdp skewed_mdp(int horizon = 4) {
  return DiscreteMdp(3, 2, horizon,
                     /*next=*/{1, 2, 0, 2, 1, 0},
                     /*reward=*/{0.3, -0.7, -0.2, 0.5, -1.1, 0.4},
                     /*policy=*/{0.8, 0.2, 0.35, 0.65, 0.5, 0.5},
                     /*p0=*/{0.6, 0.1, 0.3});
}

}  // namespace

TEST_CASE("constructor validates table shapes and contents") {
  CHECK_THROWS_AS(DiscreteMdp(2, 2, 1, {0, 1, 0}, {0, 0, 0, 0}, {0.5, 0.5, 0.5, 0.5}, {1, 0}),
                  ConfigError);
  CHECK_THROWS_AS(DiscreteMdp(2, 2, 1, {0, 5, 0, 1}, {0, 0, 0, 0}, {0.5, 0.5, 0.5, 0.5}, {1, 0}),
                  ConfigError);
  CHECK_THROWS_AS(DiscreteMdp(2, 2, 1, {0, 1, 0, 1}, {0, 0, 0, 0}, {0.6, 0.5, 0.5, 0.5}, {1, 0}),
                  ConfigError);
  CHECK_THROWS_AS(DiscreteMdp(2, 2, 1, {0, 1, 0, 1}, {0, 0, 0, 0}, {0.5, 0.5, 0.5, 0.5}, {2, 0}),
                  ConfigError);
}

TEST_CASE("enumeration matches the hand-computed two-state evidence") {
  const auto mdp = hand_mdp();
  CHECK(enumerate_log_evidence(mdp) ==
        doctest::Approx(-1.4381403927596772).epsilon(1e-14));
  // Conditioning on the first action splits the same sum.
  const double z0 = enumerate_log_conditional(mdp, 0, 0);
  const double z1 = enumerate_log_conditional(mdp, 0, 1);
  const double combined[] = {std::log(0.5) + z0, std::log(0.5) + z1};
  CHECK(log_sum_exp(std::span<const double>(combined, 2)) ==
        doctest::Approx(-1.4381403927596772).epsilon(1e-13));
}

TEST_CASE("exact soft-Q table matches hand values and reproduces the evidence") {
  const auto mdp = hand_mdp();
  const auto q = soft_q_exact(mdp, 1.0);
  REQUIRE(q.horizon == 2);
  // Final step: Q equals the immediate reward.
  CHECK(q.at(1, 0, 0) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(q.at(1, 1, 1) == doctest::Approx(-0.5).epsilon(1e-15));
  // One step back: add the soft continuation v = log(0.5(e^-1 + e^-0.5)).
  CHECK(q.at(0, 0, 0) == doctest::Approx(-1.7190701963798385).epsilon(1e-14));
  CHECK(q.at(0, 0, 1) == doctest::Approx(-1.2190701963798385).epsilon(1e-14));

  // log Z = log sum_s p0(s) sum_a pi(a|s) exp Q_0(s,a).
  std::vector<double> terms;
  for (int s = 0; s < mdp.n_states(); ++s) {
    if (mdp.p0(s) == 0.0) continue;
    for (int a = 0; a < mdp.n_actions(); ++a) {
      terms.push_back(std::log(mdp.p0(s)) + std::log(mdp.policy(s, a)) + q.at(0, s, a));
    }
  }
  CHECK(log_sum_exp(std::span<const double>(terms)) ==
        doctest::Approx(enumerate_log_evidence(mdp)).epsilon(1e-13));
}

TEST_CASE("soft-Q evidence identity holds on a skewed model too") {
  const auto mdp = skewed_mdp(5);
  const auto q = soft_q_exact(mdp, 1.0);
  std::vector<double> terms;
  for (int s = 0; s < mdp.n_states(); ++s) {
    if (mdp.p0(s) == 0.0) continue;
    for (int a = 0; a < mdp.n_actions(); ++a) {
      if (mdp.policy(s, a) == 0.0) continue;
      terms.push_back(std::log(mdp.p0(s)) + std::log(mdp.policy(s, a)) + q.at(0, s, a));
    }
  }
  CHECK(log_sum_exp(std::span<const double>(terms)) ==
        doctest::Approx(enumerate_log_evidence(mdp)).epsilon(1e-12));
}

TEST_CASE("terminal states cut enumeration and the soft-Q recursion alike") {
  // State 2 is absorbing-terminal; entering it stops reward accumulation.
  const DiscreteMdp mdp(3, 2, 3,
                        /*next=*/{1, 2, 2, 0, 0, 1},
                        /*reward=*/{0.2, -0.4, 0.1, -0.3, 0.0, 0.0},
                        /*policy=*/{0.5, 0.5, 0.25, 0.75, 0.5, 0.5},
                        /*p0=*/{1.0, 0.0, 0.0},
                        /*terminal=*/{0, 0, 1});
  const auto q = soft_q_exact(mdp, 1.0);
  std::vector<double> terms;
  for (int a = 0; a < 2; ++a) {
    terms.push_back(std::log(0.5) + q.at(0, 0, a));
  }
  CHECK(log_sum_exp(std::span<const double>(terms)) ==
        doctest::Approx(enumerate_log_evidence(mdp)).epsilon(1e-12));
}

TEST_CASE("samplers follow the tabled distributions") {
  const auto mdp = skewed_mdp();
  Xoshiro256 rng(11);
  const int n = 100000;
  std::vector<int> init_counts(3, 0);
  for (int i = 0; i < n; ++i) ++init_counts[mdp.sample_initial(rng).s];
  const double expect0[] = {0.6, 0.1, 0.3};
  for (int s = 0; s < 3; ++s) {
    CHECK(std::abs(init_counts[s] / static_cast<double>(n) - expect0[s]) <
          4.0 * std::sqrt(expect0[s] * (1 - expect0[s]) / n));
  }

  std::vector<int> act_counts(2, 0);
  std::vector<DiscreteMdp::Action> buf(4);
  const DiscreteMdp::State s1{0, 1};
  for (int i = 0; i < n / 4; ++i) {
    mdp.prior_sample(s1, rng, std::span<DiscreteMdp::Action>(buf));
    for (auto a : buf) ++act_counts[a];
  }
  CHECK(std::abs(act_counts[1] / static_cast<double>(n) - 0.65) <
        4.0 * std::sqrt(0.65 * 0.35 / n));
}

TEST_CASE("table critic reads the table with time clamping") {
  const auto mdp = hand_mdp();
  const TableCritic critic(soft_q_exact(mdp, 1.0));
  const DiscreteMdp::Action acts[] = {0, 1};
  double out[2];
  critic.evaluate(DiscreteMdp::State{0, 0}, std::span<const DiscreteMdp::Action>(acts, 2),
                  std::span<double>(out, 2));
  CHECK(out[0] == doctest::Approx(-1.7190701963798385).epsilon(1e-14));
  CHECK(out[1] == doctest::Approx(-1.2190701963798385).epsilon(1e-14));
  critic.evaluate(DiscreteMdp::State{5, 0}, std::span<const DiscreteMdp::Action>(acts, 2),
                  std::span<double>(out, 2));
  CHECK(out[0] == 0.0);
}
