#include <cmath>
#include <vector>

#include "criticsmc/stats.hpp"
#include "doctest.h"

using namespace criticsmc;

TEST_CASE("mean and standard error match hand arithmetic") {
  const std::vector<double> xs{1.0, 2.0, 3.0, 4.0};
  const auto r = mean_and_std_error(xs);
  CHECK(r.mean == doctest::Approx(2.5).epsilon(1e-15));
  // Sample variance 5/3, so the standard error is sqrt(5/12).
  CHECK(r.std_error == doctest::Approx(std::sqrt(5.0 / 12.0)).epsilon(1e-15));

  const std::vector<double> one{7.5};
  CHECK(mean_and_std_error(one).mean == 7.5);
  CHECK(mean_and_std_error(one).std_error == 0.0);

  CHECK_THROWS_AS(mean_and_std_error({}), std::invalid_argument);
}

TEST_CASE("bootstrap fraction is exact for constant rows") {
  // Every resample reproduces the same means, so the predicate decides alone.
  const std::vector<std::vector<double>> rows(50, std::vector<double>{0.2, 0.8});
  const auto less = [](std::span<const double> m) { return m[0] < m[1]; };
  const auto greater = [](std::span<const double> m) { return m[0] > m[1]; };
  CHECK(bootstrap_fraction(rows, 200, 1, less) == 1.0);
  CHECK(bootstrap_fraction(rows, 200, 1, greater) == 0.0);
}

TEST_CASE("bootstrap fraction separates distinct rates and stays near half for ties") {
  Xoshiro256 gen(42);
  std::vector<std::vector<double>> apart;
  std::vector<std::vector<double>> tied;
  for (int e = 0; e < 200; ++e) {
    const double a = gen.uniform() < 0.3 ? 1.0 : 0.0;
    const double b = gen.uniform() < 0.7 ? 1.0 : 0.0;
    const double c = gen.uniform() < 0.5 ? 1.0 : 0.0;
    const double d = gen.uniform() < 0.5 ? 1.0 : 0.0;
    apart.push_back({a, b});
    tied.push_back({c, d});
  }
  const auto less = [](std::span<const double> m) { return m[0] < m[1]; };
  CHECK(bootstrap_fraction(apart, 2000, 7, less) > 0.99);
  const double f = bootstrap_fraction(tied, 2000, 7, less);
  CHECK(f > 0.2);
  CHECK(f < 0.8);
}

TEST_CASE("bootstrap fraction is deterministic and validates input") {
  const std::vector<std::vector<double>> rows(20, std::vector<double>{0.1, 0.9});
  const auto pred = [](std::span<const double> m) { return m[0] < m[1]; };
  CHECK(bootstrap_fraction(rows, 500, 3, pred) == bootstrap_fraction(rows, 500, 3, pred));

  CHECK_THROWS_AS(bootstrap_fraction({}, 10, 1, pred), std::invalid_argument);
  CHECK_THROWS_AS(bootstrap_fraction(rows, 0, 1, pred), std::invalid_argument);
  std::vector<std::vector<double>> ragged{{1.0, 2.0}, {1.0}};
  CHECK_THROWS_AS(bootstrap_fraction(ragged, 10, 1, pred), std::invalid_argument);
  std::vector<std::vector<double>> empty_rows{{}, {}};
  CHECK_THROWS_AS(bootstrap_fraction(empty_rows, 10, 1, pred), std::invalid_argument);
}

TEST_CASE("sign-flip test matches the exact two-point null") {
  // diffs {-1,-2}: of the four equally likely sign assignments only the
  // original reaches a mean as low as -1.5, so p converges to 1/4.
  const std::vector<double> diffs{-1.0, -2.0};
  const double p = sign_flip_pvalue_less(diffs, 20000, 5);
  CHECK(p == doctest::Approx(0.25).epsilon(0.05));
}

TEST_CASE("sign-flip test detects a consistent negative shift") {
  Xoshiro256 gen(9);
  std::vector<double> diffs;
  for (int i = 0; i < 100; ++i) diffs.push_back(-0.1 + 0.2 * gen.normal());
  CHECK(sign_flip_pvalue_less(diffs, 5000, 11) < 0.01);

  std::vector<double> flipped;
  for (double d : diffs) flipped.push_back(-d);
  CHECK(sign_flip_pvalue_less(flipped, 5000, 11) > 0.99);
}

TEST_CASE("sign-flip test handles degenerate and invalid input") {
  const std::vector<double> zeros(10, 0.0);
  CHECK(sign_flip_pvalue_less(zeros, 100, 1) == 1.0);
  CHECK_THROWS_AS(sign_flip_pvalue_less({}, 100, 1), std::invalid_argument);
  const std::vector<double> d{-1.0};
  CHECK_THROWS_AS(sign_flip_pvalue_less(d, 0, 1), std::invalid_argument);
}
