#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "criticsmc/rng.hpp"

using namespace criticsmc;

TEST_CASE("identical seeds give identical streams") {
  Xoshiro256 a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    CHECK(a() == b());
  }
  for (int i = 0; i < 1000; ++i) {
    CHECK(a.normal() == b.normal());
  }
}

TEST_CASE("stream tags decorrelate") {
  auto a = make_stream(42, Stream::proposal);
  auto b = make_stream(42, Stream::resample);
  int agree = 0;
  for (int i = 0; i < 64; ++i) {
    agree += a() == b();
  }
  CHECK(agree == 0);
  CHECK(mix_seed(0, 1) != mix_seed(0, 2));
  CHECK(mix_seed(1, 0) != mix_seed(2, 0));
  CHECK(mix_seed(0, 1) != mix_seed(1, 0));
}

TEST_CASE("uniform lands in [0,1) with the right moments") {
  Xoshiro256 rng(7);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    sum += u;
    sq += u * u;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  // 4-sigma bands: sd(mean)=sqrt(1/12/n), sd(var) ~ sqrt(1/180/n).
  CHECK(std::abs(mean - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / n));
  CHECK(std::abs(var - 1.0 / 12.0) < 4.0 * std::sqrt(1.0 / 180.0 / n));
}

TEST_CASE("normal moments and tail mass") {
  Xoshiro256 rng(12345);
  const int n = 200000;
  double sum = 0.0, sq = 0.0, cube = 0.0;
  int in_band = 0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
    cube += z * z * z;
    in_band += std::abs(z) < 1.959963984540054;
  }
  CHECK(std::abs(sum / n) < 4.0 / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(sq / n - 1.0) < 4.0 * std::sqrt(2.0 / n));
  CHECK(std::abs(cube / n) < 4.0 * std::sqrt(15.0 / n));
  CHECK(std::abs(static_cast<double>(in_band) / n - 0.95) <
        4.0 * std::sqrt(0.95 * 0.05 / n));
}

TEST_CASE("fill_normal matches per-call draws including the cached spare") {
  Xoshiro256 a(9), b(9);
  std::vector<double> buf(7);
  a.fill_normal(std::span<double>(buf));
  for (int i = 0; i < 7; ++i) CHECK(buf[i] == b.normal());
  // The polar spare carries across calls on both paths.
  CHECK(a.normal() == b.normal());
}

TEST_CASE("uniform_index covers the range uniformly") {
  Xoshiro256 rng(3);
  std::vector<int> counts(5, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const auto k = rng.uniform_index(5);
    REQUIRE(k < 5);
    ++counts[k];
  }
  for (int c : counts) {
    CHECK(std::abs(c / static_cast<double>(n) - 0.2) < 4.0 * std::sqrt(0.2 * 0.8 / n));
  }
}

TEST_CASE("stream values are frozen for reproducibility across builds") {
  // Regression pin: these exact values must never change, or every seeded
  // experiment in the repository silently changes meaning.
  Xoshiro256 rng(123456789);
  CHECK(rng() == 15127205273500847298ULL);
  CHECK(rng() == 16265768176396019016ULL);
  CHECK(rng() == 1514321867679316104ULL);
  Xoshiro256 n(42);
  CHECK(n.normal() == -0.72621913824478546);
  CHECK(n.normal() == -0.2111969182319598);
  CHECK(mix_seed(7, 0x5eedU) == 9241020718824020886ULL);
}
