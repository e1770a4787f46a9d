#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <span>

namespace criticsmc {

/// splitmix64 step; also used as the avalanche for seed mixing.
inline std::uint64_t split_mix_64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Deterministic combination of a seed with one tag.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t s = seed ^ (tag * 0xff51afd7ed558ccdULL + 0x9e3779b97f4a7c15ULL);
  return split_mix_64(s);
}

/// Left fold of mix_seed over several tags.
inline std::uint64_t mix_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t s = seed;
  for (std::uint64_t t : tags) s = mix_seed(s, t);
  return s;
}

/// xoshiro256** with splitmix64 state expansion. Fixed algorithm, platform-stable
/// sequences; normal variates use the Marsaglia polar method so the draw sequence
/// is identical across standard libraries (std distributions are not portable).
class Xoshiro256 {
 public:
  using result_type = std::uint64_t;

  Xoshiro256() : Xoshiro256(0) {}
  explicit Xoshiro256(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = split_mix_64(sm);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~static_cast<result_type>(0); }

  result_type operator()() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Standard normal variate; pairs are generated by the polar method and the
  /// spare is cached, so the stream state includes the cache.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      // Explicit fma keeps the acceptance test and the output identical under
      // any compiler contraction setting.
      s = std::fma(u, u, v * v);
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  void fill_normal(std::span<double> out) {
    for (auto& x : out) x = normal();
  }

  /// Index in [0, n) from one uniform draw.
  std::size_t uniform_index(std::size_t n) {
    const double u = uniform();
    auto i = static_cast<std::size_t>(u * static_cast<double>(n));
    return i < n ? i : n - 1;
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> s_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Named per-run streams. Keeping soft-V sampling on the critic stream makes a
/// zero-critic value-heuristic run consume the proposal/resample streams exactly
/// like plain SMC, which is what the trajectory-identity contract requires.
enum class Stream : std::uint64_t {
  init = 1,
  proposal = 2,
  resample = 3,
  critic = 4,
};

inline Xoshiro256 make_stream(std::uint64_t seed, Stream which) {
  return Xoshiro256(mix_seed(seed, static_cast<std::uint64_t>(which)));
}

}  // namespace criticsmc
