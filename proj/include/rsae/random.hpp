#pragma once

// Reproducible random streams.
//
// A stream is identified by (seed, key). Its engine is std::mt19937_64 seeded
// through std::seed_seq with four 32-bit-halved words produced by SplitMix64,
// started from seed ^ (0x9E3779B97F4A7C15 * (key + 1)). Every chain, replicate
// and data-generation step owns its own key, so results do not depend on how
// work is scheduled across threads.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

namespace rsae {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Deterministic 64-bit child seed for a (seed, key) pair.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t key) {
  std::uint64_t state = seed ^ (0x9E3779B97F4A7C15ULL * (key + 1));
  splitmix64(state);
  return splitmix64(state);
}

inline Rng make_stream(std::uint64_t seed, std::uint64_t key) {
  std::uint64_t state = seed ^ (0x9E3779B97F4A7C15ULL * (key + 1));
  std::uint32_t words[8];
  for (int k = 0; k < 4; ++k) {
    const std::uint64_t z = splitmix64(state);
    words[2 * k] = static_cast<std::uint32_t>(z);
    words[2 * k + 1] = static_cast<std::uint32_t>(z >> 32);
  }
  std::seed_seq seq(std::begin(words), std::end(words));
  return Rng(seq);
}

// Uniform on the open interval (0, 1).
template <class URBG>
double uniform_open(URBG& rng) {
  for (;;) {
    const double u = std::generate_canonical<double, std::numeric_limits<double>::digits>(rng);
    if (u > 0.0 && u < 1.0) return u;
  }
}

template <class URBG>
double standard_normal(URBG& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

// Gamma with the given shape and rate.
template <class URBG>
double gamma_draw(double shape, double rate, URBG& rng) {
  return std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
}

template <class URBG>
double beta_draw(double a, double b, URBG& rng) {
  const double x = gamma_draw(a, 1.0, rng);
  const double y = gamma_draw(b, 1.0, rng);
  return x / (x + y);
}

template <class URBG>
double student_t_draw(double df, URBG& rng) {
  return std::student_t_distribution<double>(df)(rng);
}

}  // namespace rsae
