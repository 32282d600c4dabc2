// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace seasim {

/// Raised for malformed or out-of-range configuration values.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised for malformed input files (traces, plans, configs).
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when input data violates a documented invariant.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when no placement satisfying the cluster constraints exists.
class InfeasibleError : public std::runtime_error {
 public:
  explicit InfeasibleError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

// Deterministic counter-based RNG (SplitMix64). The standard <random>
// distributions are implementation-defined, so all sampling goes through
// these helpers to keep runs reproducible across library versions.
struct Rng {
  std::uint64_t state;

  explicit Rng(std::uint64_t seed) : state(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1]; safe as a log() argument.
  double next_open_double() { return 1.0 - next_double(); }

  double exponential(double rate) { return -std::log(next_open_double()) / rate; }

  // Box-Muller; one draw per call, the pair's second half is discarded so the
  // stream stays position-independent.
  double gaussian(double mean, double stddev) {
    const double u1 = next_open_double();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(6.283185307179586476925286766559 * u2);
  }

  std::uint64_t next_below(std::uint64_t bound) { return next_u64() % bound; }

  // Derives an independent stream; used to give sub-tasks their own seeds.
  std::uint64_t fork_seed() { return next_u64(); }
};

inline std::string format_seconds(double t) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9f", t);
  return buf;
}

}  // namespace detail

}  // namespace seasim
