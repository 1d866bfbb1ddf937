#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace onedf {

/// Error raised when tensor extents do not line up.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Error raised for invalid configuration values.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Error raised when a runtime contract is violated (caller bug).
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Error raised on malformed or truncated files.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Deterministic 64-bit PRNG (splitmix64). The stream is a pure function of
/// the seed, so identical seeds reproduce identical values on any platform.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  float uniform(float lo, float hi) {
    return lo + (hi - lo) * float(next_double());
  }

  /// Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    if (hi <= lo) return lo;
    return lo + int(next_u64() % uint64_t(hi - lo + 1));
  }

  /// Standard normal via Box-Muller; the spare value is cached.
  float normal(float mean, float sd);

 private:
  uint64_t state_;
  bool has_spare_ = false;
  float spare_ = 0.f;
};

/// Derives an independent seed for a named sub-stream (split, sequence index,
/// epoch, ...) from a base seed. Mixing is splitmix64-style, so distinct tags
/// give statistically independent streams.
uint64_t derive_seed(uint64_t base, uint64_t tag);

}  // namespace onedf
