#pragma once

// Seeded random streams. Draws are built from raw 64-bit words so that the
// same seed produces the same numbers with any standard library.

#include <cstdint>
#include <random>

namespace kinet {

/// Named seed streams; each output records the base seed and the stream ids.
enum class Stream : std::uint64_t {
  Data = 1,
  Init = 2,
  Dropout = 3,
  Sampler = 4,
  Split = 5,
  Shuffle = 6,
  Annulus = 7,
  Search = 8,
  Bench = 9,
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Seed for item `index` of `stream` under `base`.
std::uint64_t derive_seed(std::uint64_t base, Stream stream, std::uint64_t index = 0);

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}
  Rng(std::uint64_t base, Stream stream, std::uint64_t index = 0) : engine_(derive_seed(base, stream, index)) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal by Box-Muller; consumes two words per call.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
};

}  // namespace kinet
