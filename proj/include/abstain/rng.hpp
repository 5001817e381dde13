#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace abstain {

/// Deterministic 64-bit generator (splitmix64 state update).
///
/// Every random decision in the library flows through this generator so that
/// a run is reproducible bit-for-bit from a single seed, independent of
/// platform or standard-library implementation.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1), 53 mantissa bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in (0, 1]; safe as a log() argument.
  double next_open_double() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  bool bernoulli(double p) { return next_double() < p; }

  /// Standard normal via Box-Muller on the raw uniforms. Avoids
  /// std::normal_distribution, whose output differs across standard
  /// libraries.
  double next_gaussian() {
    const double u1 = next_open_double();
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  /// Derive an independent substream seed from a master seed and a string
  /// key (FNV-1a over the key, mixed with the master seed).
  static std::uint64_t derive(std::uint64_t master, std::string_view key) {
    std::uint64_t h = 1469598103934665603ULL ^ master;
    for (const char ch : key) {
      h ^= static_cast<unsigned char>(ch);
      h *= 1099511628211ULL;
    }
    // one splitmix scramble so nearby keys land far apart
    h += 0x9E3779B97F4A7C15ULL;
    h = (h ^ (h >> 30)) * 0xBF58476D1CE4E5B9ULL;
    h = (h ^ (h >> 27)) * 0x94D049BB133111EBULL;
    return h ^ (h >> 31);
  }

 private:
  std::uint64_t state_;
};

}  // namespace abstain
