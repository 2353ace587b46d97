#ifndef ESCAPE_RNG_HPP_
#define ESCAPE_RNG_HPP_

#include <cstddef>
#include <cstdint>
#include <random>

namespace escape {

/// Name recorded in output metadata for the engine below.
inline constexpr const char* kRngName = "mt19937_64";

/// Portable random stream: std::mt19937_64 output is fixed by the standard,
/// and the conversions below avoid the implementation-defined
/// std::*_distribution classes.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream for (seed, index), keyed through SplitMix64.
  static Rng stream(std::uint64_t seed, std::uint64_t index) {
    return Rng(splitmix64(splitmix64(seed) ^ (index + 0x9E3779B97F4A7C15ULL)));
  }

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n), by rejection.
  std::size_t index(std::size_t n) {
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
      x = next();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
  }

  static std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace escape

#endif  // ESCAPE_RNG_HPP_
