#pragma once

#include <cstdint>
#include <random>

namespace qsmc {

/// A single random stream. Streams for particles are derived from the master
/// seed by hashing (stream id, generation), so results never depend on which
/// thread advanced which particle.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed = 0) : eng_(seed) {}

  static RandomStream derive(std::uint64_t master_seed, std::uint64_t stream_id,
                             std::uint64_t generation);

  /// Uniform on the open interval (0,1).
  double uniform();
  /// Exp(rate); rate must be > 0.
  double exponential(double rate = 1.0);
  double normal();
  /// Uniform on {0, ..., n-1}.
  std::uint64_t index(std::uint64_t n);
  /// +1 or -1 with probability 1/2 each.
  int sign();

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
  std::normal_distribution<double> normal_;
};

/// SplitMix64 finalizer, used as the counter-based mixing function.
std::uint64_t mix64(std::uint64_t x);

// Reserved stream ids for engine-level randomness.
inline constexpr std::uint64_t kResampleStream = 0xFFFF'FFFF'0000'0001ULL;
inline constexpr std::uint64_t kCloneStream = 0xFFFF'FFFF'0000'0002ULL;

}  // namespace qsmc
