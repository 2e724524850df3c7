#include "qsmc/rng.hpp"

#include <cmath>

namespace qsmc {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

RandomStream RandomStream::derive(std::uint64_t master_seed, std::uint64_t stream_id,
                                  std::uint64_t generation) {
  std::uint64_t h = mix64(master_seed);
  h = mix64(h ^ stream_id);
  h = mix64(h ^ (generation * 0xD1B54A32D192ED03ULL));
  return RandomStream(h);
}

double RandomStream::uniform() {
  // 53 random bits, shifted off zero so log() is always finite.
  std::uint64_t bits = eng_() >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double RandomStream::exponential(double rate) { return -std::log(uniform()) / rate; }

double RandomStream::normal() { return normal_(eng_); }

std::uint64_t RandomStream::index(std::uint64_t n) {
  std::uniform_int_distribution<std::uint64_t> dist(0, n - 1);
  return dist(eng_);
}

int RandomStream::sign() { return (eng_() >> 63) ? 1 : -1; }

}  // namespace qsmc
