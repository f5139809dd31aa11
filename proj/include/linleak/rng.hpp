#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace linleak {

// 64-bit avalanche mix (splitmix64 finalizer).
inline std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 31;
  return x;
}

/// Deterministic counter-based generator keyed by (seed, stream).
/// Streams with distinct ids are statistically independent, and every
/// draw depends only on (seed, stream, call index), never on global
/// state, so replays are bitwise reproducible on any platform.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream)
      : seed_(seed),
        stream_(stream),
        state_(mix64(seed + 0x9E3779B97F4A7C15ull) ^
               mix64(stream * 0xD1B54A32D192ED03ull + 0x8BB84B93962EACC9ull)) {}

  explicit Rng(std::uint64_t seed) : Rng(seed, 0) {}

  /// Child generator for an independent sub-stream (per client, per
  /// mask pair, per trial). Children of distinct ids never collide.
  Rng child(std::uint64_t id) const {
    return Rng(seed_, mix64(stream_ * 0x2545F4914F6CDD1Dull + 0x632BE59BD9B4E019ull) ^ id);
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    return mix64(state_);
  }

  /// Uniform double in [0, 1).
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller; consumes exactly two draws.
  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) {
    // 128-bit multiply keeps the bias below 2^-64, fine at this scale.
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Fisher-Yates shuffle, identical result for identical call sequence.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t state_;
};

}  // namespace linleak
