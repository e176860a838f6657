#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace ldru {

/// splitmix64 finalizer; bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) {
  return mix64(seed ^ mix64(value + 0x632BE59BD9B4E019ULL));
}

constexpr std::uint64_t derive_key(std::uint64_t seed,
                                   std::initializer_list<std::uint64_t> path) {
  std::uint64_t key = mix64(seed);
  for (auto p : path) key = hash_combine(key, p);
  return key;
}

/// Named sub-streams. Values are part of the reproducibility contract.
enum class Stream : std::uint64_t { kInit = 1, kData = 2, kDropout = 3, kEval = 4, kCluster = 5 };

/// Counter-based generator: draw n of key k is mix64(k + n * golden), so any
/// (seed, stream, counter) triple maps to a fixed value independent of
/// platform and of the order other streams are consumed. The standard
/// <random> distributions are not used because their output is
/// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t key = 0) : key_(key) {}
  Rng(std::uint64_t seed, Stream stream, std::initializer_list<std::uint64_t> path = {})
      : key_(derive_key(hash_combine(seed, static_cast<std::uint64_t>(stream)), path)) {}

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64() {
    return mix64(key_ + (counter_++) * 0xD1342543DE82EF95ULL);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n); unbiased (Lemire's method with rejection).
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    for (;;) {
      const std::uint64_t x = next_u64();
      const __uint128_t m = static_cast<__uint128_t>(x) * n;
      const auto low = static_cast<std::uint64_t>(m);
      if (low >= n || low >= (-n) % n) return static_cast<std::uint64_t>(m >> 64);
    }
  }

  /// Uniform integer in [lo, hi].
  std::int64_t range(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (one value per two uniforms, no caching so
  /// the stream position stays a pure function of the number of draws).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  Rng derive(std::initializer_list<std::uint64_t> path) const {
    return Rng(derive_key(key_, path));
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace ldru
