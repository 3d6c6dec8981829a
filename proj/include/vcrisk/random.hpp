#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>

namespace vcrisk {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Deterministic random stream: mt19937_64 engine with hand-rolled
/// distributions so that the draw sequence is identical for a given seed
/// regardless of the standard library in use.
///
/// Substream rule (used for parallel Monte Carlo): the stream for episode i
/// under master seed s is seeded with splitmix64(s ^ (0x9E3779B97F4A7C15 * (i + 1))).
/// Results reduced over episode index are therefore independent of worker
/// count and scheduling.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : eng_(seed) {}

  static RandomStream substream(std::uint64_t master, std::uint64_t index) {
    return RandomStream(splitmix64(master ^ (0x9E3779B97F4A7C15ULL * (index + 1))));
  }

  /// Uniform on [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller. Always consumes exactly two engine
  /// draws; no cached spare, so the stream state is position-independent.
  double normal() {
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  /// Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = eng_();
    } while (v >= limit);
    return v % n;
  }

  void save(std::ostream& os) const { os << eng_; }
  void load(std::istream& is) { is >> eng_; }

  bool operator==(const RandomStream& o) const { return eng_ == o.eng_; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace vcrisk
