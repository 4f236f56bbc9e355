#pragma once

#include "mclsr/errors.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string_view>
#include <vector>

namespace mclsr {

// All run randomness flows from one seed through named substreams
// (split, init, shuffle, negatives, synth). The mt19937_64 engine is fully
// specified by the standard; distributions are hand-rolled below because the
// std:: ones are not bit-portable across library implementations.

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  Real uniform() { return static_cast<Real>(next() >> 11) * 0x1.0p-53; }

  /// Unbiased uniform integer in [0, n).
  std::uint64_t bounded(std::uint64_t n) {
    if (n == 0) throw ParamError("bounded: n must be positive");
    const std::uint64_t threshold = (-n) % n;  // 2^64 mod n
    std::uint64_t x;
    do {
      x = next();
    } while (x < threshold);
    return x % n;
  }

  /// Box-Muller normal; caches the spare deviate.
  Real normal(Real mean = 0.0, Real stddev = 1.0) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + stddev * spare_;
    }
    const Real u1 = 1.0 - uniform();  // (0, 1]
    const Real u2 = uniform();
    const Real r = std::sqrt(-2.0 * std::log(u1));
    const Real theta = 2.0 * std::numbers::pi_v<Real> * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return mean + stddev * r * std::cos(theta);
  }

  /// Fisher-Yates shuffle, independent of std::shuffle's unspecified draws.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(bounded(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  Real spare_ = 0.0;
};

/// Derives an independent stream from (seed, name, a, b).
inline Rng substream(std::uint64_t seed, std::string_view name, std::uint64_t a = 0,
                     std::uint64_t b = 0) {
  std::uint64_t h = mix64(seed ^ mix64(fnv1a64(name)));
  h = mix64(h ^ mix64(a));
  h = mix64(h ^ mix64(b));
  return Rng(h);
}

}  // namespace mclsr
