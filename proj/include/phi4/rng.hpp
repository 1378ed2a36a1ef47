#pragma once

#include <cmath>
#include <cstdint>

namespace phi4 {

// Counter-based random numbers: every draw is a pure function of
// (seed, stream coordinates, draw index), so generation order and thread
// count cannot change any value.

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
  // splitmix64 finalizer
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace detail

/// A keyed stream; absorb() chains coordinates into the key.
struct CounterRng {
  std::uint64_t key = 0;

  static CounterRng from_seed(std::uint64_t seed) {
    CounterRng r;
    r.key = detail::mix64(seed ^ 0x243f6a8885a308d3ull);
    return r;
  }

  CounterRng absorb(std::uint64_t v) const {
    CounterRng r;
    r.key = detail::mix64(key ^ detail::mix64(v ^ 0x452821e638d01377ull));
    return r;
  }
  CounterRng absorb_signed(std::int64_t v) const {
    return absorb(static_cast<std::uint64_t>(v));
  }

  std::uint64_t bits(std::uint64_t counter) const {
    return detail::mix64(key + 0x9e3779b97f4a7c15ull * (counter + 1));
  }

  /// Uniform in (0, 1].
  double uniform(std::uint64_t counter) const {
    return (static_cast<double>(bits(counter) >> 11) + 1.0) * 0x1p-53;
  }

  /// Standard normal via Box-Muller; counters 2c and 2c+1 feed draw c.
  double gaussian(std::uint64_t counter) const {
    const double u1 = uniform(2 * counter);
    const double u2 = uniform(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }
};

}  // namespace phi4
