#pragma once

#include <cstdint>
#include <string_view>
#include <utility>

namespace probe {

struct RngState {
  std::uint64_t state = 0;
};

/// One splitmix64 step: returns the advanced state and the output word.
constexpr std::pair<RngState, std::uint64_t> splitmix64_next(RngState s) {
  s.state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = s.state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return {s, z ^ (z >> 31)};
}

/// Stateful convenience wrapper; every draw is a splitmix64 step.
class SplitMix64 {
 public:
  explicit constexpr SplitMix64(std::uint64_t seed) : state_{seed} {}

  constexpr std::uint64_t next() {
    auto [s, z] = splitmix64_next(state_);
    state_ = s;
    return z;
  }

  /// Uniform in [0, 1) with 53 bits of resolution.
  constexpr double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n); n must be > 0. Lemire's multiply-shift with rejection.
  std::uint64_t below(std::uint64_t n) {
    std::uint64_t x = next();
    unsigned __int128 m = static_cast<unsigned __int128>(x) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t t = -n % n;
      while (low < t) {
        x = next();
        m = static_cast<unsigned __int128>(x) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Uniform integer in [lo, hi] inclusive.
  std::int64_t range(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  constexpr RngState state() const { return state_; }

 private:
  RngState state_;
};

/// 64-bit FNV-1a, used to fold identifiers into seeds.
constexpr std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xCBF29CE484222325ULL) {
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace probe
