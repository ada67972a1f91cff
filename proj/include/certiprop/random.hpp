#pragma once

// Counter-based random numbers: every draw is a pure function of
// (seed, stream, index), so results do not depend on evaluation order or
// thread count.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace certiprop {

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class CounterRng {
public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(splitmix64(splitmix64(seed) ^ (stream * 0xd1b54a32d192ed03ULL + 0x8cb92ba72f3d8dd7ULL))) {}

  std::uint64_t bits(std::uint64_t index) const { return splitmix64(key_ ^ splitmix64(index)); }

  // Uniform in [0, 1).
  double uniform(std::uint64_t index) const { return static_cast<double>(bits(index) >> 11) * 0x1p-53; }

  // Uniform in (0, 1].
  double uniform_open0(std::uint64_t index) const {
    return (static_cast<double>(bits(index) >> 11) + 1.0) * 0x1p-53;
  }

  // Standard normal via Box-Muller on two consecutive counters.
  double normal(std::uint64_t index) const {
    const double u1 = uniform_open0(2 * index);
    const double u2 = uniform(2 * index + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  CounterRng substream(std::uint64_t stream) const { return CounterRng(key_, stream + 1); }

private:
  std::uint64_t key_;
};

}  // namespace certiprop
