#pragma once

// Counter-based substreams. Every random draw in the library comes from a
// generator keyed by (master seed, purpose, replica, particle), so scaling N
// or adding replicas never reuses noise and execution order is irrelevant.

#include "rldp/core.hpp"

#include <cmath>
#include <cstdint>
#include <random>

namespace rldp {

/// SplitMix64 finalizer (Steele, Lea & Flood); bijective 64-bit mixer.
constexpr std::uint64_t splitmix64_mix(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Named purposes so that distinct consumers of one master seed never collide.
enum class StreamPurpose : std::uint64_t {
  brownian = 1,
  initial_state = 2,
  bridge = 3,
  reference = 4,
  picard = 5,
  dictionary = 6,
  sampling = 7,
  optimizer = 8,
};

struct StreamKey {
  std::uint64_t master = 0;
  StreamPurpose purpose = StreamPurpose::brownian;
  std::uint64_t replica = 0;
  std::uint64_t particle = 0;
  std::uint64_t level = 0;

  std::uint64_t seed() const {
    std::uint64_t h = splitmix64_mix(master);
    h = splitmix64_mix(h ^ static_cast<std::uint64_t>(purpose));
    h = splitmix64_mix(h ^ replica);
    h = splitmix64_mix(h ^ particle);
    return splitmix64_mix(h ^ level);
  }
};

using Engine = std::mt19937_64;

inline Engine make_engine(const StreamKey& key) { return Engine(key.seed()); }

/// Standard normal draws by Box-Muller on the 53-bit uniform grid.
/// Streams must be identical across standard library implementations, so
/// std::normal_distribution is not used.
class NormalSampler {
 public:
  double operator()(Engine& eng) {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform(eng);
    while (u1 <= 0.0) u1 = uniform(eng);
    const double u2 = uniform(eng);
    const double r = std::sqrt(-2.0 * std::log(u1));
    constexpr double two_pi = 6.283185307179586476925286766559;
    spare_ = r * std::sin(two_pi * u2);
    has_spare_ = true;
    return r * std::cos(two_pi * u2);
  }

  static double uniform(Engine& eng) { return static_cast<double>(eng() >> 11) * 0x1.0p-53; }

 private:
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline double uniform01(Engine& eng) { return NormalSampler::uniform(eng); }

inline double uniform(Engine& eng, double lo, double hi) { return lo + (hi - lo) * uniform01(eng); }

}  // namespace rldp
