#pragma once

// Counter-based random generator: SplitMix64 evaluated at
// key(seed, stream) + i * GOLDEN for draw index i. Any draw is a pure
// function of (seed, stream, index), so sequences replicate across
// platforms and runs. Gaussians use Box-Muller on fixed uniform draws.

#include <array>
#include <cmath>
#include <cstdint>

namespace alto {

namespace detail {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}
}  // namespace detail

class Rng {
public:
  // `stream` separates independent sequences drawn from one seed
  // (cloud sampling, noise, per-step queries, ...).
  Rng(std::uint64_t seed, std::uint64_t stream)
      : key_(detail::mix64(seed ^ detail::mix64(stream * detail::kGolden + 1))) {}

  std::uint64_t value_at(std::uint64_t index) const {
    return detail::mix64(key_ + (index + 1) * detail::kGolden);
  }

  std::uint64_t next_u64() { return value_at(counter_++); }

  // Uniform in [0, 1).
  double next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_uniform(); }

  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // u1 in (0, 1] keeps the log finite.
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    double u2 = next_uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  std::array<double, 3> next_point3(double lo = 0.0, double hi = 1.0) {
    double x = next_uniform(lo, hi);
    double y = next_uniform(lo, hi);
    double z = next_uniform(lo, hi);
    return {x, y, z};
  }

private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Stream ids used by the pipeline; fixed so runs are reproducible per seed.
namespace streams {
constexpr std::uint64_t kInit = 1;       // parameter initialization
constexpr std::uint64_t kCloud = 2;      // surface point sampling
constexpr std::uint64_t kNoise = 3;      // cloud noise
constexpr std::uint64_t kQueries = 4;    // training queries (offset by step)
constexpr std::uint64_t kHeldOut = 5;    // evaluation queries
constexpr std::uint64_t kMeshSamples = 6;  // metric surface sampling
}  // namespace streams

}  // namespace alto
