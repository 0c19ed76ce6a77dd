#pragma once

#include <cstdint>
#include <vector>

namespace uniflow {

/// xoshiro256** seeded through splitmix64.
///
/// The generator and the derived distributions below are fully specified
/// here so that the bit stream is identical across compilers and standard
/// libraries (std::normal_distribution is not). Uniform doubles take the top
/// 53 bits; normals use the Box-Muller transform and cache the second value.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  double normal();
  double normal(double mean, double std) { return mean + std * normal(); }

  /// Derives an independent stream; used to give every sub-task its own RNG.
  Rng fork(std::uint64_t stream);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace uniflow
