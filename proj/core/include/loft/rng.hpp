#pragma once

#include <cstdint>
#include <random>

namespace loft {

/// Seedable, splittable random source.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. The seed is first mixed with SplitMix64 together with a stream
/// id, so `Rng(seed, k)` for different k gives independent substreams.
/// Uniform and normal variates are derived here rather than through
/// <random> distributions, whose algorithms vary between standard libraries;
/// this keeps generated data identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  /// Uniform integer on [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal (Box-Muller, cached second variate).
  double normal();

  /// Independent child stream; does not advance this generator.
  Rng split(std::uint64_t stream) const { return Rng(seed_, stream_ * 0x9E3779B97F4A7C15ULL + stream + 1); }

  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace loft
