#pragma once

#include <array>
#include <cstdint>

namespace mmm::nn {

/// xoshiro256** seeded through splitmix64.
///
/// The integer stream is fully specified and identical on every platform.
/// Floating-point draws are built from the top 53 bits of next_u64();
/// normal() additionally goes through libm (log/cos).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() noexcept;

  /// Uniform double in [0, 1).
  double uniform() noexcept;
  /// Uniform float in [lo, hi).
  float uniform(float lo, float hi) noexcept;
  /// Unbiased integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept;
  /// Standard normal via Box-Muller (no cached spare).
  double normal() noexcept;

  /// Independent child stream; the parent state is not advanced.
  Rng fork(std::uint64_t stream) const noexcept;

  /// Deterministic seed for item `index` under master seed `seed`.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t index) noexcept;

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
};

std::uint64_t splitmix64(std::uint64_t& state) noexcept;

}  // namespace mmm::nn
