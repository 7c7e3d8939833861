#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace rdistill {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Stable 64-bit hash of an ordered tuple of words; used to derive
/// per-cell / per-replicate seeds.
std::uint64_t hash_seed(std::initializer_list<std::uint64_t> parts) noexcept;

/// Counter-based generator: the i-th draw is mix64(key + i * golden), where
/// key = mix64(seed). The stream depends only on (seed, counter), so it is
/// identical on every platform. Normals use Box-Muller on two uniforms;
/// integers below n use modulo with rejection of the biased low range.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) noexcept;

  std::uint64_t next_u64() noexcept;
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  /// Uniform on (0, 1].
  double uniform_open0() noexcept;
  double normal() noexcept;
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept;
  /// Draw an index from an unnormalized non-negative weight vector.
  std::size_t categorical(std::span<const double> cumulative) noexcept;

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

/// Fisher-Yates permutation of [0, n).
std::vector<std::size_t> shuffled_indices(std::size_t n, CounterRng& rng);

}  // namespace rdistill
