#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string_view>

namespace fscil {

/// Seeded random stream that is reproducible across compilers and platforms.
///
/// Raw bits come from std::mt19937_64, whose output sequence is fixed by the
/// C++ standard. Every derived quantity is computed here rather than through
/// the <random> distributions, which are implementation-defined:
///   - uniform01: top 53 bits scaled to [0, 1).
///   - uniform_index: rejection sampling on 64-bit words.
///   - standard_normal: basic Box-Muller. Each pair of uniforms (u1, u2) yields
///     sqrt(-2 ln(1 - u1)) * cos(2 pi u2) first and the matching sin() term on
///     the next call.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64();
  double uniform01();
  std::size_t uniform_index(std::size_t n);
  double standard_normal();

  /// Independent child stream. The parent is not advanced.
  Rng split(std::string_view stream) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::optional<double> spare_normal_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace fscil
