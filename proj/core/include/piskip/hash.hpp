#pragma once

#include <cstdint>

namespace piskip
{
/// splitmix64 finalizer; a bijection on 64-bit words.
constexpr auto
Mix64(std::uint64_t x)  //
    -> std::uint64_t
{
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

/// Small counter-based generator used where a stream must be a pure function of a seed.
class SplitMix64
{
 public:
  explicit constexpr SplitMix64(const std::uint64_t seed) : state_{seed} {}

  constexpr auto
  Next()  //
      -> std::uint64_t
  {
    state_ += 0x9e3779b97f4a7c15ULL;
    return Mix64(state_);
  }

  /// Uniform in [0, 1) with 53 bits of precision.
  constexpr auto
  NextDouble()  //
      -> double
  {
    return static_cast<double>(Next() >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t state_;
};

}  // namespace piskip
