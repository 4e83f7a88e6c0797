#pragma once

#include <cstdint>
#include <string_view>

namespace cfr {

// Incremental 64-bit FNV-1a.
class Fnv1a64 {
 public:
  static constexpr std::uint64_t kOffsetBasis = 0xcbf29ce484222325ULL;
  static constexpr std::uint64_t kPrime = 0x100000001b3ULL;

  void update(std::string_view bytes) noexcept {
    std::uint64_t h = state_;
    for (unsigned char c : bytes) {
      h ^= c;
      h *= kPrime;
    }
    state_ = h;
  }

  std::uint64_t digest() const noexcept { return state_; }

 private:
  std::uint64_t state_ = kOffsetBasis;
};

inline std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  Fnv1a64 h;
  h.update(bytes);
  return h.digest();
}

// splitmix64 finalizer; also the step function of the generator below.
constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Small portable PRNG with a fully specified output sequence, so generated
// data is identical across standard libraries.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return splitmix64_mix(state_);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  // Uniform in [-1, 1).
  double uniform_signed() noexcept { return 2.0 * uniform01() - 1.0; }

  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound) noexcept;

  // Standard normal via Box-Muller (one value per call, no caching).
  double gaussian() noexcept;

 private:
  std::uint64_t state_;
};

}  // namespace cfr
