#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace kga {

/// SplitMix64 generator. Satisfies UniformRandomBitGenerator; used where a
/// stream must be addressable by a key tuple (seed, frame, object, ...).
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

/// Order-sensitive mix of a key tuple into one stream seed.
inline std::uint64_t stream_seed(std::initializer_list<std::uint64_t> keys) {
  std::uint64_t acc = 0x2545f4914f6cdd1dULL;
  for (std::uint64_t k : keys) {
    SplitMix64 mix(acc ^ k);
    acc = mix();
  }
  return acc;
}

}  // namespace kga
