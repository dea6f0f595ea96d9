#pragma once

// Counter-based random streams keyed by (seed, purpose tag, index).
//
// Every consumer derives its own stream from the master seed and a string tag,
// and per-item streams add the item index to the key. Changing how many items
// one module draws therefore never shifts the draws of another module, and
// per-item generation is independent of iteration order.

#include <cstdint>
#include <limits>
#include <random>
#include <string_view>

namespace ntkbias::rng {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Derive a child seed; used to split a master seed into named sub-seeds.
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag,
                                           std::uint64_t index = 0) noexcept {
  return splitmix64(splitmix64(seed ^ fnv1a(tag)) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

/// Stateless-in-spirit generator: output j is a hash of (key, j).
/// Satisfies UniformRandomBitGenerator, so it plugs into <random> distributions.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) noexcept
      : key_(derive_seed(seed, tag, index)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return splitmix64(key_ + 0xD1B54A32D192ED03ULL * counter_++); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double normal() { return normal_(*this); }

  std::uint64_t draws() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace ntkbias::rng
