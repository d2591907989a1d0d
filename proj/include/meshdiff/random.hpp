#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace meshdiff {

// Counter-based randomness. Every random draw in the library is a pure
// function of (seed, stream ids..., counter), so results do not depend on the
// order in which work items are executed.

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Folds a list of keys into a single 64-bit stream key.
inline std::uint64_t derive_key(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t id : ids) h = splitmix64(h ^ splitmix64(id + 0x632BE59BD9B4E019ull));
  return h;
}

/// Uniform double in [0, 1) from the top 53 bits.
constexpr double to_unit(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Sequential generator over a derived stream key. Satisfies
/// UniformRandomBitGenerator so it can drive std::shuffle.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t key) : key_(key) {}
  Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) : key_(derive_key(seed, ids)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()() { return splitmix64(key_ ^ splitmix64(counter_++)); }

  double uniform() { return to_unit((*this)()); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n) by rejection; n > 0.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t r;
    do {
      r = (*this)();
    } while (r >= limit);
    return r % n;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Stateless draw: the value at position `index` of stream `key`.
inline std::uint64_t counter_bits(std::uint64_t key, std::uint64_t index) {
  return splitmix64(key ^ splitmix64(index));
}

/// FNV-1a hash, for deriving streams from names.
constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace meshdiff
