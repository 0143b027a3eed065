#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace evocell {

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// splitmix64 finalizer; good avalanche, used for seed derivation and hashing.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t combine_hash(std::uint64_t a, std::uint64_t b) {
  return mix64(a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2)));
}

// Deterministic RNG with hand-rolled draw functions. std:: distributions are
// not pinned across standard library versions, so everything an experiment
// depends on (bounded ints, reals, shuffles) is implemented here and frozen.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed) : seed_(seed), state_(mix64(seed ^ 0xa5a5a5a5a5a5a5a5ull)) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform integer in [lo, hi], both inclusive. Unbiased via rejection.
  int uniform_int(int lo, int hi) {
    std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
    std::uint64_t limit = ~0ull - (~0ull % range);
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return lo + static_cast<int>(v % range);
  }

  std::size_t uniform_index(std::size_t n) {
    return static_cast<std::size_t>(uniform_int(0, static_cast<int>(n) - 1));
  }

  // Uniform double in [lo, hi).
  double uniform_real(double lo, double hi) {
    double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    return lo + u * (hi - lo);
  }

  template <class T>
  const T& pick(const std::vector<T>& v) {
    return v[uniform_index(v.size())];
  }

  // Fisher-Yates, fixed order of draws.
  template <class T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(0, static_cast<int>(i)));
      std::swap(v[i], v[j]);
    }
  }

  // Independent stream keyed by a label; derivation depends only on the
  // original seed, not on how much this stream has been consumed.
  RandomSource derive(std::string_view label) const {
    return RandomSource(combine_hash(seed_, fnv1a64(label)));
  }

  RandomSource derive(std::uint64_t salt) const { return RandomSource(combine_hash(seed_, mix64(salt))); }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

}  // namespace evocell
