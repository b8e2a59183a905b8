#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "xlemb/error.hpp"

namespace xlemb {

// Seed expander / mixer (Steele, Lea, Flood 2014). Also used to derive
// independent sub-stream seeds from a master seed.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Derive the seed of a named sub-stream so draws for one purpose never
// depend on how much randomness another purpose consumed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
  std::uint64_t s = seed ^ fnv1a64(tag);
  return splitmix64_next(s);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag,
                                 std::uint64_t index) {
  std::uint64_t s = derive_seed(seed, tag) ^ (index * 0x9e3779b97f4a7c15ULL);
  return splitmix64_next(s);
}

// xoshiro256** 1.0 (Blackman & Vigna). Portable and fully specified, so a
// seed reproduces the same stream on every platform; state is seeded
// through splitmix64 as the authors recommend.
class Xoshiro256StarStar {
public:
  explicit Xoshiro256StarStar(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64_next(sm);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Unbiased integer in [0, bound) via rejection on the top range.
  std::uint64_t uniform_below(std::uint64_t bound) {
    if (bound == 0) throw ParameterError("uniform_below: bound must be > 0");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
      x = next();
    } while (x >= limit);
    return x % bound;
  }

  // Integer in [lo, hi] inclusive.
  std::uint64_t uniform_in(std::uint64_t lo, std::uint64_t hi) {
    if (lo > hi) throw ParameterError("uniform_in: empty range");
    return lo + uniform_below(hi - lo + 1);
  }

  // Double in [0, 1) with 53 random bits.
  double uniform_double() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; consumes two uniforms per call.
  double normal() {
    double u1 = uniform_double();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double u2 = uniform_double();
    const double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4];
};

// In-place Fisher-Yates shuffle.
template <typename T>
void shuffle(std::vector<T>& items, Xoshiro256StarStar& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_below(i));
    std::swap(items[i - 1], items[j]);
  }
}

// m distinct indices drawn uniformly from [0, n) by partial Fisher-Yates.
inline std::vector<std::size_t> sample_without_replacement(
    std::size_t n, std::size_t m, Xoshiro256StarStar& rng) {
  if (m > n) throw ParameterError("sample_without_replacement: m > n");
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j =
        i + static_cast<std::size_t>(rng.uniform_below(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(m);
  return pool;
}

}  // namespace xlemb
