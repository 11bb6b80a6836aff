#pragma once

#include <cstdint>
#include <random>

namespace scp {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a master seed, a purpose tag, and
// up to two indices. Keeps every random decision addressable and stable.
inline std::uint64_t sub_seed(std::uint64_t seed, char tag,
                              std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t h = splitmix64(seed ^ (0x100 + static_cast<std::uint64_t>(tag)));
  h = splitmix64(h ^ a);
  return splitmix64(h ^ b);
}

// Seeded in-place Fisher-Yates.
template <typename T>
void seeded_shuffle(std::vector<T>& v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = rng() % i;
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace scp
