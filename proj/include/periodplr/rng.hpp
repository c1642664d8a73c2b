#pragma once

#include <cstdint>
#include <random>

namespace periodplr {

// splitmix64 step; used to derive independent substream seeds so that
// per-(iteration, star) streams do not depend on scheduling order.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix64(splitmix64(splitmix64(root) ^ a) ^ b);
}

inline std::mt19937_64 make_stream(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0) {
  return std::mt19937_64(mix_seed(root, a, b));
}

}  // namespace periodplr
