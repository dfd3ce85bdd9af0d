#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fedsim {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Independent RNG substream per (master seed, purpose, round, client).
// Toggling one mechanism never disturbs another's draws.
inline std::mt19937_64 substream(std::uint64_t master, std::string_view purpose,
                                 std::uint64_t round = 0,
                                 std::uint64_t client = 0) {
  std::uint64_t h = splitmix64(master ^ fnv1a(purpose));
  h = splitmix64(h ^ (0x9e3779b97f4a7c15ULL * (round + 1)));
  h = splitmix64(h ^ (0xc2b2ae3d27d4eb4fULL * (client + 1)));
  return std::mt19937_64(h);
}

}  // namespace fedsim
