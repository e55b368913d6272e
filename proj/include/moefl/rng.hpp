// SPDX-License-Identifier: Apache-2.0
//
// Every random stream in a run is derived from one master seed. Sub-streams
// are keyed by (purpose, a, b), typically (purpose, client id, round), so a
// stream never depends on the order in which other streams were consumed.
#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace moefl {

using Rng = std::mt19937_64;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// FNV-1a
inline constexpr std::uint64_t hash_purpose(std::string_view purpose) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : purpose) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose,
                                           std::uint64_t a = 0, std::uint64_t b = 0) noexcept {
  std::uint64_t h = splitmix64(master ^ hash_purpose(purpose));
  h = splitmix64(h ^ splitmix64(a + 0x632BE59BD9B4E019ULL));
  h = splitmix64(h ^ splitmix64(b + 0x2545F4914F6CDD1DULL));
  return h;
}

inline Rng make_rng(std::uint64_t master, std::string_view purpose, std::uint64_t a = 0,
                    std::uint64_t b = 0) {
  return Rng(derive_seed(master, purpose, a, b));
}

}  // namespace moefl
