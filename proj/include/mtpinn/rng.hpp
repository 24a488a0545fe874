#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mtpinn {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

/// Sub-seed for a named consumer: mix64(mix64(seed) ^ fnv1a(tag) + index).
/// Every random stream in the library is derived through this function from
/// the single user-facing seed.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag,
                                    std::uint64_t index = 0) {
  return mix64((mix64(seed) ^ fnv1a(tag)) + index);
}

using Rng = std::mt19937_64;

}  // namespace mtpinn
