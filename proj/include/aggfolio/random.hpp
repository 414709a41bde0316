#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace aggfolio {

using Engine = std::mt19937_64;

/// SplitMix64 finalizer; decorrelates nearby seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// FNV-1a over bytes.
constexpr std::uint64_t fnv1a(std::string_view bytes, std::uint64_t hash = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

/// Named sub-stream of a master seed ("panel", "experts", "bagging", ...).
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view stream) {
  return mix_seed(master ^ fnv1a(stream));
}

/// Indexed sub-stream (replica k, refit window w, ...).
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return mix_seed(master ^ mix_seed(index + 0x632be59bd9b4e019ULL));
}

}  // namespace aggfolio
