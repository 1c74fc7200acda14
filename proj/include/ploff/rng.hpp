#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ploff {

using Rng = std::mt19937_64;

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t hash = 14695981039346656037ULL) {
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  return hash;
}

// Independent generator for a named sub-stream (data, init, batch, eval, ...)
// of a single user-facing seed.
inline Rng make_rng(std::uint64_t seed, std::string_view stream) {
  const std::uint64_t tag = fnv1a(stream);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
  return Rng(seq);
}

}  // namespace ploff
