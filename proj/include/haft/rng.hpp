#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace haft {

using Rng = std::mt19937_64;

constexpr std::uint64_t stream_id(std::string_view name) {
  std::uint64_t h = 14695981039346656037ull;  // FNV-1a offset basis
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

/// Independent generator for the named substream `name`/`index` of a master seed.
inline Rng make_rng(std::uint64_t seed, std::string_view name, std::uint64_t index = 0) {
  const std::uint64_t id = stream_id(name);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(id), static_cast<std::uint32_t>(id >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline double gaussian(Rng& rng, double sigma) { return std::normal_distribution<double>(0.0, sigma)(rng); }

}  // namespace haft
