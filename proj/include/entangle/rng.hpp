#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace entangle {

/// The standard engine is bit-exact across implementations; the standard
/// distributions are not, so all draws go through the helpers below.
using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Independent stream seed for a named consumer (node id, dataset name...).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view key) noexcept {
  return splitmix64(seed ^ splitmix64(fnv1a(key)));
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  return splitmix64(seed ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

/// Uniform double in [0, 1) from the top 53 bits of one engine draw.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Index drawn with probability proportional to cumulative[i] - cumulative[i-1].
/// `cumulative` is nondecreasing and ends at the total mass.
std::size_t sample_index(Rng& rng, std::span<const double> cumulative);

}  // namespace entangle
