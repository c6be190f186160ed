#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace docsynth {

/// Stand-in for a latent vector: one seed fully determines a generated sample.
struct GenSeed {
  std::uint64_t value = 0;
  bool operator==(const GenSeed&) const = default;
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (const char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

/// Child seed for the i-th item derived from `seed`.
inline GenSeed derive_seed(GenSeed seed, std::uint64_t index) noexcept {
  return GenSeed{splitmix64(splitmix64(seed.value) ^ splitmix64(index + 0x632BE59BD9B4E019ull))};
}

/// Independent random stream keyed by (seed, purpose). Streams never depend on
/// the order or thread in which other streams were consumed.
inline std::mt19937_64 make_stream(GenSeed seed, std::string_view purpose) {
  const std::uint64_t a = splitmix64(seed.value ^ fnv1a64(purpose));
  const std::uint64_t b = splitmix64(a ^ 0xD1B54A32D192ED03ull);
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return std::mt19937_64(seq);
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline bool bernoulli(std::mt19937_64& rng, double p) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

}  // namespace docsynth
