#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace difr::noise {

// Counter-based randomness shared by provider and verifier. Every value is a
// pure function of (seed, stream, position, lane), so any token position can
// be replayed without generating the positions before it.

enum class Stream : std::uint8_t {
  gumbel = 1,
  gaussian = 2,
  uniform = 3,
  projection = 4,
};

struct NoiseKey {
  std::uint64_t seed = 0;
  Stream stream = Stream::uniform;
  std::uint64_t position = 0;
  std::uint64_t lane = 0;

  friend bool operator==(const NoiseKey&, const NoiseKey&) = default;
};

inline constexpr std::size_t kEncodedKeySize = 25;

/// Little-endian fixed layout: seed u64, stream u8, position u64, lane u64.
std::array<std::uint8_t, kEncodedKeySize> encode(const NoiseKey& key);
/// Throws std::invalid_argument on wrong length or unknown stream tag.
NoiseKey decode(std::span<const std::uint8_t> bytes);

using PhiloxBlock = std::array<std::uint32_t, 4>;

/// Philox4x32 with 10 rounds (Salmon et al., SC'11).
PhiloxBlock philox4x32(PhiloxBlock counter, std::array<std::uint32_t, 2> key);

/// Raw 128 random bits for a key.
PhiloxBlock raw_bits(const NoiseKey& key);

/// Uniform on [0, 1) with 53 bits of entropy.
double uniform_draw(const NoiseKey& key);

/// Standard normal variate for a key (Box-Muller on one Philox block).
double gaussian_draw(const NoiseKey& key);

/// -ln(-ln(u)); u == 0 is mapped to the smallest positive double first.
double gumbel_from_uniform(double u);

std::vector<double> gumbel_vector(std::uint64_t seed, std::uint64_t position,
                                  std::size_t size);

/// N(0, sigma^2) per lane. sigma == 0 gives exact zeros.
std::vector<double> gaussian_vector(std::uint64_t seed, std::uint64_t position,
                                    std::size_t size, double sigma);

std::vector<double> uniform_vector(std::uint64_t seed, std::uint64_t position,
                                   std::size_t size);

/// Uniform integer in [0, bound) by 64-bit multiply-shift; bound > 0.
std::uint64_t bounded_draw(const NoiseKey& key, std::uint64_t bound);

/// SplitMix64 finalizer, used to derive child seeds.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t child);

}  // namespace difr::noise
