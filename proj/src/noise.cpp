#include "difr/noise.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace difr::noise {
namespace {

constexpr std::uint32_t kPhiloxW32A = 0x9E3779B9;
constexpr std::uint32_t kPhiloxW32B = 0xBB67AE85;
constexpr std::uint32_t kPhiloxM4x32A = 0xD2511F53;
constexpr std::uint32_t kPhiloxM4x32B = 0xCD9E8D57;

constexpr double kTwoPow53Inv = 1.0 / 9007199254740992.0;

void put_u64(std::uint8_t* out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint64_t get_u64(const std::uint8_t* in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[i]) << (8 * i);
  return v;
}

std::array<std::uint32_t, 2> stream_key(std::uint64_t seed, Stream stream) {
  const std::uint64_t k =
      mix64(seed ^ mix64(0xD1B54A32D192ED03ULL * static_cast<std::uint64_t>(stream)));
  return {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
}

double to_unit(std::uint32_t lo, std::uint32_t hi) {
  const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32) | lo;
  return static_cast<double>(bits >> 11) * kTwoPow53Inv;
}

}  // namespace

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t child) {
  return mix64(mix64(parent) ^ (child * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL));
}

std::array<std::uint8_t, kEncodedKeySize> encode(const NoiseKey& key) {
  std::array<std::uint8_t, kEncodedKeySize> out{};
  put_u64(out.data(), key.seed);
  out[8] = static_cast<std::uint8_t>(key.stream);
  put_u64(out.data() + 9, key.position);
  put_u64(out.data() + 17, key.lane);
  return out;
}

NoiseKey decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != kEncodedKeySize) {
    throw std::invalid_argument("noise key: expected 25 bytes");
  }
  const std::uint8_t tag = bytes[8];
  if (tag < 1 || tag > 4) throw std::invalid_argument("noise key: unknown stream tag");
  NoiseKey key;
  key.seed = get_u64(bytes.data());
  key.stream = static_cast<Stream>(tag);
  key.position = get_u64(bytes.data() + 9);
  key.lane = get_u64(bytes.data() + 17);
  return key;
}

PhiloxBlock philox4x32(PhiloxBlock ctr, std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM4x32A) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM4x32B) * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kPhiloxW32A;
    key[1] += kPhiloxW32B;
  }
  return ctr;
}

PhiloxBlock raw_bits(const NoiseKey& key) {
  const PhiloxBlock ctr = {
      static_cast<std::uint32_t>(key.lane), static_cast<std::uint32_t>(key.lane >> 32),
      static_cast<std::uint32_t>(key.position),
      static_cast<std::uint32_t>(key.position >> 32)};
  return philox4x32(ctr, stream_key(key.seed, key.stream));
}

double uniform_draw(const NoiseKey& key) {
  const PhiloxBlock r = raw_bits(key);
  return to_unit(r[0], r[1]);
}

double gaussian_draw(const NoiseKey& key) {
  const PhiloxBlock r = raw_bits(key);
  // Radius uniform lies in (0, 1] so the log stays finite.
  const double u1 = to_unit(r[0], r[1]) + kTwoPow53Inv;
  const double u2 = to_unit(r[2], r[3]);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double gumbel_from_uniform(double u) {
  if (u <= 0.0) u = std::numeric_limits<double>::denorm_min();
  return -std::log(-std::log(u));
}

std::vector<double> gumbel_vector(std::uint64_t seed, std::uint64_t position,
                                  std::size_t size) {
  std::vector<double> out(size);
  const auto key = stream_key(seed, Stream::gumbel);
  for (std::size_t lane = 0; lane < size; ++lane) {
    const PhiloxBlock ctr = {static_cast<std::uint32_t>(lane),
                             static_cast<std::uint32_t>(static_cast<std::uint64_t>(lane) >> 32),
                             static_cast<std::uint32_t>(position),
                             static_cast<std::uint32_t>(position >> 32)};
    const PhiloxBlock r = philox4x32(ctr, key);
    out[lane] = gumbel_from_uniform(to_unit(r[0], r[1]));
  }
  return out;
}

std::vector<double> gaussian_vector(std::uint64_t seed, std::uint64_t position,
                                    std::size_t size, double sigma) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("gaussian_vector: sigma must be >= 0");
  std::vector<double> out(size, 0.0);
  if (sigma == 0.0) return out;
  for (std::size_t lane = 0; lane < size; ++lane) {
    out[lane] = sigma * gaussian_draw({seed, Stream::gaussian, position, lane});
  }
  return out;
}

std::vector<double> uniform_vector(std::uint64_t seed, std::uint64_t position,
                                   std::size_t size) {
  std::vector<double> out(size);
  for (std::size_t lane = 0; lane < size; ++lane) {
    out[lane] = uniform_draw({seed, Stream::uniform, position, lane});
  }
  return out;
}

std::uint64_t bounded_draw(const NoiseKey& key, std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("bounded_draw: bound must be positive");
  const PhiloxBlock r = raw_bits(key);
  const std::uint64_t bits = (static_cast<std::uint64_t>(r[1]) << 32) | r[0];
  __extension__ using u128 = unsigned __int128;
  return static_cast<std::uint64_t>((static_cast<u128>(bits) * bound) >> 64);
}

}  // namespace difr::noise
