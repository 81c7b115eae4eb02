#include <doctest.h>

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "difr/noise.hpp"

using namespace difr::noise;

TEST_SUITE("noise") {

// Known-answer vectors published with the Random123 reference implementation.
TEST_CASE("philox4x32-10 known answers") {
  CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) ==
        PhiloxBlock{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        PhiloxBlock{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        PhiloxBlock{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("splitmix finalizer matches the reference generator") {
  // First two outputs of SplitMix64 seeded with 0.
  CHECK(mix64(0) == 0xe220a8397b1dcdafULL);
  CHECK(mix64(0x9E3779B97F4A7C15ULL) == 0x6e789e6aa1b965f4ULL);
  CHECK(derive_seed(1, 2) != derive_seed(2, 1));
  CHECK(derive_seed(7, 0) != derive_seed(7, 1));
}

TEST_CASE("equal keys give equal draws") {
  const NoiseKey a{42, Stream::uniform, 17, 3};
  const NoiseKey b = a;
  CHECK(uniform_draw(a) == uniform_draw(b));
  CHECK(gaussian_draw(a) == gaussian_draw(b));
}

TEST_CASE("key encoding round trip") {
  const NoiseKey key{0x0123456789abcdefULL, Stream::projection, 99, 0xfffffffffULL};
  const auto bytes = encode(key);
  CHECK(bytes.size() == 25);
  CHECK(bytes[0] == 0xef);
  CHECK(bytes[8] == 4);
  const NoiseKey back = decode(bytes);
  CHECK(back == key);
  CHECK(uniform_draw(back) == uniform_draw(key));

  auto bad = bytes;
  bad[8] = 9;
  CHECK_THROWS_AS(decode(bad), std::invalid_argument);
  CHECK_THROWS_AS(decode(std::span(bytes).first(24)), std::invalid_argument);
}

TEST_CASE("uniform mean over a million draws") {
  double sum = 0.0;
  const std::size_t n = 1'000'000;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = uniform_draw({5, Stream::uniform, i / 1000, i % 1000});
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  const double mean = sum / n;
  CHECK(mean >= 0.499);
  CHECK(mean <= 0.501);
}

TEST_CASE("stream tags separate values") {
  int differ = 0;
  for (std::uint64_t i = 0; i < 10'000; ++i) {
    const double a = uniform_draw({i, Stream::uniform, i, 0});
    const double b = uniform_draw({i, Stream::gaussian, i, 0});
    if (a != b) ++differ;
  }
  CHECK(differ >= 9990);

  int vec_differ = 0;
  for (std::uint64_t p = 0; p < 10'000; ++p) {
    const auto g = gumbel_vector(11, p, 1);
    const auto z = gaussian_vector(11, p, 1, 1.0);
    if (g[0] != z[0]) ++vec_differ;
  }
  CHECK(vec_differ >= 9990);
}

TEST_CASE("gumbel transform") {
  CHECK(gumbel_from_uniform(std::exp(-1.0)) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(std::isfinite(gumbel_from_uniform(0.0)));

  const std::size_t n = 1'000'000;
  double sum = 0.0;
  for (std::size_t p = 0; p < n / 100; ++p) {
    for (double g : gumbel_vector(3, p, 100)) sum += g;
  }
  const double mean = sum / n;
  const double sd_mean = std::numbers::pi / std::sqrt(6.0) / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(mean - std::numbers::egamma) < 3.0 * sd_mean);

  CHECK(gumbel_vector(3, 10, 8) != gumbel_vector(3, 11, 8));
  CHECK(gumbel_vector(3, 10, 8) == gumbel_vector(3, 10, 8));
}

TEST_CASE("gaussian vectors") {
  for (double v : gaussian_vector(1, 2, 64, 0.0)) CHECK(v == 0.0);
  CHECK_THROWS_AS(gaussian_vector(1, 2, 4, -1.0), std::invalid_argument);

  const std::size_t n = 1'000'000;
  double sum = 0.0, sq = 0.0;
  for (std::size_t p = 0; p < n / 1000; ++p) {
    for (double z : gaussian_vector(9, p, 1000, 1.0)) {
      sum += z;
      sq += z * z;
    }
  }
  const double mean = sum / n;
  const double var = (sq - n * mean * mean) / (n - 1);
  CHECK(var >= 0.99);
  CHECK(var <= 1.01);
  CHECK(gaussian_vector(9, 4, 16, 0.5) == gaussian_vector(9, 4, 16, 0.5));
}

TEST_CASE("positions are addressable in any order") {
  const std::uint64_t seed = 77;
  const auto a5 = gumbel_vector(seed, 5, 32);
  const auto a2 = gumbel_vector(seed, 2, 32);
  const auto a9 = gumbel_vector(seed, 9, 32);
  std::vector<std::vector<double>> forward;
  for (std::uint64_t p : {2, 5, 9}) forward.push_back(gumbel_vector(seed, p, 32));
  CHECK(forward[0] == a2);
  CHECK(forward[1] == a5);
  CHECK(forward[2] == a9);
  // A lane's value does not depend on the vector length.
  CHECK(gumbel_vector(seed, 5, 4)[3] == a5[3]);
}

TEST_CASE("bounded draws stay in range and cover it") {
  std::array<int, 7> counts{};
  for (std::uint64_t i = 0; i < 7000; ++i) {
    const auto v = bounded_draw({1, Stream::uniform, i, 0}, 7);
    REQUIRE(v < 7);
    ++counts[v];
  }
  for (int c : counts) CHECK(c > 800);
  CHECK_THROWS_AS(bounded_draw({}, 0), std::invalid_argument);
}

}
