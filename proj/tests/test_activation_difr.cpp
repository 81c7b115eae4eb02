#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "difr/activation_difr.hpp"

using namespace difr;

namespace {

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = z(rng);
  return v;
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::vector<double> diff(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

}  // namespace

TEST_SUITE("activation_difr") {

TEST_CASE("rows are orthonormal") {
  const Projection p({.projection_seed = 3, .k = 24, .d = 40});
  for (std::size_t i = 0; i < p.rows(); ++i) {
    for (std::size_t j = 0; j < p.rows(); ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < p.cols(); ++c) dot += p.at(i, c) * p.at(j, c);
      CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12).scale(1.0));
    }
  }
}

TEST_CASE("projection is deterministic and prefix stable") {
  const ProjectionConfig cfg{.projection_seed = 9, .k = 32, .d = 64};
  const Projection a(cfg);
  const Projection b(cfg);
  ProjectionConfig small = cfg;
  small.k = 8;
  const Projection c(small);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      REQUIRE(a.at(i, j) == b.at(i, j));
      if (i < c.rows()) REQUIRE(a.at(i, j) == c.at(i, j));
    }
  }
  ProjectionConfig other = cfg;
  other.projection_seed = 10;
  CHECK(Projection(other).at(0, 0) != a.at(0, 0));
}

TEST_CASE("square projection preserves norms") {
  std::mt19937_64 rng(1);
  const Projection p({.projection_seed = 5, .k = 64, .d = 64});
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = random_vector(rng, 64);
    const auto b = random_vector(rng, 64);
    CHECK(norm(p.apply(a)) == doctest::Approx(norm(a)).epsilon(1e-6));
    CHECK(norm(diff(p.apply(a), p.apply(b))) == doctest::Approx(norm(diff(a, b))).epsilon(1e-6));
    const auto fa = collect_fingerprint(a, p);
    const auto fb = collect_fingerprint(b, p);
    CHECK(match_fingerprint(fa, fb) == doctest::Approx(norm(diff(a, b))).epsilon(1e-6));
  }
}

TEST_CASE("linearity cases") {
  const Projection p({.projection_seed = 2, .k = 8, .d = 16});
  const std::vector<double> zero(16, 0.0);
  for (float v : collect_fingerprint(zero, p).values) CHECK(v == 0.0f);
  std::vector<double> e0(16, 0.0);
  e0[0] = 1.0;
  const auto f = collect_fingerprint(e0, p, 7);
  CHECK(f.position == 7);
  for (std::size_t i = 0; i < 8; ++i) CHECK(f.values[i] == static_cast<float>(p.at(i, 0)));
}

TEST_CASE("projection never expands distances") {
  std::mt19937_64 rng(2);
  const Projection p({.projection_seed = 8, .k = 16, .d = 64});
  for (int trial = 0; trial < 500; ++trial) {
    const auto a = random_vector(rng, 64);
    const auto b = random_vector(rng, 64);
    CHECK(norm(diff(p.apply(a), p.apply(b))) <= norm(diff(a, b)) * (1 + 1e-12));
  }
}

TEST_CASE("squared distance estimator is unbiased over projections") {
  std::mt19937_64 rng(3);
  const auto a = random_vector(rng, 64);
  const auto b = random_vector(rng, 64);
  const double truth = std::pow(norm(diff(a, b)), 2);
  double sum = 0.0;
  const int seeds = 400;
  for (int s = 0; s < seeds; ++s) {
    const Projection p({.projection_seed = static_cast<std::uint64_t>(s), .k = 16, .d = 64});
    sum += (64.0 / 16.0) * std::pow(norm(diff(p.apply(a), p.apply(b))), 2);
  }
  CHECK(sum / seeds == doctest::Approx(truth).epsilon(0.05));
}

TEST_CASE("distances and prefixes") {
  Fingerprint f{0, {3.0f, 4.0f, 0.0f, 0.0f}};
  Fingerprint z{0, {0.0f, 0.0f, 0.0f, 0.0f}};
  CHECK(match_fingerprint(f, z) == doctest::Approx(5.0));
  CHECK(match_fingerprint(f, f) == 0.0);
  CHECK(prefix_distance(f, z, 1) == doctest::Approx(3.0));
  CHECK_THROWS_AS(prefix_distance(f, z, 5), std::invalid_argument);
  Fingerprint moved = z;
  moved.position = 1;
  CHECK_THROWS_AS(match_fingerprint(f, moved), std::invalid_argument);
  Fingerprint short_f{0, {1.0f}};
  CHECK_THROWS_AS(match_fingerprint(f, short_f), std::invalid_argument);
  CHECK(jl_corrected_distance(1.0, 16, 64) == doctest::Approx(2.0));
  CHECK_THROWS_AS(jl_corrected_distance(1.0, 65, 64), std::invalid_argument);
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(make_projection({.projection_seed = 0, .k = 65, .d = 64}), std::invalid_argument);
  CHECK_THROWS_AS(make_projection({.projection_seed = 0, .k = 0, .d = 64}), std::invalid_argument);
  CHECK_THROWS_AS(make_projection({.projection_seed = 0, .k = 4, .d = 64, .stride = 0}),
                  std::invalid_argument);
  const Projection p({.projection_seed = 0, .k = 4, .d = 8});
  const std::vector<double> wrong(7, 0.0);
  CHECK_THROWS_AS(p.apply(wrong), std::invalid_argument);
}

TEST_CASE("stride positions") {
  CHECK(fingerprint_positions(10, 3) == std::vector<std::size_t>{0, 3, 6, 9});
  CHECK(fingerprint_positions(9, 3) == std::vector<std::size_t>{0, 3, 6});
  CHECK(fingerprint_positions(4, 1) == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK(fingerprint_positions(0, 2).empty());
  CHECK_THROWS_AS(fingerprint_positions(4, 0), std::invalid_argument);
}

}
