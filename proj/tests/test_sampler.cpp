#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "difr/noise.hpp"
#include "difr/sampler.hpp"

using namespace difr;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

SamplingSpec plain(double t = 1.0) {
  SamplingSpec s;
  s.temperature = t;
  return s;
}

std::size_t survivors(const std::vector<double>& f) {
  std::size_t n = 0;
  for (double v : f) n += v != kNegInf;
  return n;
}

}  // namespace

TEST_SUITE("sampler") {

TEST_CASE("top-k keeps the k largest") {
  SamplingSpec s = plain();
  s.top_k = 2;
  const std::vector<double> l{3, 2, 1, 0};
  CHECK(apply_filters(l, s) == std::vector<double>{3, 2, kNegInf, kNegInf});
  s.top_k = 4;
  const std::vector<double> flat{0, 0, 0, 0};
  CHECK(apply_filters(flat, s) == flat);
}

TEST_CASE("top-k ties go to the lower index") {
  SamplingSpec s = plain();
  s.top_k = 2;
  const std::vector<double> l{1, 5, 1, 5, 5};
  CHECK(apply_filters(l, s) == std::vector<double>{kNegInf, 5, kNegInf, 5, kNegInf});
}

TEST_CASE("top-p keeps the boundary token") {
  SamplingSpec s = plain();
  s.top_p = 0.8;
  const std::vector<double> l{std::log(0.5), std::log(0.3), std::log(0.15), std::log(0.05)};
  const auto f = apply_filters(l, s);
  CHECK(f[0] == l[0]);
  CHECK(f[1] == l[1]);
  CHECK(f[2] == kNegInf);
  CHECK(f[3] == kNegInf);

  // Just above the 2-token mass pulls the third token in.
  s.top_p = 0.81;
  CHECK(survivors(apply_filters(l, s)) == 3);
  s.top_p = 0.5;
  CHECK(survivors(apply_filters(l, s)) == 1);
}

TEST_CASE("top-p mass uses the unfiltered softmax at the sampling temperature") {
  // Oracle: sorted cumulative sums of softmax(l / T).
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z(0.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> l(12);
    for (double& v : l) v = z(rng);
    SamplingSpec s = plain(trial % 2 ? 0.7 : 1.6);
    s.top_p = 0.3 + 0.6 * (trial % 7) / 6.0;
    if (trial % 3 == 0) s.top_k = 5;

    const auto p = softmax(l, s.temperature);
    std::vector<std::size_t> idx(l.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return l[a] > l[b]; });
    std::size_t limit = s.top_k ? *s.top_k : l.size();
    std::size_t keep = 0;
    double mass = 0.0;
    while (keep < limit && mass < s.top_p) mass += p[idx[keep++]];

    const auto f = apply_filters(l, s);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      CHECK((f[idx[r]] != kNegInf) == (r < keep));
    }
  }
}

TEST_CASE("filters reject bad input and respect existing -inf") {
  SamplingSpec s = plain();
  const std::vector<double> nan{0, std::nan("")};
  CHECK_THROWS_AS(apply_filters(nan, s), std::invalid_argument);
  const std::vector<double> pinf{0, std::numeric_limits<double>::infinity()};
  CHECK_THROWS_AS(apply_filters(pinf, s), std::invalid_argument);
  const std::vector<double> none{kNegInf, kNegInf};
  CHECK_THROWS_AS(apply_filters(none, s), std::invalid_argument);
  const std::vector<double> part{kNegInf, 1.0, 0.0};
  s.top_k = 2;
  CHECK(apply_filters(part, s) == part);
}

TEST_CASE("spec validation") {
  SamplingSpec s;
  CHECK_NOTHROW(s.validate());
  s.temperature = 0.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = {};
  s.top_p = 0.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s.top_p = 1.5;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = {};
  s.top_k = 0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("filter monotonicity and argmax survival") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z(0.0, 1.5);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> l(16);
    for (double& v : l) v = z(rng);
    const auto argmax = std::max_element(l.begin(), l.end()) - l.begin();
    SamplingSpec loose = plain(0.5 + trial % 4 * 0.5);
    loose.top_k = 4 + trial % 10;
    loose.top_p = 0.6 + 0.04 * (trial % 10);
    SamplingSpec tight = loose;
    tight.top_k = *loose.top_k - trial % 3;
    tight.top_p = loose.top_p - 0.1;
    const auto a = apply_filters(l, loose);
    const auto b = apply_filters(l, tight);
    CHECK(a[argmax] != kNegInf);
    CHECK(b[argmax] != kNegInf);
    for (std::size_t i = 0; i < l.size(); ++i) {
      if (b[i] != kNegInf) CHECK(a[i] != kNegInf);
    }
  }
}

TEST_CASE("gumbel-max picks the dominant logit at tiny temperature") {
  const std::vector<double> l{10, 0, 0, 0};
  for (std::uint64_t pos = 0; pos < 100; ++pos) {
    CHECK(sample_gumbel_max(l, plain(1e-6), pos) == 0);
  }
}

TEST_CASE("gumbel argmax breaks ties low and checks sizes") {
  const std::vector<double> f{1, 2, 2};
  const std::vector<double> g{0, 0, 0};
  CHECK(gumbel_argmax(f, 1.0, g) == 1);
  const std::vector<double> short_g{0, 0};
  CHECK_THROWS_AS(gumbel_argmax(f, 1.0, short_g), std::invalid_argument);
}

TEST_CASE("joint scaling leaves the argmax unchanged") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> l(10);
    for (double& v : l) v = z(rng);
    const double t = std::array{0.5, 1.0, 2.0}[trial % 3];
    const auto g = noise::gumbel_vector(21, trial, l.size());
    std::vector<double> scaled(l.size());
    for (std::size_t i = 0; i < l.size(); ++i) scaled[i] = l[i] / t;
    CHECK(gumbel_argmax(l, t, g) == gumbel_argmax(scaled, 1.0, g));
  }
}

TEST_CASE("gumbel-max frequencies on three tokens") {
  const std::vector<double> l{std::log(1.0), std::log(2.0), std::log(3.0)};
  const std::size_t n = 300'000;
  std::array<double, 3> counts{};
  for (std::size_t pos = 0; pos < n; ++pos) counts[sample_gumbel_max(l, plain(), pos)] += 1;
  const std::array<double, 3> p{1.0 / 6, 2.0 / 6, 3.0 / 6};
  for (int i = 0; i < 3; ++i) {
    const double sd = std::sqrt(p[i] * (1 - p[i]) / n);
    CHECK(std::abs(counts[i] / n - p[i]) < 3 * sd);
  }
}

TEST_CASE("ipt sampling") {
  const std::vector<double> degenerate{1, 0, 0};
  CHECK(sample_ipt(degenerate, 0.0) == 0);
  CHECK(sample_ipt(degenerate, 0.999) == 0);
  const std::vector<double> two{0.3, 0.7};
  CHECK(sample_ipt(two, 0.5) == 1);
  CHECK(sample_ipt(two, 0.3) == 1);
  CHECK(sample_ipt(two, 0.2999) == 0);
  const std::vector<double> bad_sum{0.3, 0.6};
  CHECK_THROWS_AS(sample_ipt(bad_sum, 0.5), std::invalid_argument);
  const std::vector<double> negative{1.2, -0.2};
  CHECK_THROWS_AS(sample_ipt(negative, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(sample_ipt(two, 1.0), std::invalid_argument);
}

TEST_CASE("softmax and log-sum-exp") {
  const std::vector<double> l{0, std::log(3.0), kNegInf};
  const auto p = softmax(l, 1.0);
  CHECK(p[0] == doctest::Approx(0.25));
  CHECK(p[1] == doctest::Approx(0.75));
  CHECK(p[2] == 0.0);
  CHECK(log_sum_exp(l, 1.0) == doctest::Approx(std::log(4.0)));
  const std::vector<double> big{1000, 1000};
  CHECK(log_sum_exp(big, 1.0) == doctest::Approx(1000 + std::log(2.0)));
}

}
