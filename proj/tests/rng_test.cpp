#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "qbsde/errors.hpp"
#include "qbsde/rng.hpp"

using namespace qbsde;

namespace {

double normal_cdf(double q) { return 0.5 * std::erfc(-q / std::sqrt(2.0)); }

}  // namespace

TEST_CASE("normal_quantile inverts the normal CDF") {
  // AS241 is accurate to ~1e-15; the CDF roundtrip loses a little near the
  // tails, so allow 1e-12.
  for (double p : {1e-9, 1e-6, 1e-3, 0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99,
                   1.0 - 1e-6}) {
    const double q = rng::normal_quantile(p);
    CHECK(std::fabs(normal_cdf(q) - p) <= 1e-12);
  }
  CHECK(rng::normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(rng::normal_quantile(normal_cdf(1.0)) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("normal_quantile rejects p outside (0,1)") {
  CHECK_THROWS_AS(rng::normal_quantile(0.0), validation_error);
  CHECK_THROWS_AS(rng::normal_quantile(1.0), validation_error);
  CHECK_THROWS_AS(rng::normal_quantile(-0.5), validation_error);
}

TEST_CASE("uniform01 stays inside the open interval") {
  for (std::uint64_t i = 0; i < 10000; ++i) {
    const double u = rng::uniform01(rng::counter_key(1, rng::kSampling, i, 0, 0));
    CHECK(u > 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("counter variates are pure functions of their position") {
  const double a = rng::normal(42, rng::kIncrements, 7, 3, 1);
  const double b = rng::normal(42, rng::kIncrements, 7, 3, 1);
  CHECK(a == b);
  // neighbouring positions decorrelate
  CHECK(a != rng::normal(42, rng::kIncrements, 7, 3, 2));
  CHECK(a != rng::normal(42, rng::kIncrements, 8, 3, 1));
  CHECK(a != rng::normal(43, rng::kIncrements, 7, 3, 1));
  CHECK(a != rng::normal(42, rng::kSampling, 7, 3, 1));
}

TEST_CASE("normal stream has the right moments") {
  const std::size_t n = 200000;
  double s1 = 0, s2 = 0, s3 = 0, s4 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = rng::normal(9, rng::kIncrements, i, 0, 0);
    s1 += g;
    s2 += g * g;
    s3 += g * g * g;
    s4 += g * g * g * g;
  }
  const double inv = 1.0 / static_cast<double>(n);
  // SE of the mean is ~1/sqrt(n) ~ 2.2e-3; allow 4 sigma.
  CHECK(std::fabs(s1 * inv) < 9e-3);
  CHECK(s2 * inv == doctest::Approx(1.0).epsilon(0.02));
  CHECK(std::fabs(s3 * inv) < 0.05);
  CHECK(s4 * inv == doctest::Approx(3.0).epsilon(0.05));
}

TEST_CASE("uniform respects bounds and averages to the midpoint") {
  const std::size_t n = 100000;
  double sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng::uniform(5, rng::kBattery, i, 2, 0, -0.5, 1.5);
    CHECK(u > -0.5);
    CHECK(u < 1.5);
    sum += u;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("mix64 avalanches single-bit flips") {
  const std::uint64_t base = rng::mix64(0x123456789abcdefULL);
  int changed_total = 0;
  for (int bit = 0; bit < 64; ++bit) {
    const std::uint64_t flipped = rng::mix64(0x123456789abcdefULL ^ (1ULL << bit));
    changed_total += __builtin_popcountll(base ^ flipped);
  }
  // ~32 bits should flip on average
  CHECK(changed_total > 64 * 20);
  CHECK(changed_total < 64 * 44);
}
