#include <doctest.h>

#include <array>
#include <cmath>
#include <vector>

#include "qbsde/bsde.hpp"
#include "qbsde/errors.hpp"
#include "qbsde/stats.hpp"

using namespace qbsde;

namespace {

PathBundle brownian_bundle(std::size_t paths, std::size_t steps, std::uint64_t seed) {
  return simulate_forward(SdeSpec::brownian(1), TimeGrid{1.0, steps}, paths, seed);
}

double normal_cdf(double q) { return 0.5 * std::erfc(-q / std::sqrt(2.0)); }

}  // namespace

TEST_CASE("zero driver reproduces the conditional expectation") {
  const auto b = brownian_bundle(1u << 15, 50, 11);
  const auto sol = solve_bsde_lsmc(GeneratorSpec::zero(),
                                   [](std::span<const double> x) { return x[0] * x[0]; },
                                   b);
  // Y_0 = E[W_1^2] = 1, Y_t = W_t^2 + (1 - t)
  CHECK(sol.y0 == doctest::Approx(1.0).epsilon(0.02));
  CHECK(sol.k_begin == 0);
  CHECK(sol.k_end == 50);

  const auto mid = stats::mean_var(b.n_paths, [&](std::size_t i) {
    const double x = b.state_at(i, 25)[0];
    return sol.y_at(i, 25) - (x * x + 0.5);
  });
  CHECK(std::fabs(mid.mean) <= 0.02);

  // Z_t = 2 W_t (integrand of the martingale representation)
  const auto zerr = stats::mean_var(b.n_paths, [&](std::size_t i) {
    return sol.z_at(i, 25, 0) - 2.0 * b.state_at(i, 25)[0];
  });
  CHECK(std::fabs(zerr.mean) <= 0.05);
}

TEST_CASE("quadratic driver matches the entropic closed form") {
  const auto b = brownian_bundle(1u << 15, 50, 7);
  std::vector<double> xi(b.n_paths);
  for (std::size_t i = 0; i < b.n_paths; ++i) xi[i] = b.state_at(i, 50)[0];

  SUBCASE("gamma = 1") {
    const auto sol = solve_bsde_lsmc(GeneratorSpec::pure_quadratic(1.0),
                                     [](std::span<const double> x) { return x[0]; }, b);
    // -(1/2) by the certainty equivalent of a standard normal
    CHECK(sol.y0 == doctest::Approx(-0.5).epsilon(0.04));
    // the solver tracks its own sample functional far tighter than the
    // population value
    CHECK(std::fabs(sol.y0 - entropic_value(xi, 1.0)) <= 0.01);
  }
  SUBCASE("gamma = 2") {
    const auto sol = solve_bsde_lsmc(GeneratorSpec::pure_quadratic(2.0),
                                     [](std::span<const double> x) { return x[0]; }, b);
    CHECK(sol.y0 == doctest::Approx(-1.0).epsilon(0.04));
    CHECK(std::fabs(sol.y0 - entropic_value(xi, 2.0)) <= 0.02);
  }
}

TEST_CASE("y-linear driver integrates to the discrete product formula") {
  // g = y, xi = 1: Y_k = (1 + dt)^{-(M-k)} exactly under the implicit scheme
  const auto b = brownian_bundle(4096, 50, 13);
  const auto sol = solve_bsde_lsmc(GeneratorSpec::affine_y(1.0, 0.0),
                                   [](std::span<const double>) { return 1.0; }, b);
  const double expect = std::pow(1.02, -50.0);
  CHECK(sol.y0 == doctest::Approx(expect).epsilon(1e-6));
  CHECK(sol.y0_se <= 1e-8);
}

TEST_CASE("entropic_value evaluates the log-mean-exp functional") {
  std::vector<double> xi{0.0, 0.0};
  CHECK(entropic_value(xi, 3.0) == doctest::Approx(0.0).epsilon(1e-15));
  std::vector<double> xi2{1.0, -1.0};
  const double expect = -std::log(0.5 * (std::exp(-1.0) + std::exp(1.0)));
  CHECK(entropic_value(xi2, 1.0) == doctest::Approx(expect).epsilon(1e-12));
  CHECK_THROWS_AS(entropic_value(xi2, 0.0), validation_error);
}

TEST_CASE("sandwich bound has the gaussian closed form for identity terminal") {
  const auto b = brownian_bundle(1u << 16, 1, 3);
  std::vector<double> xi(b.n_paths);
  for (std::size_t i = 0; i < b.n_paths; ++i) xi[i] = b.state_at(i, 1)[0];

  // -log E[exp(W^-)] = -log( e^{1/2} Phi(1) + 1/2 )
  const double expect = -std::log(std::exp(0.5) * normal_cdf(1.0) + 0.5);
  const double lower = sandwich_lower_bound(1.0, 0.0, 0.0, 1.0, xi);
  CHECK(lower == doctest::Approx(expect).epsilon(0.02));

  // nonnegative terminal: the bound collapses to zero exactly
  std::vector<double> pos(xi.size());
  for (std::size_t i = 0; i < xi.size(); ++i) pos[i] = std::max(xi[i], 0.0) * 0.0;
  CHECK(sandwich_lower_bound(1.0, 0.0, 0.0, 1.0, pos) == 0.0);
}

TEST_CASE("sandwich bound sits below the solved value") {
  const auto b = brownian_bundle(1u << 14, 50, 19);
  std::vector<double> xi(b.n_paths);
  for (std::size_t i = 0; i < b.n_paths; ++i) xi[i] = b.state_at(i, 50)[0];
  const auto sol = solve_bsde_lsmc(GeneratorSpec::pure_quadratic(1.0),
                                   [](std::span<const double> x) { return x[0]; }, b);
  const double lower = sandwich_lower_bound(1.0, 0.0, 0.0, 1.0, xi);
  CHECK(sol.y0 >= lower - 3.0 * sol.y0_se - 0.02);
}

TEST_CASE("range solve prices from an interior node") {
  // restart at t0 = 0.5, x0 = 0.3: Y = x0 - (T - t0)/2 = 0.05
  const TimeGrid grid{1.0, 50};
  const std::array<double, 1> x0{0.3};
  const auto b = simulate_forward(SdeSpec::brownian(1), grid, 1u << 14, 23, 0.5, x0);
  std::vector<double> xi(b.n_paths);
  for (std::size_t i = 0; i < b.n_paths; ++i) xi[i] = b.state_at(i, 50)[0];
  const auto sol = solve_bsde_lsmc_range(GeneratorSpec::pure_quadratic(1.0), xi, b,
                                         b.start_index, 50);
  CHECK(sol.k_begin == 25);
  CHECK(std::fabs(sol.y0 - 0.05) <= 0.02);
}

TEST_CASE("lipschitz ladder decreases toward the unregularised value") {
  const auto b = brownian_bundle(1u << 14, 50, 7);
  const std::array<double, 4> ns{1.0, 2.0, 4.0, 16.0};
  const auto lad = solve_lipschitz_sequence(GeneratorSpec::pure_quadratic(1.0),
                                            [](std::span<const double> x) { return x[0]; },
                                            b, ns);
  REQUIRE(lad.entries.size() == 4);
  CHECK(lad.monotone_within_3se);
  for (std::size_t i = 0; i < 4; ++i) CHECK(lad.entries[i].n == ns[i]);
  CHECK(lad.entries.back().y0 == doctest::Approx(-0.5).epsilon(0.1));
}

TEST_CASE("uniqueness probe wants p above the quadratic growth") {
  const auto b = brownian_bundle(4096, 25, 5);
  const auto sol = solve_bsde_lsmc(GeneratorSpec::pure_quadratic(1.0),
                                   [](std::span<const double> x) { return x[0]; }, b);
  CHECK_THROWS_AS(uniqueness_class_check(sol, b, GeneratorSpec::pure_quadratic(1.0),
                                         0.8, 1.0),
                  validation_error);

  const auto rep = uniqueness_class_check(sol, b, GeneratorSpec::pure_quadratic(1.0),
                                          1.5, 1.0);
  CHECK(rep.p == 1.5);
  CHECK(rep.exp_pa >= 1.0);
  CHECK(rep.exp_ey >= 1.0);
  CHECK(std::isfinite(rep.exp_pa));
  CHECK(std::isfinite(rep.exp_ey));
}

TEST_CASE("solver validates argument shapes") {
  const auto b = brownian_bundle(1024, 10, 1);
  std::vector<double> short_xi(10);
  CHECK_THROWS_AS(solve_bsde_lsmc_range(GeneratorSpec::zero(), short_xi, b, 0, 10),
                  validation_error);
  CHECK_THROWS_AS(solve_bsde_lsmc_range(GeneratorSpec::zero(),
                                        std::vector<double>(1024, 0.0), b, 5, 5),
                  validation_error);
}
