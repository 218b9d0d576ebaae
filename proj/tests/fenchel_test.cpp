#include <doctest.h>

#include <array>
#include <cmath>
#include <vector>

#include "qbsde/errors.hpp"
#include "qbsde/fenchel.hpp"

using namespace qbsde;

namespace {

DualGeneratorView view_of(GeneratorSpec g, bool closed = true) {
  DualGeneratorView v;
  v.gen = std::move(g);
  v.closed_form = closed;
  return v;
}

}  // namespace

TEST_CASE("conjugate of the quadratic driver is |q|^2 / (2 gamma)") {
  const auto v = view_of(GeneratorSpec::pure_quadratic(2.0));
  const std::array<double, 1> x{0.0};
  for (double q : {-3.0, -0.5, 0.0, 1.0, 4.0}) {
    const std::array<double, 1> qq{q};
    const auto f = fenchel_transform(v, 0.0, x, 0.7, qq);
    REQUIRE(f.finite);
    CHECK(f.value == doctest::Approx(q * q / 4.0).epsilon(1e-12));
  }
}

TEST_CASE("conjugate of the entropic driver subtracts the y term") {
  const auto v = view_of(GeneratorSpec::entropic_linear_y(1.0, -0.5));
  const std::array<double, 1> x{0.0};
  const std::array<double, 1> q{2.0};
  const auto f = fenchel_transform(v, 0.0, x, 3.0, q);
  REQUIRE(f.finite);
  // sup_z [ zq + 0.5 y - z^2/2 ] = q^2/2 + 0.5 y
  CHECK(f.value == doctest::Approx(2.0 + 1.5).epsilon(1e-12));
}

TEST_CASE("conjugate of a z-free driver is an indicator at q = 0") {
  const auto v = view_of(GeneratorSpec::affine_y(1.0, 2.0));
  const std::array<double, 1> x{0.0};
  const std::array<double, 1> q0{0.0};
  const std::array<double, 1> q1{0.3};
  const auto at0 = fenchel_transform(v, 0.0, x, 1.5, q0);
  REQUIRE(at0.finite);
  CHECK(at0.value == doctest::Approx(-(1.5 + 2.0)).epsilon(1e-12));
  CHECK(!fenchel_transform(v, 0.0, x, 1.5, q1).finite);
}

TEST_CASE("numeric search detects infinite conjugates by expanding radii") {
  // |z|-growth driver: f finite only on the unit ball of q
  auto g = GeneratorSpec::custom(
      [](double, std::span<const double>, double, std::span<const double> z) {
        return std::fabs(z[0]);
      },
      1);
  g.gamma_bar = 1.0;
  const auto v = view_of(std::move(g), false);
  const std::array<double, 1> x{0.0};

  const std::array<double, 1> inside{0.5};
  const auto fi = fenchel_transform(v, 0.0, x, 0.0, inside);
  REQUIRE(fi.finite);
  CHECK(std::fabs(fi.value) <= 1e-6);

  const std::array<double, 1> outside{1.5};
  CHECK(!fenchel_transform(v, 0.0, x, 0.0, outside).finite);
}

TEST_CASE("Fenchel-Young gap is nonnegative and tight at the subdifferential") {
  const auto v = view_of(GeneratorSpec::pure_quadratic(3.0));
  const std::array<double, 1> x{0.1};
  for (double zv : {-2.0, -0.3, 0.0, 1.4}) {
    const std::array<double, 1> z{zv};
    for (double qv : {-1.0, 0.0, 2.0}) {
      const std::array<double, 1> q{qv};
      CHECK(fenchel_young_gap(v, 0.2, x, 0.5, z, q) >= -1e-9);
    }
    const auto qstar = subdifferential_select(v, 0.2, x, 0.5, z);
    REQUIRE(qstar.size() == 1);
    CHECK(qstar[0] == doctest::Approx(3.0 * zv).epsilon(1e-9));
    CHECK(std::fabs(fenchel_young_gap(v, 0.2, x, 0.5, z, qstar)) <= 1e-9);
  }
}

TEST_CASE("gap throws where the conjugate is infinite") {
  const auto v = view_of(GeneratorSpec::zero());
  const std::array<double, 1> x{0.0};
  const std::array<double, 1> z{1.0};
  const std::array<double, 1> q{0.5};  // outside {0}
  CHECK_THROWS_AS(fenchel_young_gap(v, 0.0, x, 0.0, z, q), numeric_error);
}

TEST_CASE("subdifferential of a custom nonsmooth driver satisfies the inequality") {
  auto g = GeneratorSpec::custom(
      [](double, std::span<const double>, double, std::span<const double> z) {
        return std::fabs(z[0]) + 0.5 * z[0] * z[0];
      },
      1);
  g.gamma_bar = 1.0;
  const auto v = view_of(std::move(g), false);
  const std::array<double, 1> x{0.0};
  for (double zv : {-1.5, -0.2, 0.4, 2.0}) {
    const std::array<double, 1> z{zv};
    const auto q = subdifferential_select(v, 0.0, x, 0.0, z);
    const double gap = fenchel_young_gap(v, 0.0, x, 0.0, z, q);
    CHECK(std::fabs(gap) <= 1e-6);
  }
}

TEST_CASE("dual invariant suite passes on every built-in family") {
  SamplePlan ranges;
  ranges.count = 2000;

  for (const auto& g : {GeneratorSpec::pure_quadratic(1.0),
                        GeneratorSpec::pure_quadratic(2.5),
                        GeneratorSpec::entropic_linear_y(1.0, -0.5),
                        GeneratorSpec::affine_y(0.7, -0.2), GeneratorSpec::zero()}) {
    const auto rep = dual_invariant_suite(view_of(g), 2000, 11, ranges);
    CHECK(rep.all_pass);
    CHECK(rep.min_gap >= -1e-9);
    CHECK(rep.max_subdiff_gap <= 1e-6);
    CHECK(rep.max_coercivity_violation <= 1e-6);
    CHECK(rep.max_lipschitz_violation <= 1e-6);
    CHECK(rep.draws == 2000);
    CHECK(rep.finite_samples + rep.infinite_samples == rep.draws);
  }
}

TEST_CASE("suite results are reproducible for a fixed seed") {
  const auto v = view_of(GeneratorSpec::pure_quadratic(1.5));
  const auto a = dual_invariant_suite(v, 1000, 77);
  const auto b = dual_invariant_suite(v, 1000, 77);
  CHECK(a.min_gap == b.min_gap);
  CHECK(a.max_subdiff_gap == b.max_subdiff_gap);
  CHECK(a.finite_samples == b.finite_samples);
}
