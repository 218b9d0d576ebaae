#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "qbsde/generator.hpp"

namespace qbsde {

/// Value in R union {+infinity}; arithmetic is deliberately not provided.
struct ExtendedReal {
  double value = 0.0;
  bool finite = true;

  static ExtendedReal of(double v) { return {v, true}; }
  static ExtendedReal infinity() { return {0.0, false}; }

  bool operator==(const ExtendedReal&) const = default;
};

struct DualSearchPlan {
  int max_radius_pow = 20;       // radii 2^0 .. 2^max
  double growth_tol = 1e-3;      // growth between the last two radii => +inf
  double settle_tol = 1e-12;     // no growth twice in a row => settled
  int coarse_points = 33;
  int golden_iters = 48;
  int sweeps = 4;
  double fd_step = 1e-5;         // central-difference step scale
  double certificate_tol = 1e-7; // subgradient inequality slack
};

/// A driver viewed through its convex dual:
///   f(t,x,y,q) = sup_z [ z.q - g(t,x,y,z) ].
struct DualGeneratorView {
  GeneratorSpec gen;
  DualSearchPlan plan;
  bool closed_form = true;  // false forces the numeric search everywhere
};

/// Conjugate value; +infinity is detected by the expanding-radius rule.
ExtendedReal fenchel_transform(const DualGeneratorView& view, double t,
                               std::span<const double> x, double y,
                               std::span<const double> q);

/// A subgradient of z -> g at z (central differences for custom drivers),
/// validated by the subgradient inequality at probe points.
std::vector<double> subdifferential_select(const DualGeneratorView& view, double t,
                                           std::span<const double> x, double y,
                                           std::span<const double> z);

/// g(t,x,y,z) + f(t,x,y,q) - z.q  (>= 0, zero exactly on the subdifferential).
/// Throws when the transform is infinite at q.
double fenchel_young_gap(const DualGeneratorView& view, double t,
                         std::span<const double> x, double y,
                         std::span<const double> z, std::span<const double> q);

struct DualSuiteReport {
  std::size_t draws = 0;
  std::size_t finite_samples = 0;
  std::size_t infinite_samples = 0;
  double min_gap = 0.0;                  // over finite samples
  double max_convexity_violation = 0.0;  // midpoint rule in q
  double max_lipschitz_violation = 0.0;  // |f(y)-f(y')| vs lip_y |y-y'|
  double max_coercivity_violation = 0.0; // f >= -alpha - beta|y| + |q|^2/(2 gamma)
  double max_subdiff_gap = 0.0;          // |gap| at the selected subgradient
  bool all_pass = false;
};

/// Randomised validation of the dual view: nonnegativity and tightness of the
/// gap, convexity in q, y-Lipschitz continuity and the coercive lower bound.
DualSuiteReport dual_invariant_suite(const DualGeneratorView& view,
                                     std::size_t draws, std::uint64_t seed,
                                     const SamplePlan& ranges = {});

}  // namespace qbsde
