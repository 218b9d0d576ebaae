#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "qbsde/bsde.hpp"
#include "qbsde/generator.hpp"
#include "qbsde/paths.hpp"

namespace qbsde {

/// Scalar constants of the semilinear problem's growth assumptions:
/// bands for driver and terminal plus the smallness condition
///   alpha_prime + T alpha < 1 / (2 gamma e^{3 beta T} |sigma|^2 T).
struct A4Constants {
  double r = 1.0;
  double beta = 0.0;
  double gamma = 1.0;
  double alpha = 0.0;
  double alpha_prime = 0.0;
};

/// Terminal-value problem  du/dt + L u - g(t, x, u, -sigma du/dx) = 0,
/// u(T,.) = h, with L the generator of the forward diffusion (dim 1).
struct PdeSpec {
  SdeSpec sde;
  GeneratorSpec gen;
  std::function<double(double)> terminal;
  double horizon = 1.0;
  A4Constants a4;
};

struct PdeGrid {
  std::size_t time_nodes = 101;
  std::size_t space_nodes = 401;
  double radius = 6.0;
  double theta = 1.0;  // implicitness; 1 = backward Euler
};

/// Dirichlet closure at the space boundary: Gaussian transport of the
/// terminal condition (exact for driver-free problems with zero drift), or
/// of exp(-gamma h) for drift-free pure-quadratic drivers (exact there).
enum class BoundaryMode { Auto, HeatTransport, ExpTransport };

struct PdeSolution {
  std::size_t time_nodes = 0;
  std::size_t space_nodes = 0;
  double radius = 0.0;
  double horizon = 0.0;
  std::vector<double> times, xs;
  std::vector<double> u;  // [time][space]
  int fixed_point_max = 0;

  double at(std::size_t m, std::size_t j) const { return u[m * space_nodes + j]; }
  double interp(double t, double x) const;  // bilinear, clamps to the domain
};

struct A4ClauseReport {
  std::string name;
  bool pass = true;
  double worst_violation = 0.0;
  std::string witness;
};

struct A4Report {
  std::vector<A4ClauseReport> clauses;
  double smallness_lhs = 0.0;
  double smallness_rhs = 0.0;
  bool all_pass = true;
};

/// Sampled audit of the growth/regularity clauses plus the exact scalar
/// smallness inequality.
A4Report check_A4(const PdeSpec& spec, const SamplePlan& plan = {});

PdeSolution solve_pde_fd(const PdeSpec& spec, const PdeGrid& grid,
                         BoundaryMode mode = BoundaryMode::Auto);

/// Reference solution for zero-drift pure-quadratic problems via the
/// exponential transform: u = -(1/gamma) log E[ exp(-gamma h(x + s N)) ],
/// evaluated by Gaussian quadrature on the same grid layout.
PdeSolution cole_hopf_oracle(double gamma, const std::function<double(double)>& terminal,
                             const SdeSpec& sde, double horizon, const PdeGrid& grid);

struct FkProbe {
  double t = 0.0;
  double x = 0.0;
};

/// Monte Carlo side of the stochastic-representation check.
struct FkRunner {
  GeneratorSpec gen;
  SdeSpec sde;
  std::function<double(double)> terminal;
  double horizon = 1.0;
  std::size_t paths = 1u << 14;
  std::size_t steps = 50;
  BasisPlan basis;
  SolverOptions opts;
  std::uint64_t seed = 1;
};

struct FkRow {
  double t = 0.0, x = 0.0;
  double u_fd = 0.0, y_mc = 0.0, se = 0.0;
  double diff = 0.0, tol = 0.0;
  bool pass = false;
};

struct FkReport {
  std::vector<FkRow> rows;
  bool all_pass = true;
};

FkReport feynman_kac_compare(const PdeSolution& pde, const FkRunner& runner,
                             std::span<const FkProbe> probes, double tol);

struct PdeLadderReport {
  std::vector<double> n_values;
  std::vector<PdeSolution> solutions;  // one per n, same boundary closure
  double max_violation = 0.0;          // worst pointwise increase along the ladder
  bool monotone = true;                // within 1e-6
};

/// Solves the problem for the Lipschitz envelopes g_n and checks the
/// solutions decrease pointwise as n grows.
PdeLadderReport viscosity_ladder(const PdeSpec& spec, std::span<const double> n_values,
                                 const PdeGrid& grid, const GridPlan& search = {});

struct ModulusReport {
  double c_space = 0.0;   // max |du| / ((1+|x|+|x0|) |x-x0|)
  double c_time = 0.0;    // max |du| / ((1+x^2+x0^2) sqrt|t-t0|)
  double c_growth = 0.0;  // max |u| / (1+x^2) over the grid
};

/// Continuity-modulus ratios over the supplied (t,x,t0,x0) pairs.
ModulusReport continuity_modulus_check(const PdeSolution& sol,
                                       std::span<const std::array<double, 4>> pairs);

}  // namespace qbsde
