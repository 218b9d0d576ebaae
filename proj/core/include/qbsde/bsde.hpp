#pragma once

#include <functional>
#include <span>
#include <vector>

#include "qbsde/generator.hpp"
#include "qbsde/paths.hpp"
#include "qbsde/regression.hpp"

namespace qbsde {

using TerminalFn = std::function<double(std::span<const double> x)>;

struct SolverOptions {
  double z_clamp = 0.0;          // 0 = auto: 10 * (1 + max |X| over the bundle)
  int fixed_point_iters = 10;
  double fixed_point_tol = 1e-10;
  double ridge = 1e-10;
};

struct StepDiagnostics {
  double rmse = 0.0;               // regression RMSE of the continuation value
  double mean_abs_residual = 0.0;  // one-step dynamic-programming residual
  std::size_t clamped = 0;
  int fp_iters = 0;                // worst fixed-point iteration count
};

/// Backward solution on grid nodes [k_begin, k_end]; values outside that
/// range are zero-filled.
struct BSDESolution {
  TimeGrid grid;
  std::size_t n_paths = 0;
  std::size_t dim = 1;
  std::size_t k_begin = 0;
  std::size_t k_end = 0;
  std::vector<double> y;  // [path][node]
  std::vector<double> z;  // [path][step][coord]
  double y0 = 0.0;        // value at k_begin (cross-path mean)
  double y0_se = 0.0;     // standard error of the pathwise estimator
  double y0_pathwise = 0.0;
  std::size_t clamp_count = 0;
  double z_clamp_used = 0.0;
  std::vector<StepDiagnostics> step_diag;  // indexed by step
  std::vector<PolyFit> step_fit;           // regression record per step

  double y_at(std::size_t i, std::size_t k) const { return y[i * (grid.steps + 1) + k]; }
  double z_at(std::size_t i, std::size_t k, std::size_t j) const {
    return z[(i * grid.steps + k) * dim + j];
  }
  std::span<const double> z_row(std::size_t i, std::size_t k) const {
    return {z.data() + (i * grid.steps + k) * dim, dim};
  }
};

/// Least-squares Monte Carlo solver for
///   Y_t = xi - int_t^T g(s,X_s,Y_s,Z_s) ds + int_t^T Z_s dW_s.
/// Backward per step: Z from the increment regression, the continuation value
/// from a second regression, then an implicit fixed point in y.
BSDESolution solve_bsde_lsmc(const GeneratorSpec& gen, const TerminalFn& terminal,
                             const PathBundle& paths, const BasisPlan& basis = {},
                             const SolverOptions& opts = {});

/// Range variant with per-path terminal values at node k_end.
BSDESolution solve_bsde_lsmc_range(const GeneratorSpec& gen,
                                   std::span<const double> terminal_values,
                                   const PathBundle& paths, std::size_t k_begin,
                                   std::size_t k_end, const BasisPlan& basis = {},
                                   const SolverOptions& opts = {});

/// -(1/gamma) log mean exp(-gamma xi): closed-form value of the pure-quadratic
/// equation at time 0 (and the certainty-equivalent utility of xi).
double entropic_value(std::span<const double> xi, double gamma);

/// Exponential lower envelope of the value at time t:
///   -(1/gamma) log mean exp( gamma e^{beta (T-t)} xi^- + gamma I_i ),
/// where I_i are the per-path integrals of the envelope offset.
double sandwich_lower_bound(double gamma, double beta, double t, double horizon,
                            std::span<const double> xi,
                            std::span<const double> alpha_integrals = {});

struct LadderEntry {
  double n = 0.0;
  double y0 = 0.0;
  double se = 0.0;
};

struct LadderResult {
  std::vector<LadderEntry> entries;
  bool monotone_within_3se = true;
  double max_increase = 0.0;  // worst y0 increase along the ladder
};

/// Solves the equation for the Lipschitz envelopes g_n over the given n
/// values and checks that the values decrease along the ladder.
LadderResult solve_lipschitz_sequence(const GeneratorSpec& gen,
                                      const TerminalFn& terminal,
                                      const PathBundle& paths,
                                      std::span<const double> n_values,
                                      const BasisPlan& basis = {},
                                      const SolverOptions& opts = {},
                                      const GridPlan& grid_plan = {});

struct UniquenessClassReport {
  double p = 0.0;
  double epsilon = 0.0;
  double exp_pa = 0.0;  // E[ exp(p sup A) ],  A_t = Y_t^- + int_0^t alpha
  double exp_pa_se = 0.0;
  bool tail_a = false;
  double exp_ey = 0.0;  // E[ exp(eps sup Y^+) ]
  double exp_ey_se = 0.0;
  bool tail_y = false;
};

/// Empirical membership probe for the uniqueness class; requires p strictly
/// above the quadratic growth coefficient.
UniquenessClassReport uniqueness_class_check(const BSDESolution& sol,
                                             const PathBundle& paths,
                                             const GeneratorSpec& gen, double p,
                                             double epsilon);

}  // namespace qbsde
