#pragma once

#include <string>

#include "qbsde/bsde.hpp"
#include "qbsde/fenchel.hpp"
#include "qbsde/paths.hpp"

namespace qbsde {

/// An adapted control: a constant vector, a feedback rule q(t, X_t), or a
/// precomputed table of per-(path, step) values.
struct ControlProcess {
  enum class Kind { Constant, Feedback, Table };
  Kind kind = Kind::Constant;
  std::size_t dim = 1;
  std::vector<double> constant;
  std::function<void(double t, std::span<const double> x, std::span<double> out)> feedback;
  std::vector<double> table;  // [path][step][coord]
  std::string label;

  static ControlProcess constant_control(std::vector<double> c, std::string label = "");
  static ControlProcess feedback_control(
      std::function<void(double, std::span<const double>, std::span<double>)> fn,
      std::size_t dim, std::string label = "");
  static ControlProcess table_control(std::vector<double> values, std::size_t dim,
                                      std::string label = "");

  void value(const PathBundle& paths, std::size_t i, std::size_t k,
             std::span<double> out) const;
  ControlView view(const PathBundle& paths) const;
};

/// Subinterval layout T/N < (1/gamma_bar - 1/p) / (beta_bar (1/p + 1/eps)),
/// strict; one interval when beta_bar = 0.
struct PartitionParams {
  double p = 2.0;
  double epsilon = 1.0;
  double gamma_bar = 1.0;
  double beta_bar = 0.0;
  double horizon = 1.0;
  std::size_t count = 1;
  std::vector<double> boundaries;  // 0 = t_0 < ... < t_count = horizon
};

PartitionParams partition_count(double p, double epsilon, double gamma_bar,
                                double beta_bar, double horizon);

/// Value process of the controlled cost equation
///   V_k = E^Q[ V_{k+1} | X_k ] + f(t_k, X_k, V_k, q_k) dt
/// solved by weighted regression under the measure induced by q.
struct CostSolution {
  TimeGrid grid;
  std::size_t n_paths = 0;
  std::size_t dim = 1;
  std::size_t k_begin = 0;
  std::size_t k_end = 0;
  std::vector<double> v;       // [path][node]
  std::vector<double> accum;   // [path]: terminal + sum of f dt along the path
  double v0 = 0.0;
  double v0_se = 0.0;
  double min_ess = 0.0;        // smallest effective sample size over the steps
  std::vector<PolyFit> step_fit;

  double v_at(std::size_t i, std::size_t k) const { return v[i * (grid.steps + 1) + k]; }
};

CostSolution evaluate_control(const DualGeneratorView& view, const ControlProcess& q,
                              const PathBundle& paths, const TerminalFn& terminal,
                              const BasisPlan& basis = {}, const SolverOptions& opts = {});

/// Range variant with per-path terminal values at k_end.
CostSolution evaluate_control_range(const DualGeneratorView& view,
                                    const ControlProcess& q, const PathBundle& paths,
                                    std::span<const double> terminal_values,
                                    std::size_t k_begin, std::size_t k_end,
                                    const BasisPlan& basis = {},
                                    const SolverOptions& opts = {});

/// Candidate optimiser read off the primal solution: a subgradient of
/// z -> g at (t_k, X_k, Y_k, Z_k) per path and step.
ControlProcess optimal_control_from_solution(const DualGeneratorView& view,
                                             const BSDESolution& sol,
                                             const PathBundle& paths);

struct GapNode {
  double t = 0.0;
  double mean = 0.0;
  double min = 0.0;
  double se = 0.0;
};

struct GapReport {
  std::vector<GapNode> nodes;
  double gap0 = 0.0;
  double gap0_se = 0.0;
  double worst_violation = 0.0;   // max over nodes of -(mean + 3 se)
  double comparison_floor = 0.0;  // absolute slack granted on top of the band
  bool comparison_ok = false;     // worst_violation within the floor
  bool attainment_ok = false;     // |gap| at the first shared node within tol
  double attainment_tol = 0.0;
};

GapReport duality_gap(const BSDESolution& sol, const CostSolution& cost,
                      double attainment_tol = 0.05);

struct AdmissibilityReport {
  bool finite_energy = true;  // per-path int |q|^2 dt all finite
  double max_path_energy = 0.0;
  double m_mean = 0.0, m_se = 0.0;  // E[M_T] vs 1
  bool martingale_ok = false;
  double worst_step_score = 0.0;  // max_k |mean(M_{k+1}/M_k) - 1| / se_k
  double q_cost_mean = 0.0, q_cost_se = 0.0;  // E^Q[ |eta| + int |f(s,0,q_s)| ds ]
  bool q_cost_tail = false;
  double q_energy_mean = 0.0, q_energy_se = 0.0;  // E^Q[ int |q|^2 ds ]
  bool q_energy_tail = false;
  bool f_finite = true;
  bool admissible = false;
  std::string reasons;  // failure summary, empty when admissible
};

AdmissibilityReport admissibility_check(const ControlProcess& q,
                                        const PathBundle& paths,
                                        const DualGeneratorView& view,
                                        const TerminalFn& terminal);

struct EntropyReport {
  double entropy_lhs = 0.0;  // 2 E[M_T log M_T]
  double lhs_se = 0.0;
  double energy_rhs = 0.0;   // E^Q[ int |q|^2 ds ]
  double rhs_se = 0.0;
  bool consistent = false;   // equal within 3 combined standard errors
};

EntropyReport relative_entropy_identity(const ControlProcess& q,
                                        const PathBundle& paths);

}  // namespace qbsde
