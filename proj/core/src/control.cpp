#include "qbsde/control.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qbsde/errors.hpp"
#include "qbsde/parallel.hpp"
#include "qbsde/stats.hpp"

namespace qbsde {

ControlProcess ControlProcess::constant_control(std::vector<double> c, std::string label) {
  if (c.empty()) throw validation_error("constant_control: empty vector");
  ControlProcess q;
  q.kind = Kind::Constant;
  q.dim = c.size();
  q.constant = std::move(c);
  q.label = std::move(label);
  return q;
}

ControlProcess ControlProcess::feedback_control(
    std::function<void(double, std::span<const double>, std::span<double>)> fn,
    std::size_t dim, std::string label) {
  if (!fn) throw validation_error("feedback_control: empty callable");
  ControlProcess q;
  q.kind = Kind::Feedback;
  q.dim = dim;
  q.feedback = std::move(fn);
  q.label = std::move(label);
  return q;
}

ControlProcess ControlProcess::table_control(std::vector<double> values, std::size_t dim,
                                             std::string label) {
  ControlProcess q;
  q.kind = Kind::Table;
  q.dim = dim;
  q.table = std::move(values);
  q.label = std::move(label);
  return q;
}

void ControlProcess::value(const PathBundle& paths, std::size_t i, std::size_t k,
                           std::span<double> out) const {
  switch (kind) {
    case Kind::Constant:
      for (std::size_t j = 0; j < dim; ++j) out[j] = constant[j];
      return;
    case Kind::Feedback:
      feedback(paths.grid.node(k), paths.state_at(i, k), out);
      return;
    case Kind::Table: {
      const double* row = table.data() + (i * paths.grid.steps + k) * dim;
      for (std::size_t j = 0; j < dim; ++j) out[j] = row[j];
      return;
    }
  }
}

ControlView ControlProcess::view(const PathBundle& paths) const {
  if (kind == Kind::Table && table.size() != paths.n_paths * paths.grid.steps * dim) {
    throw validation_error("ControlProcess: table size mismatch with bundle");
  }
  ControlView v;
  v.dim = dim;
  v.value = [this, &paths](std::size_t i, std::size_t k, std::span<double> out) {
    value(paths, i, k, out);
  };
  return v;
}

PartitionParams partition_count(double p, double epsilon, double gamma_bar,
                                double beta_bar, double horizon) {
  if (!(gamma_bar > 0.0)) throw validation_error("partition_count: gamma_bar must be > 0");
  if (!(p > gamma_bar)) throw validation_error("partition_count: p must exceed gamma_bar");
  if (!(epsilon > 0.0)) throw validation_error("partition_count: epsilon must be > 0");
  if (beta_bar < 0.0) throw validation_error("partition_count: beta_bar must be >= 0");
  if (!(horizon > 0.0)) throw validation_error("partition_count: horizon must be > 0");

  PartitionParams out;
  out.p = p;
  out.epsilon = epsilon;
  out.gamma_bar = gamma_bar;
  out.beta_bar = beta_bar;
  out.horizon = horizon;

  if (beta_bar == 0.0) {
    out.count = 1;
  } else {
    const double bound = (1.0 / gamma_bar - 1.0 / p) / (beta_bar * (1.0 / p + 1.0 / epsilon));
    std::size_t n = static_cast<std::size_t>(std::floor(horizon / bound)) + 1;
    while (!(horizon / static_cast<double>(n) < bound)) ++n;  // strict inequality
    out.count = n;
  }
  out.boundaries.resize(out.count + 1);
  for (std::size_t i = 0; i <= out.count; ++i) {
    out.boundaries[i] = (i == out.count)
                            ? horizon
                            : horizon * static_cast<double>(i) / static_cast<double>(out.count);
  }
  return out;
}

CostSolution evaluate_control_range(const DualGeneratorView& view,
                                    const ControlProcess& q, const PathBundle& paths,
                                    std::span<const double> terminal_values,
                                    std::size_t k_begin, std::size_t k_end,
                                    const BasisPlan& basis, const SolverOptions& opts) {
  const std::size_t P = paths.n_paths;
  const std::size_t M = paths.grid.steps;
  const std::size_t d = paths.dim;
  if (terminal_values.size() != P) {
    throw validation_error("evaluate_control: terminal size mismatch");
  }
  if (!(k_begin < k_end) || k_end > M || k_begin < paths.start_index) {
    throw validation_error("evaluate_control: invalid node range");
  }
  if (q.dim != d) throw validation_error("evaluate_control: control dimension mismatch");

  const WeightMatrix wm = girsanov_weights(paths, q.view(paths));

  CostSolution cs;
  cs.grid = paths.grid;
  cs.n_paths = P;
  cs.dim = d;
  cs.k_begin = k_begin;
  cs.k_end = k_end;
  cs.v.assign(P * (M + 1), 0.0);
  cs.accum.assign(terminal_values.begin(), terminal_values.end());
  cs.step_fit.resize(M);
  cs.min_ess = static_cast<double>(P);

  for (std::size_t i = 0; i < P; ++i) cs.v[i * (M + 1) + k_end] = terminal_values[i];

  std::vector<double> w(P), target(P);
  const double* tptr = target.data();

  for (std::size_t k = k_end; k-- > k_begin;) {
    const double t = paths.grid.node(k);
    const double dtk = paths.grid.dt(k);

    par::for_blocks(P, [&](std::size_t, std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        w[i] = std::exp(wm.logm(i, k_end) - wm.logm(i, k));
        target[i] = cs.v[i * (M + 1) + k + 1];
      }
    });

    const double sw = stats::block_sum(P, [&](std::size_t i) { return w[i]; });
    const double sw2 = stats::block_sum(P, [&](std::size_t i) { return w[i] * w[i]; });
    const double ess = (sw * sw) / std::max(sw2, 1e-300);
    cs.min_ess = std::min(cs.min_ess, ess);
    if (ess < 0.01 * static_cast<double>(P)) {
      throw numeric_error("evaluate_control: importance weights degenerate (ESS < 1%)");
    }

    StateView sv{paths.x.data() + k * d, (M + 1) * d, d};
    PolyFit fit = fit_polynomial(P, sv, {&tptr, 1}, w.data(), basis, opts.ridge);

    const std::size_t nb = par::block_count(P);
    std::vector<int> bfail(nb, 0);
    par::for_blocks(P, [&](std::size_t blk, std::size_t begin, std::size_t end) {
      std::vector<double> qv(d);
      for (std::size_t i = begin; i < end; ++i) {
        const auto xi = paths.state_at(i, k);
        const double rhat = fit.eval(0, xi);
        q.value(paths, i, k, qv);

        double yv = rhat;
        bool ok = false;
        double fv = 0.0;
        for (int it = 0; it < opts.fixed_point_iters; ++it) {
          const ExtendedReal f = fenchel_transform(view, t, xi, yv, qv);
          if (!f.finite) {
            ++bfail[blk];
            ok = true;  // abort path; flagged below
            break;
          }
          fv = f.value;
          const double yn = rhat + fv * dtk;
          if (std::fabs(yn - yv) <= opts.fixed_point_tol * (1.0 + std::fabs(yn))) {
            yv = yn;
            ok = true;
            break;
          }
          yv = yn;
        }
        if (!ok) ++bfail[blk];
        cs.v[i * (M + 1) + k] = yv;
        cs.accum[i] += fv * dtk;
      }
    });
    std::size_t failed = 0;
    for (std::size_t blk = 0; blk < nb; ++blk) failed += bfail[blk];
    if (failed > 0) {
      throw numeric_error(
          "evaluate_control: conjugate infinite along the control or fixed point stalled");
    }
    cs.step_fit[k] = std::move(fit);
  }

  // start value and importance-sampling standard error
  cs.v0 = stats::block_sum(P, [&](std::size_t i) { return cs.v[i * (M + 1) + k_begin]; }) /
          static_cast<double>(P);
  par::for_blocks(P, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      w[i] = std::exp(wm.logm(i, k_end) - wm.logm(i, k_begin));
    }
  });
  const double sw = stats::block_sum(P, [&](std::size_t i) { return w[i]; });
  const double wbar = sw / static_cast<double>(P);
  const auto dev = stats::mean_var(P, [&](std::size_t i) {
    return w[i] * (cs.accum[i] - cs.v0) / wbar;
  });
  cs.v0_se = dev.se;
  return cs;
}

CostSolution evaluate_control(const DualGeneratorView& view, const ControlProcess& q,
                              const PathBundle& paths, const TerminalFn& terminal,
                              const BasisPlan& basis, const SolverOptions& opts) {
  if (!terminal) throw validation_error("evaluate_control: empty terminal function");
  const std::size_t P = paths.n_paths;
  const std::size_t M = paths.grid.steps;
  std::vector<double> xi(P);
  par::for_blocks(P, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) xi[i] = terminal(paths.state_at(i, M));
  });
  return evaluate_control_range(view, q, paths, xi, paths.start_index, M, basis, opts);
}

ControlProcess optimal_control_from_solution(const DualGeneratorView& view,
                                             const BSDESolution& sol,
                                             const PathBundle& paths) {
  const std::size_t P = sol.n_paths;
  const std::size_t M = sol.grid.steps;
  const std::size_t d = sol.dim;
  std::vector<double> table(P * M * d, 0.0);
  par::for_blocks(P, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t k = sol.k_begin; k < sol.k_end; ++k) {
        const auto qs = subdifferential_select(view, paths.grid.node(k),
                                               paths.state_at(i, k), sol.y_at(i, k),
                                               sol.z_row(i, k));
        for (std::size_t j = 0; j < d; ++j) table[(i * M + k) * d + j] = qs[j];
      }
    }
  });
  ControlProcess q = ControlProcess::table_control(std::move(table), d, "subgradient");
  return q;
}

GapReport duality_gap(const BSDESolution& sol, const CostSolution& cost,
                      double attainment_tol) {
  if (sol.n_paths != cost.n_paths || sol.grid.steps != cost.grid.steps) {
    throw validation_error("duality_gap: solutions not aligned");
  }
  const std::size_t kb = std::max(sol.k_begin, cost.k_begin);
  const std::size_t ke = std::min(sol.k_end, cost.k_end);
  if (!(kb < ke)) throw validation_error("duality_gap: disjoint node ranges");
  const std::size_t P = sol.n_paths;

  GapReport rep;
  rep.attainment_tol = attainment_tol;
  for (std::size_t k = kb; k <= ke; ++k) {
    const auto mv = stats::mean_var(P, [&](std::size_t i) {
      return cost.v_at(i, k) - sol.y_at(i, k);
    });
    double mn = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < P; ++i) {
      mn = std::min(mn, cost.v_at(i, k) - sol.y_at(i, k));
    }
    rep.nodes.push_back({sol.grid.node(k), mv.mean, mn, mv.se});
    rep.worst_violation =
        std::max(rep.worst_violation, -(mv.mean + 3.0 * mv.se));
  }
  rep.gap0 = rep.nodes.front().mean;
  // node 0 values share one regression each side, so the cross-path spread
  // there is not an error estimate; combine the two solvers' own SEs
  rep.gap0_se = std::sqrt(cost.v0_se * cost.v0_se + sol.y0_se * sol.y0_se);
  // Interior node means carry common-mode coefficient noise: every path is
  // evaluated through the same fits, so the per-node SE misses the dominant
  // term.  Its scale is the weighted estimator's, sd(terminal)/sqrt(ESS).
  const auto term_mv =
      stats::mean_var(P, [&](std::size_t i) { return cost.v_at(i, ke); });
  const double sd_term = std::sqrt(std::max(term_mv.var, 0.0));
  const double ess = std::max(cost.min_ess, 1.0);
  rep.comparison_floor =
      2e-3 * (1.0 + std::fabs(rep.nodes.front().mean) + std::fabs(sol.y0)) +
      3.0 * sd_term / std::sqrt(ess);
  rep.comparison_ok = rep.worst_violation <= rep.comparison_floor;
  rep.attainment_ok = std::fabs(rep.gap0) <= attainment_tol;
  return rep;
}

AdmissibilityReport admissibility_check(const ControlProcess& q,
                                        const PathBundle& paths,
                                        const DualGeneratorView& view,
                                        const TerminalFn& terminal) {
  if (!terminal) throw validation_error("admissibility_check: empty terminal function");
  const std::size_t P = paths.n_paths;
  const std::size_t M = paths.grid.steps;
  const std::size_t d = paths.dim;
  const std::size_t k0 = paths.start_index;

  AdmissibilityReport rep;
  const WeightMatrix wm = girsanov_weights(paths, q.view(paths));

  std::vector<double> energy(P), mt(P), cost(P), wenergy(P);
  std::vector<char> finite_f(P, 1);
  par::for_blocks(P, [&](std::size_t, std::size_t begin, std::size_t end) {
    std::vector<double> qv(d);
    for (std::size_t i = begin; i < end; ++i) {
      double e = 0.0, fab = 0.0;
      bool ff = true;
      for (std::size_t k = k0; k < M; ++k) {
        q.value(paths, i, k, qv);
        double qq = 0.0;
        for (std::size_t j = 0; j < d; ++j) qq += qv[j] * qv[j];
        e += qq * paths.grid.dt(k);
        const ExtendedReal f =
            fenchel_transform(view, paths.grid.node(k), paths.state_at(i, k), 0.0, qv);
        if (!f.finite) {
          ff = false;
        } else {
          fab += std::fabs(f.value) * paths.grid.dt(k);
        }
      }
      energy[i] = e;
      mt[i] = wm.m(i, M);
      cost[i] = mt[i] * (std::fabs(terminal(paths.state_at(i, M))) + fab);
      wenergy[i] = mt[i] * e;
      finite_f[i] = ff ? 1 : 0;
    }
  });

  rep.max_path_energy = 0.0;
  for (std::size_t i = 0; i < P; ++i) {
    rep.max_path_energy = std::max(rep.max_path_energy, energy[i]);
    if (!std::isfinite(energy[i])) rep.finite_energy = false;
    if (!finite_f[i]) rep.f_finite = false;
  }

  const auto mvm = stats::mean_var(P, [&](std::size_t i) { return mt[i]; });
  rep.m_mean = mvm.mean;
  rep.m_se = mvm.se;
  rep.martingale_ok = std::fabs(rep.m_mean - 1.0) <= 3.0 * rep.m_se;

  rep.worst_step_score = 0.0;
  for (std::size_t k = k0; k < M; ++k) {
    const auto mv = stats::mean_var(P, [&](std::size_t i) {
      return std::exp(wm.logm(i, k + 1) - wm.logm(i, k));
    });
    if (mv.se > 0.0) {
      rep.worst_step_score =
          std::max(rep.worst_step_score, std::fabs(mv.mean - 1.0) / mv.se);
    }
  }

  const auto mvc = stats::mean_var(P, [&](std::size_t i) { return cost[i]; });
  rep.q_cost_mean = mvc.mean;
  rep.q_cost_se = mvc.se;
  rep.q_cost_tail = stats::tail_dominated(cost);

  const auto mve = stats::mean_var(P, [&](std::size_t i) { return wenergy[i]; });
  rep.q_energy_mean = mve.mean;
  rep.q_energy_se = mve.se;
  rep.q_energy_tail = stats::tail_dominated(wenergy);

  rep.admissible = rep.finite_energy && rep.martingale_ok && rep.f_finite;
  if (!rep.admissible) {
    if (!rep.finite_energy) rep.reasons += "non-finite control energy; ";
    if (!rep.martingale_ok) rep.reasons += "E[M_T] not within 3 SE of 1; ";
    if (!rep.f_finite) rep.reasons += "conjugate infinite along the control; ";
  }
  return rep;
}

EntropyReport relative_entropy_identity(const ControlProcess& q,
                                        const PathBundle& paths) {
  const std::size_t P = paths.n_paths;
  const std::size_t M = paths.grid.steps;
  const std::size_t d = paths.dim;
  const WeightMatrix wm = girsanov_weights(paths, q.view(paths));

  std::vector<double> lhs(P), rhs(P);
  par::for_blocks(P, [&](std::size_t, std::size_t begin, std::size_t end) {
    std::vector<double> qv(d);
    for (std::size_t i = begin; i < end; ++i) {
      const double lm = wm.logm(i, M);
      const double m = std::exp(lm);
      lhs[i] = m * lm;
      double e = 0.0;
      for (std::size_t k = paths.start_index; k < M; ++k) {
        q.value(paths, i, k, qv);
        double qq = 0.0;
        for (std::size_t j = 0; j < d; ++j) qq += qv[j] * qv[j];
        e += qq * paths.grid.dt(k);
      }
      rhs[i] = m * e;
    }
  });

  EntropyReport rep;
  const auto mvl = stats::mean_var(P, [&](std::size_t i) { return lhs[i]; });
  const auto mvr = stats::mean_var(P, [&](std::size_t i) { return rhs[i]; });
  rep.entropy_lhs = 2.0 * mvl.mean;
  rep.lhs_se = 2.0 * mvl.se;
  rep.energy_rhs = mvr.mean;
  rep.rhs_se = mvr.se;
  const double tol = 3.0 * std::sqrt(rep.lhs_se * rep.lhs_se + rep.rhs_se * rep.rhs_se);
  rep.consistent = std::fabs(rep.entropy_lhs - rep.energy_rhs) <= tol;
  return rep;
}

}  // namespace qbsde
