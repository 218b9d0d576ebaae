#include "qbsde/bsde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qbsde/errors.hpp"
#include "qbsde/parallel.hpp"
#include "qbsde/stats.hpp"

namespace qbsde {

namespace {

double bundle_state_sup(const PathBundle& paths, std::size_t k_begin, std::size_t k_end) {
  const std::size_t nb = par::block_count(paths.n_paths);
  std::vector<double> bmax(nb, 0.0);
  par::for_blocks(paths.n_paths, [&](std::size_t blk, std::size_t begin, std::size_t end) {
    double m = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t k = k_begin; k <= k_end; ++k) {
        for (double c : paths.state_at(i, k)) m = std::max(m, std::fabs(c));
      }
    }
    bmax[blk] = m;
  });
  double m = 0.0;
  for (double v : bmax) m = std::max(m, v);
  return m;
}

}  // namespace

BSDESolution solve_bsde_lsmc_range(const GeneratorSpec& gen,
                                   std::span<const double> terminal_values,
                                   const PathBundle& paths, std::size_t k_begin,
                                   std::size_t k_end, const BasisPlan& basis,
                                   const SolverOptions& opts) {
  const std::size_t P = paths.n_paths;
  const std::size_t M = paths.grid.steps;
  const std::size_t d = paths.dim;
  if (terminal_values.size() != P) {
    throw validation_error("solve_bsde_lsmc: terminal size mismatch");
  }
  if (!(k_begin < k_end) || k_end > M) {
    throw validation_error("solve_bsde_lsmc: invalid node range");
  }
  if (opts.fixed_point_iters < 1 || !(opts.fixed_point_tol > 0.0)) {
    throw validation_error("solve_bsde_lsmc: bad fixed-point options");
  }
  for (double v : terminal_values) {
    if (!std::isfinite(v)) throw numeric_error("solve_bsde_lsmc: non-finite terminal value");
  }

  BSDESolution sol;
  sol.grid = paths.grid;
  sol.n_paths = P;
  sol.dim = d;
  sol.k_begin = k_begin;
  sol.k_end = k_end;
  sol.y.assign(P * (M + 1), 0.0);
  sol.z.assign(P * M * d, 0.0);
  sol.step_diag.resize(M);
  sol.step_fit.resize(M);
  sol.z_clamp_used = opts.z_clamp > 0.0
                         ? opts.z_clamp
                         : 10.0 * (1.0 + bundle_state_sup(paths, k_begin, k_end));

  for (std::size_t i = 0; i < P; ++i) sol.y[i * (M + 1) + k_end] = terminal_values[i];

  const std::size_t nodes = M + 1;
  std::vector<double> cont(P);                 // continuation target
  std::vector<double> ztarget(d * P);          // increment targets, one block per coord
  std::vector<const double*> targets(1 + d);

  for (std::size_t k = k_end; k-- > k_begin;) {
    const double t = paths.grid.node(k);
    const double dtk = paths.grid.dt(k);
    StateView sv{paths.x.data() + k * d, nodes * d, d};

    par::for_blocks(P, [&](std::size_t, std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) cont[i] = sol.y[i * nodes + k + 1];
    });
    targets.resize(1);
    targets[0] = cont.data();
    PolyFit fit = fit_polynomial(P, sv, targets, nullptr, basis, opts.ridge);

    // increment regression Z_k = -E[Y_{k+1} dW_k]/dt, with the continuation
    // fit as control variate: centering Y_{k+1} leaves the conditional mean
    // unchanged (dW is independent of X_k) and removes the 1/dt variance.
    par::for_blocks(P, [&](std::size_t, std::size_t begin, std::size_t end) {
      std::vector<double> phi(fit.basis_size());
      for (std::size_t i = begin; i < end; ++i) {
        fit.basis_row(paths.state_at(i, k), phi);
        double chat = 0.0;
        for (std::size_t b = 0; b < phi.size(); ++b) chat += fit.coef[0][b] * phi[b];
        const double resid = cont[i] - chat;
        for (std::size_t j = 0; j < d; ++j) {
          ztarget[j * P + i] = -resid * paths.dwv(i, k, j) / dtk;
        }
      }
    });
    targets.resize(d);
    for (std::size_t j = 0; j < d; ++j) targets[j] = ztarget.data() + j * P;
    PolyFit zfit = fit_polynomial(P, sv, targets, nullptr, basis, opts.ridge);

    const std::size_t nb = par::block_count(P);
    std::vector<std::size_t> bclamp(nb, 0);
    std::vector<int> biters(nb, 0);
    std::vector<double> bresid(nb, 0.0);
    std::vector<int> bfail(nb, 0);

    par::for_blocks(P, [&](std::size_t blk, std::size_t begin, std::size_t end) {
      std::vector<double> phi(fit.basis_size());
      std::vector<double> zi(d);
      for (std::size_t i = begin; i < end; ++i) {
        const auto xi = paths.state_at(i, k);
        fit.basis_row(xi, phi);
        double yhat = 0.0;
        for (std::size_t b = 0; b < phi.size(); ++b) yhat += fit.coef[0][b] * phi[b];
        double zn2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          double v = 0.0;
          for (std::size_t b = 0; b < phi.size(); ++b) v += zfit.coef[j][b] * phi[b];
          zi[j] = v;
          zn2 += v * v;
        }
        const double zn = std::sqrt(zn2);
        if (zn > sol.z_clamp_used) {
          const double sc = sol.z_clamp_used / zn;
          for (std::size_t j = 0; j < d; ++j) zi[j] *= sc;
          ++bclamp[blk];
        }
        for (std::size_t j = 0; j < d; ++j) sol.z[(i * M + k) * d + j] = zi[j];

        // implicit step: y = yhat - g(t, x, y, z) dt
        double yv = yhat;
        int used = 0;
        bool ok = false;
        for (int it = 0; it < opts.fixed_point_iters; ++it) {
          const double yn = yhat - eval_generator(gen, t, xi, yv, zi) * dtk;
          used = it + 1;
          if (std::fabs(yn - yv) <= opts.fixed_point_tol * (1.0 + std::fabs(yn))) {
            yv = yn;
            ok = true;
            break;
          }
          yv = yn;
        }
        if (!ok) ++bfail[blk];
        if (!std::isfinite(yv)) ++bfail[blk];
        biters[blk] = std::max(biters[blk], used);
        sol.y[i * nodes + k] = yv;

        // dynamic-programming residual of the completed step
        double zdw = 0.0;
        for (std::size_t j = 0; j < d; ++j) zdw += zi[j] * paths.dwv(i, k, j);
        const double g = eval_generator(gen, t, xi, yv, zi);
        bresid[blk] += std::fabs(yv - sol.y[i * nodes + k + 1] + g * dtk - zdw);
      }
    });

    std::size_t clamped = 0, failed = 0;
    int iters = 0;
    double resid = 0.0;
    for (std::size_t blk = 0; blk < nb; ++blk) {
      clamped += bclamp[blk];
      failed += bfail[blk];
      iters = std::max(iters, biters[blk]);
      resid += bresid[blk];
    }
    if (failed > 0) {
      throw numeric_error("solve_bsde_lsmc: implicit fixed point did not converge");
    }
    sol.clamp_count += clamped;
    sol.step_diag[k] = {fit.rmse[0], resid / static_cast<double>(P), clamped, iters};
    sol.step_fit[k] = std::move(fit);
  }

  // value and pathwise estimator at k_begin
  sol.y0 = stats::block_sum(P, [&](std::size_t i) { return sol.y[i * nodes + k_begin]; }) /
           static_cast<double>(P);
  std::vector<double> eta(P);
  par::for_blocks(P, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      double acc = terminal_values[i];
      for (std::size_t k = k_begin; k < k_end; ++k) {
        const double dtk = paths.grid.dt(k);
        const auto zi = sol.z_row(i, k);
        double zdw = 0.0;
        for (std::size_t j = 0; j < d; ++j) zdw += zi[j] * paths.dwv(i, k, j);
        acc -= eval_generator(gen, paths.grid.node(k), paths.state_at(i, k),
                              sol.y_at(i, k), zi) * dtk;
        acc += zdw;
      }
      eta[i] = acc;
    }
  });
  const auto mv = stats::mean_var(P, [&](std::size_t i) { return eta[i]; });
  sol.y0_pathwise = mv.mean;
  sol.y0_se = mv.se;
  return sol;
}

BSDESolution solve_bsde_lsmc(const GeneratorSpec& gen, const TerminalFn& terminal,
                             const PathBundle& paths, const BasisPlan& basis,
                             const SolverOptions& opts) {
  if (!terminal) throw validation_error("solve_bsde_lsmc: empty terminal function");
  const std::size_t P = paths.n_paths;
  const std::size_t M = paths.grid.steps;
  std::vector<double> xi(P);
  par::for_blocks(P, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) xi[i] = terminal(paths.state_at(i, M));
  });
  return solve_bsde_lsmc_range(gen, xi, paths, paths.start_index, M, basis, opts);
}

double entropic_value(std::span<const double> xi, double gamma) {
  if (!(gamma > 0.0)) throw validation_error("entropic_value: gamma must be > 0");
  if (xi.empty()) throw validation_error("entropic_value: empty sample");
  std::vector<double> a(xi.size());
  for (std::size_t i = 0; i < xi.size(); ++i) {
    if (!std::isfinite(xi[i])) throw numeric_error("entropic_value: non-finite sample");
    a[i] = -gamma * xi[i];
  }
  return -stats::log_mean_exp(a) / gamma;
}

double sandwich_lower_bound(double gamma, double beta, double t, double horizon,
                            std::span<const double> xi,
                            std::span<const double> alpha_integrals) {
  if (!(gamma > 0.0)) throw validation_error("sandwich_lower_bound: gamma must be > 0");
  if (beta < 0.0) throw validation_error("sandwich_lower_bound: beta must be >= 0");
  if (t < 0.0 || t > horizon) throw validation_error("sandwich_lower_bound: t outside [0,T]");
  if (xi.empty()) throw validation_error("sandwich_lower_bound: empty sample");
  if (!alpha_integrals.empty() && alpha_integrals.size() != xi.size()) {
    throw validation_error("sandwich_lower_bound: size mismatch");
  }
  const double growth = std::exp(beta * (horizon - t));
  std::vector<double> a(xi.size());
  for (std::size_t i = 0; i < xi.size(); ++i) {
    const double neg = std::max(-xi[i], 0.0);
    const double integral = alpha_integrals.empty() ? 0.0 : alpha_integrals[i];
    if (integral < 0.0) {
      throw validation_error("sandwich_lower_bound: negative envelope integral");
    }
    a[i] = gamma * growth * neg + gamma * integral;
    if (!std::isfinite(a[i])) throw numeric_error("sandwich_lower_bound: overflow");
  }
  return -stats::log_mean_exp(a) / gamma;
}

LadderResult solve_lipschitz_sequence(const GeneratorSpec& gen,
                                      const TerminalFn& terminal,
                                      const PathBundle& paths,
                                      std::span<const double> n_values,
                                      const BasisPlan& basis,
                                      const SolverOptions& opts,
                                      const GridPlan& grid_plan) {
  if (n_values.empty()) throw validation_error("solve_lipschitz_sequence: empty n list");
  for (std::size_t i = 1; i < n_values.size(); ++i) {
    if (!(n_values[i] > n_values[i - 1])) {
      throw validation_error("solve_lipschitz_sequence: n values must increase");
    }
  }
  LadderResult out;
  for (double n : n_values) {
    const GeneratorSpec gn = lipschitz_envelope(gen, n, grid_plan);
    const BSDESolution sol = solve_bsde_lsmc(gn, terminal, paths, basis, opts);
    out.entries.push_back({n, sol.y0, sol.y0_se});
  }
  for (std::size_t i = 1; i < out.entries.size(); ++i) {
    const double inc = out.entries[i].y0 - out.entries[i - 1].y0;
    out.max_increase = std::max(out.max_increase, inc);
    const double tol = 3.0 * std::sqrt(out.entries[i].se * out.entries[i].se +
                                       out.entries[i - 1].se * out.entries[i - 1].se);
    if (inc > tol) out.monotone_within_3se = false;
  }
  return out;
}

UniquenessClassReport uniqueness_class_check(const BSDESolution& sol,
                                             const PathBundle& paths,
                                             const GeneratorSpec& gen, double p,
                                             double epsilon) {
  if (!(p > gen.gamma_bar)) {
    throw validation_error("uniqueness_class_check: p must exceed gamma_bar");
  }
  if (!(epsilon > 0.0)) throw validation_error("uniqueness_class_check: epsilon must be > 0");
  const std::size_t P = sol.n_paths;
  std::vector<double> ea(P), ey(P);
  par::for_blocks(P, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      double alpha_acc = 0.0, sup_a = 0.0, sup_y = 0.0;
      for (std::size_t k = sol.k_begin; k <= sol.k_end; ++k) {
        const double yk = sol.y_at(i, k);
        sup_a = std::max(sup_a, std::max(-yk, 0.0) + alpha_acc);
        sup_y = std::max(sup_y, std::max(yk, 0.0));
        if (k < sol.k_end) {
          alpha_acc += alpha_upper_at(gen, paths.grid.node(k), paths.state_at(i, k)) *
                       paths.grid.dt(k);
        }
      }
      ea[i] = std::exp(p * sup_a);
      ey[i] = std::exp(epsilon * sup_y);
      if (!std::isfinite(ea[i]) || !std::isfinite(ey[i])) {
        throw numeric_error("uniqueness_class_check: overflow in exponential moment");
      }
    }
  });
  UniquenessClassReport rep;
  rep.p = p;
  rep.epsilon = epsilon;
  const auto mva = stats::mean_var(P, [&](std::size_t i) { return ea[i]; });
  const auto mvy = stats::mean_var(P, [&](std::size_t i) { return ey[i]; });
  rep.exp_pa = mva.mean;
  rep.exp_pa_se = mva.se;
  rep.tail_a = stats::tail_dominated(ea);
  rep.exp_ey = mvy.mean;
  rep.exp_ey_se = mvy.se;
  rep.tail_y = stats::tail_dominated(ey);
  return rep;
}

}  // namespace qbsde
