#include "qbsde/pde.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "qbsde/errors.hpp"
#include "qbsde/rng.hpp"

namespace qbsde {

namespace {

double sigma_at(const SdeSpec& sde, double t) {
  if (!sde.sigma) return 1.0;
  double s = 0.0;
  sde.sigma(t, {&s, 1});
  return s;
}

// Gaussian functional of the terminal condition:
//   gamma = 0:   E[ h(x + s N) ]
//   gamma > 0:  -(1/gamma) log E[ exp(-gamma h(x + s N)) ]
// Composite Simpson on [-10, 10] with log-sum-exp stabilisation.
double gaussian_transport(const std::function<double(double)>& h, double x, double s,
                          double gamma) {
  if (s <= 0.0) return h(x);
  constexpr int kN = 1001;  // odd
  constexpr double kW = 10.0;
  const double dw = 2.0 * kW / (kN - 1);
  if (gamma == 0.0) {
    double acc = 0.0;
    for (int i = 0; i < kN; ++i) {
      const double w = -kW + i * dw;
      const double simp = (i == 0 || i == kN - 1) ? 1.0 : ((i % 2) ? 4.0 : 2.0);
      acc += simp * h(x + s * w) * std::exp(-0.5 * w * w);
    }
    return acc * dw / 3.0 * 0.3989422804014327;
  }
  double m = -std::numeric_limits<double>::infinity();
  double ex[kN];
  for (int i = 0; i < kN; ++i) {
    const double w = -kW + i * dw;
    ex[i] = -gamma * h(x + s * w) - 0.5 * w * w;
    m = std::max(m, ex[i]);
  }
  double acc = 0.0;
  for (int i = 0; i < kN; ++i) {
    const double simp = (i == 0 || i == kN - 1) ? 1.0 : ((i % 2) ? 4.0 : 2.0);
    acc += simp * std::exp(ex[i] - m);
  }
  const double logint = m + std::log(acc * dw / 3.0 * 0.3989422804014327);
  if (!std::isfinite(logint)) throw numeric_error("gaussian_transport: overflow");
  return -logint / gamma;
}

void validate_pde_inputs(const PdeSpec& spec, const PdeGrid& grid) {
  if (spec.sde.dim != 1) throw validation_error("solve_pde_fd: requires a scalar diffusion");
  if (!spec.terminal) throw validation_error("solve_pde_fd: empty terminal condition");
  if (!(spec.horizon > 0.0)) throw validation_error("solve_pde_fd: horizon must be > 0");
  if (grid.time_nodes < 2 || grid.space_nodes < 5) {
    throw validation_error("solve_pde_fd: grid too small");
  }
  if (!(grid.radius > 0.0)) throw validation_error("solve_pde_fd: radius must be > 0");
  if (grid.theta < 0.0 || grid.theta > 1.0) {
    throw validation_error("solve_pde_fd: theta must lie in [0,1]");
  }
}

// suffix variances s^2(m) = int_{t_m}^T sigma^2, trapezoid on the time grid
std::vector<double> suffix_variance(const SdeSpec& sde, const std::vector<double>& times) {
  const std::size_t n = times.size();
  std::vector<double> s2(n, 0.0);
  for (std::size_t m = n - 1; m-- > 0;) {
    const double sa = sigma_at(sde, times[m]);
    const double sb = sigma_at(sde, times[m + 1]);
    s2[m] = s2[m + 1] + 0.5 * (sa * sa + sb * sb) * (times[m + 1] - times[m]);
  }
  return s2;
}

}  // namespace

double PdeSolution::interp(double t, double x) const {
  if (times.empty()) throw validation_error("PdeSolution: empty");
  const double tc = std::clamp(t, times.front(), times.back());
  const double xc = std::clamp(x, xs.front(), xs.back());
  const double dt = times[1] - times[0];
  const double dx = xs[1] - xs[0];
  std::size_t m = std::min<std::size_t>(static_cast<std::size_t>((tc - times.front()) / dt),
                                        time_nodes - 2);
  std::size_t j = std::min<std::size_t>(static_cast<std::size_t>((xc - xs.front()) / dx),
                                        space_nodes - 2);
  const double a = (tc - times[m]) / dt;
  const double b = (xc - xs[j]) / dx;
  return (1 - a) * ((1 - b) * at(m, j) + b * at(m, j + 1)) +
         a * ((1 - b) * at(m + 1, j) + b * at(m + 1, j + 1));
}

A4Report check_A4(const PdeSpec& spec, const SamplePlan& plan) {
  if (!spec.terminal) throw validation_error("check_A4: empty terminal condition");
  A4Report rep;
  rep.clauses.resize(7);
  rep.clauses[0].name = "terminal-band";
  rep.clauses[1].name = "terminal-x-lipschitz";
  rep.clauses[2].name = "driver-upper-band";
  rep.clauses[3].name = "driver-lower-band";
  rep.clauses[4].name = "driver-x-lipschitz";
  rep.clauses[5].name = "driver-y-lipschitz";
  rep.clauses[6].name = "driver-convexity-z";

  const A4Constants& c = spec.a4;
  constexpr double kTol = 1e-9;
  auto update = [&](A4ClauseReport& cl, double violation, double t, double x, double y,
                    double z) {
    if (violation > cl.worst_violation) {
      cl.worst_violation = violation;
      char buf[120];
      std::snprintf(buf, sizeof(buf), "t=%.6g x=%.6g y=%.6g z=%.6g", t, x, y, z);
      cl.witness = buf;
    }
    if (violation > kTol) cl.pass = false;
  };

  for (std::uint64_t i = 0; i < plan.count; ++i) {
    const auto u = [&](std::uint64_t slot, double lo, double hi) {
      return rng::uniform(plan.seed, rng::kSampling, i, slot, 2, lo, hi);
    };
    const double t = u(0, plan.t_min, plan.t_max);
    const double x = u(1, -plan.x_radius, plan.x_radius);
    const double x2 = u(2, -plan.x_radius, plan.x_radius);
    const double y = u(3, -plan.y_radius, plan.y_radius);
    const double y2 = u(4, -plan.y_radius, plan.y_radius);
    const double z = u(5, -plan.z_radius, plan.z_radius);
    const double z2 = u(6, -plan.z_radius, plan.z_radius);

    const double h = spec.terminal(x);
    const double h2 = spec.terminal(x2);
    update(rep.clauses[0], std::max(h - c.r * (1.0 + x * x), (-c.r - c.alpha_prime * x * x) - h),
           t, x, y, z);
    update(rep.clauses[1],
           std::fabs(h - h2) - c.r * (1.0 + std::fabs(x) + std::fabs(x2)) * std::fabs(x - x2),
           t, x, y, z);

    const double g = eval_generator(spec.gen, t, {&x, 1}, y, {&z, 1});
    const double gx2 = eval_generator(spec.gen, t, {&x2, 1}, y, {&z, 1});
    const double gy2 = eval_generator(spec.gen, t, {&x, 1}, y2, {&z, 1});
    const double gz2 = eval_generator(spec.gen, t, {&x, 1}, y, {&z2, 1});
    const double zmid = 0.5 * (z + z2);
    const double gzm = eval_generator(spec.gen, t, {&x, 1}, y, {&zmid, 1});

    update(rep.clauses[2],
           g - (c.r + c.alpha * x * x + c.beta * std::fabs(y) + 0.5 * c.gamma * z * z), t, x,
           y, z);
    update(rep.clauses[3],
           (-c.r * (1.0 + x * x + std::fabs(y) + std::fabs(z))) - g, t, x, y, z);
    update(rep.clauses[4],
           std::fabs(g - gx2) - c.r * (1.0 + std::fabs(x) + std::fabs(x2)) * std::fabs(x - x2),
           t, x, y, z);
    update(rep.clauses[5], std::fabs(g - gy2) - c.beta * std::fabs(y - y2), t, x, y, z);
    update(rep.clauses[6], gzm - 0.5 * (g + gz2), t, x, y, z);
  }

  rep.smallness_lhs = c.alpha_prime + spec.horizon * c.alpha;
  const double sig = spec.sde.sigma_bound;
  if (c.gamma <= 0.0 || sig <= 0.0) {
    rep.smallness_rhs = std::numeric_limits<double>::infinity();
  } else {
    rep.smallness_rhs = 1.0 / (2.0 * c.gamma * std::exp(3.0 * c.beta * spec.horizon) * sig *
                               sig * spec.horizon);
  }
  A4ClauseReport small;
  small.name = "smallness";
  small.pass = rep.smallness_lhs < rep.smallness_rhs;
  small.worst_violation = small.pass ? 0.0 : rep.smallness_lhs - rep.smallness_rhs;
  rep.clauses.push_back(small);

  for (const auto& cl : rep.clauses) rep.all_pass = rep.all_pass && cl.pass;
  return rep;
}

PdeSolution solve_pde_fd(const PdeSpec& spec, const PdeGrid& grid, BoundaryMode mode) {
  validate_pde_inputs(spec, grid);
  const std::size_t Nt = grid.time_nodes;
  const std::size_t Nx = grid.space_nodes;
  const double T = spec.horizon;
  const double R = grid.radius;
  const double dtau = T / static_cast<double>(Nt - 1);
  const double dx = 2.0 * R / static_cast<double>(Nx - 1);
  const double theta = grid.theta;

  if (mode == BoundaryMode::Auto) {
    mode = (spec.gen.family == GenFamily::PureQuadratic && spec.sde.drift_is_zero())
               ? BoundaryMode::ExpTransport
               : BoundaryMode::HeatTransport;
  }
  if (mode == BoundaryMode::ExpTransport && spec.gen.family != GenFamily::PureQuadratic) {
    throw validation_error("solve_pde_fd: exponential transport needs a pure-quadratic driver");
  }
  const double bgamma = (mode == BoundaryMode::ExpTransport) ? spec.gen.quad_gamma : 0.0;

  PdeSolution sol;
  sol.time_nodes = Nt;
  sol.space_nodes = Nx;
  sol.radius = R;
  sol.horizon = T;
  sol.times.resize(Nt);
  sol.xs.resize(Nx);
  for (std::size_t m = 0; m < Nt; ++m) {
    sol.times[m] = (m == Nt - 1) ? T : static_cast<double>(m) * dtau;
  }
  for (std::size_t j = 0; j < Nx; ++j) sol.xs[j] = -R + static_cast<double>(j) * dx;
  sol.u.assign(Nt * Nx, 0.0);

  for (std::size_t j = 0; j < Nx; ++j) sol.u[(Nt - 1) * Nx + j] = spec.terminal(sol.xs[j]);

  const std::vector<double> s2 = suffix_variance(spec.sde, sol.times);

  std::vector<double> bvals(Nx, 0.0);
  std::vector<double> sub(Nx), diag(Nx), sup(Nx), rhs(Nx), vprev(Nx), v(Nx), cp(Nx), dp(Nx);

  for (std::size_t m = Nt - 1; m-- > 0;) {
    const double t = sol.times[m];
    const double sig = sigma_at(spec.sde, t);
    const double sig2 = sig * sig;
    const double* un = sol.u.data() + (m + 1) * Nx;
    double* um = sol.u.data() + m * Nx;

    // drift at the unknown level and explicit stability guard
    double bmax = 0.0;
    for (std::size_t j = 0; j < Nx; ++j) {
      double bj = 0.0;
      if (spec.sde.drift) spec.sde.drift(t, {&sol.xs[j], 1}, {&bj, 1});
      bvals[j] = bj;
      bmax = std::max(bmax, std::fabs(bj));
    }
    if (theta < 1.0) {
      const double diff_number = (1.0 - theta) * sig2 * dtau / (dx * dx);
      const double adv_number = (1.0 - theta) * bmax * dtau / dx;
      if (diff_number > 0.5 || adv_number > 1.0) {
        throw numeric_error("solve_pde_fd: explicit part violates the stability guard");
      }
    }

    const double s = std::sqrt(std::max(0.0, s2[m]));
    const double lo = gaussian_transport(spec.terminal, -R, s, bgamma);
    const double hi = gaussian_transport(spec.terminal, R, s, bgamma);

    std::copy(un, un + Nx, vprev.begin());
    vprev[0] = lo;
    vprev[Nx - 1] = hi;

    // slope of z -> g for the policy linearisation below
    const auto zslope = [&](double xj, double yv, double zeta) -> double {
      switch (spec.gen.family) {
        case GenFamily::PureQuadratic:
        case GenFamily::EntropicLinearY:
          return spec.gen.quad_gamma * zeta;
        case GenFamily::AffineY:
          return 0.0;
        case GenFamily::Custom: {
          const double h = 1e-5 * (1.0 + std::fabs(zeta));
          const double zp = zeta + h, zm = zeta - h;
          return (eval_generator(spec.gen, t, {&xj, 1}, yv, {&zp, 1}) -
                  eval_generator(spec.gen, t, {&xj, 1}, yv, {&zm, 1})) /
                 (2.0 * h);
        }
      }
      return 0.0;
    };

    int iter = 0;
    for (; iter < 50; ++iter) {
      // Policy iteration on the convex driver: replace g by its supporting
      // hyperplane at the current iterate's gradient,
      //   g(zeta') ~= q zeta' - c,  q in dg(zeta),  c = q zeta - g(zeta),
      // which folds -g into an extra advection sig*q and a source c.  The
      // lagged-driver Picard map contracts only when dt |q| / dx is small;
      // this one has no such restriction.
      for (std::size_t j = 1; j + 1 < Nx; ++j) {
        const double xj = sol.xs[j];
        const auto gval = [&](double zv) {
          return eval_generator(spec.gen, t, {&xj, 1}, vprev[j], {&zv, 1});
        };
        const double d0 = (vprev[j + 1] - vprev[j - 1]) / (2.0 * dx);
        const double dfw = (vprev[j + 1] - vprev[j]) / dx;
        const double dbw = (vprev[j] - vprev[j - 1]) / dx;

        // The gradient feeding the policy, the plane anchor and the
        // advection stencil must agree, otherwise the iteration can cycle
        // in under-resolved layers.  Centered differences are kept while
        // the curvature bound guarantees an M-matrix; past that the scheme
        // switches to the directional upwind candidate whose effective
        // drift matches its own one-sided gradient.
        double zeta = -sig * d0;
        double q = 0.0, c = 0.0, beff = 0.0;
        bool centered = (std::fabs(bvals[j]) +
                         sig * spec.gen.gamma_bar * std::fabs(zeta)) *
                            dx <=
                        sig2;
        if (centered) {
          q = zslope(xj, vprev[j], zeta);
          beff = bvals[j] + sig * q;
          if (std::fabs(beff) * dx > sig2) {
            centered = false;  // understated curvature bound
          } else {
            c = q * zeta - gval(zeta);
          }
        }
        if (!centered) {
          const double za = -sig * dfw, zb = -sig * dbw;
          const double qa = zslope(xj, vprev[j], za);
          const double qb = zslope(xj, vprev[j], zb);
          const double ba = bvals[j] + sig * qa;
          const double bb = bvals[j] + sig * qb;
          const double ga = gval(za), gb = gval(zb);
          const bool va = ba >= 0.0, vb = bb <= 0.0;
          if (va && (!vb || ga >= gb)) {
            q = qa;
            beff = ba;
            c = qa * za - ga;
          } else if (vb) {
            q = qb;
            beff = bb;
            c = qb * zb - gb;
          } else {
            // sonic cell: the controlled drift changes sign inside it, so
            // cancel the advection exactly and keep the centered anchor
            q = (sig > 0.0) ? -bvals[j] / sig : 0.0;
            beff = 0.0;
            c = q * zeta - gval(zeta);
          }
        }
        const double bp = std::max(beff, 0.0), bm = std::min(beff, 0.0);

        double expl = 0.0;
        if (theta < 1.0) {
          if ((1.0 - theta) * std::fabs(beff) * dtau / dx > 1.0) {
            throw numeric_error(
                "solve_pde_fd: explicit part violates the stability guard");
          }
          const double lap = (un[j + 1] - 2.0 * un[j] + un[j - 1]) / (dx * dx);
          const double adv =
              centered
                  ? beff * (un[j + 1] - un[j - 1]) / (2.0 * dx)
                  : (bp * (un[j + 1] - un[j]) + bm * (un[j] - un[j - 1])) / dx;
          expl = (1.0 - theta) * (adv + 0.5 * sig2 * lap);
        }
        rhs[j] = un[j] / dtau + expl + c;

        if (centered) {
          sub[j] = theta * (beff / (2.0 * dx) - 0.5 * sig2 / (dx * dx));
          diag[j] = 1.0 / dtau + theta * sig2 / (dx * dx);
          sup[j] = theta * (-beff / (2.0 * dx) - 0.5 * sig2 / (dx * dx));
        } else {
          sub[j] = theta * (bm / dx - 0.5 * sig2 / (dx * dx));
          diag[j] = 1.0 / dtau + theta * (sig2 / (dx * dx) + (bp - bm) / dx);
          sup[j] = theta * (-bp / dx - 0.5 * sig2 / (dx * dx));
        }
      }
      rhs[1] -= sub[1] * lo;
      rhs[Nx - 2] -= sup[Nx - 2] * hi;

      // Thomas solve on the interior nodes
      cp[1] = sup[1] / diag[1];
      dp[1] = rhs[1] / diag[1];
      for (std::size_t j = 2; j + 1 < Nx; ++j) {
        const double den = diag[j] - sub[j] * cp[j - 1];
        cp[j] = sup[j] / den;
        dp[j] = (rhs[j] - sub[j] * dp[j - 1]) / den;
      }
      v[Nx - 2] = dp[Nx - 2];
      for (std::size_t j = Nx - 2; j-- > 1;) v[j] = dp[j] - cp[j] * v[j + 1];
      v[0] = lo;
      v[Nx - 1] = hi;

      double diff = 0.0, scale = 1.0;
      for (std::size_t j = 1; j + 1 < Nx; ++j) {
        diff = std::max(diff, std::fabs(v[j] - vprev[j]));
        scale = std::max(scale, std::fabs(v[j]));
      }
      std::swap(v, vprev);
      if (diff <= 1e-10 * scale) break;
    }
    if (iter >= 50) {
      throw numeric_error("solve_pde_fd: driver fixed point did not converge");
    }
    sol.fixed_point_max = std::max(sol.fixed_point_max, iter + 1);
    std::copy(vprev.begin(), vprev.end(), um);
  }
  return sol;
}

PdeSolution cole_hopf_oracle(double gamma, const std::function<double(double)>& terminal,
                             const SdeSpec& sde, double horizon, const PdeGrid& grid) {
  if (!(gamma > 0.0)) throw validation_error("cole_hopf_oracle: gamma must be > 0");
  if (!terminal) throw validation_error("cole_hopf_oracle: empty terminal condition");
  if (sde.dim != 1) throw validation_error("cole_hopf_oracle: requires a scalar diffusion");
  if (!sde.drift_is_zero()) {
    throw validation_error("cole_hopf_oracle: requires zero drift");
  }

  PdeSolution sol;
  sol.time_nodes = grid.time_nodes;
  sol.space_nodes = grid.space_nodes;
  sol.radius = grid.radius;
  sol.horizon = horizon;
  const double dtau = horizon / static_cast<double>(grid.time_nodes - 1);
  const double dx = 2.0 * grid.radius / static_cast<double>(grid.space_nodes - 1);
  sol.times.resize(grid.time_nodes);
  sol.xs.resize(grid.space_nodes);
  for (std::size_t m = 0; m < grid.time_nodes; ++m) {
    sol.times[m] = (m == grid.time_nodes - 1) ? horizon : static_cast<double>(m) * dtau;
  }
  for (std::size_t j = 0; j < grid.space_nodes; ++j) {
    sol.xs[j] = -grid.radius + static_cast<double>(j) * dx;
  }
  sol.u.resize(grid.time_nodes * grid.space_nodes);

  const std::vector<double> s2 = suffix_variance(sde, sol.times);
  for (std::size_t m = 0; m < grid.time_nodes; ++m) {
    const double s = std::sqrt(std::max(0.0, s2[m]));
    for (std::size_t j = 0; j < grid.space_nodes; ++j) {
      sol.u[m * grid.space_nodes + j] = gaussian_transport(terminal, sol.xs[j], s, gamma);
    }
  }
  return sol;
}

FkReport feynman_kac_compare(const PdeSolution& pde, const FkRunner& runner,
                             std::span<const FkProbe> probes, double tol) {
  if (!runner.terminal) throw validation_error("feynman_kac_compare: empty terminal");
  FkReport rep;
  for (std::size_t idx = 0; idx < probes.size(); ++idx) {
    const FkProbe& pr = probes[idx];
    const double kf = pr.t / runner.horizon * static_cast<double>(runner.steps);
    if (std::fabs(kf - std::round(kf)) > 1e-9) {
      throw validation_error("feynman_kac_compare: probe time not on the step grid");
    }
    const TimeGrid tg{runner.horizon, runner.steps};
    const double x0 = pr.x;
    const PathBundle bundle = simulate_forward(runner.sde, tg, runner.paths,
                                               runner.seed + idx, pr.t, {&x0, 1});
    const auto terminal1d = [&](std::span<const double> xv) {
      return runner.terminal(xv[0]);
    };
    const BSDESolution sol =
        solve_bsde_lsmc(runner.gen, terminal1d, bundle, runner.basis, runner.opts);
    FkRow row;
    row.t = pr.t;
    row.x = pr.x;
    row.u_fd = pde.interp(pr.t, pr.x);
    row.y_mc = sol.y0;
    row.se = sol.y0_se;
    row.diff = std::fabs(row.u_fd - row.y_mc);
    row.tol = tol;
    row.pass = row.diff <= tol;
    rep.all_pass = rep.all_pass && row.pass;
    rep.rows.push_back(row);
  }
  return rep;
}

PdeLadderReport viscosity_ladder(const PdeSpec& spec, std::span<const double> n_values,
                                 const PdeGrid& grid, const GridPlan& search) {
  if (n_values.empty()) throw validation_error("viscosity_ladder: empty n list");
  PdeLadderReport rep;
  for (double n : n_values) {
    if (!(n > 0.0)) throw validation_error("viscosity_ladder: n must be > 0");
    PdeSpec sn = spec;
    sn.gen = lipschitz_envelope(spec.gen, n, search);
    // one shared boundary closure so the ladder is comparable across n
    rep.solutions.push_back(solve_pde_fd(sn, grid, BoundaryMode::HeatTransport));
    rep.n_values.push_back(n);
  }
  for (std::size_t i = 1; i < rep.solutions.size(); ++i) {
    const auto& a = rep.solutions[i - 1];
    const auto& b = rep.solutions[i];
    for (std::size_t idx = 0; idx < a.u.size(); ++idx) {
      rep.max_violation = std::max(rep.max_violation, b.u[idx] - a.u[idx]);
    }
  }
  rep.monotone = rep.max_violation <= 1e-6;
  return rep;
}

ModulusReport continuity_modulus_check(const PdeSolution& sol,
                                       std::span<const std::array<double, 4>> pairs) {
  ModulusReport rep;
  for (const auto& p : pairs) {
    const double t = p[0], x = p[1], t0 = p[2], x0 = p[3];
    const double du_space = std::fabs(sol.interp(t, x) - sol.interp(t, x0));
    if (std::fabs(x - x0) > 1e-12) {
      rep.c_space = std::max(
          rep.c_space,
          du_space / ((1.0 + std::fabs(x) + std::fabs(x0)) * std::fabs(x - x0)));
    }
    const double du_time = std::fabs(sol.interp(t, x0) - sol.interp(t0, x0));
    if (std::fabs(t - t0) > 1e-12) {
      rep.c_time = std::max(rep.c_time, du_time / ((1.0 + x * x + x0 * x0) *
                                                   std::sqrt(std::fabs(t - t0))));
    }
  }
  for (std::size_t m = 0; m < sol.time_nodes; ++m) {
    for (std::size_t j = 0; j < sol.space_nodes; ++j) {
      rep.c_growth =
          std::max(rep.c_growth, std::fabs(sol.at(m, j)) / (1.0 + sol.xs[j] * sol.xs[j]));
    }
  }
  return rep;
}

}  // namespace qbsde
