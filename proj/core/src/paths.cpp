#include "qbsde/paths.hpp"

#include <cmath>
#include <limits>

#include "qbsde/errors.hpp"
#include "qbsde/parallel.hpp"
#include "qbsde/rng.hpp"
#include "qbsde/stats.hpp"

namespace qbsde {

SdeSpec SdeSpec::brownian(std::size_t dim, double sigma) {
  if (dim == 0) throw validation_error("SdeSpec: dim must be >= 1");
  if (!(sigma > 0.0)) throw validation_error("SdeSpec: sigma must be > 0");
  SdeSpec s;
  s.dim = dim;
  if (sigma != 1.0) {
    s.sigma = [dim, sigma](double, std::span<double> out) {
      for (std::size_t r = 0; r < dim; ++r)
        for (std::size_t c = 0; c < dim; ++c) out[r * dim + c] = (r == c) ? sigma : 0.0;
    };
  }
  s.sigma_bound = sigma;
  return s;
}

SdeSpec SdeSpec::scalar_linear_drift(double slope, double sigma) {
  SdeSpec s = brownian(1, sigma);
  if (slope != 0.0) {
    s.drift = [slope](double, std::span<const double> x, std::span<double> out) {
      out[0] = slope * x[0];
    };
    s.drift_lipschitz = std::fabs(slope);
  }
  return s;
}

PathBundle simulate_forward(const SdeSpec& sde, const TimeGrid& grid,
                            std::size_t n_paths, std::uint64_t seed, double t0,
                            std::span<const double> x0) {
  if (grid.steps == 0 || !(grid.horizon > 0.0)) {
    throw validation_error("simulate_forward: grid must have horizon > 0 and steps >= 1");
  }
  if (n_paths == 0) throw validation_error("simulate_forward: n_paths must be >= 1");
  if (!x0.empty() && x0.size() != sde.dim) {
    throw validation_error("simulate_forward: x0 dimension mismatch");
  }
  if (t0 < 0.0 || t0 > grid.horizon) {
    throw validation_error("simulate_forward: t0 outside [0, horizon]");
  }

  PathBundle b;
  b.grid = grid;
  b.sde = sde;
  b.seed = seed;
  b.n_paths = n_paths;
  b.dim = sde.dim;
  b.t0 = t0;
  b.x0.assign(sde.dim, 0.0);
  if (!x0.empty()) b.x0.assign(x0.begin(), x0.end());

  const std::size_t M = grid.steps;
  const std::size_t d = sde.dim;
  std::size_t k0 = 0;
  while (k0 < M && grid.node(k0) < t0 - 1e-12 * grid.horizon) ++k0;
  if (std::fabs(grid.node(k0) - t0) > 1e-9 * std::max(1.0, grid.horizon)) {
    throw validation_error("simulate_forward: t0 must coincide with a grid node");
  }
  b.start_index = k0;

  b.dw.resize(n_paths * M * d);
  b.x.resize(n_paths * (M + 1) * d);

  const bool unit_sigma = !sde.sigma;
  par::for_blocks(n_paths, [&](std::size_t, std::size_t begin, std::size_t end) {
    std::vector<double> sig(d * d), bvec(d);
    for (std::size_t i = begin; i < end; ++i) {
      double* xw = b.x.data() + i * (M + 1) * d;
      double* dww = b.dw.data() + i * M * d;
      for (std::size_t j = 0; j < d; ++j) xw[j] = b.x0[j];
      for (std::size_t k = 0; k < M; ++k) {
        const double t = grid.node(k);
        const double dtk = grid.dt(k);
        const double sdt = std::sqrt(dtk);
        for (std::size_t j = 0; j < d; ++j) {
          dww[k * d + j] = sdt * rng::normal(seed, rng::kIncrements, i, k, j);
        }
        const double* xk = xw + k * d;
        double* xn = xw + (k + 1) * d;
        if (k < k0) {
          for (std::size_t j = 0; j < d; ++j) xn[j] = xk[j];
          continue;
        }
        if (sde.drift) {
          sde.drift(t, {xk, d}, bvec);
        } else {
          std::fill(bvec.begin(), bvec.end(), 0.0);
        }
        if (unit_sigma) {
          for (std::size_t j = 0; j < d; ++j) {
            xn[j] = xk[j] + bvec[j] * dtk + dww[k * d + j];
          }
        } else {
          sde.sigma(t, sig);
          for (std::size_t r = 0; r < d; ++r) {
            double acc = xk[r] + bvec[r] * dtk;
            for (std::size_t c = 0; c < d; ++c) acc += sig[r * d + c] * dww[k * d + c];
            xn[r] = acc;
          }
        }
      }
    }
  });
  return b;
}

double WeightMatrix::m(std::size_t i, std::size_t k) const {
  return std::exp(logm(i, k));
}

WeightMatrix girsanov_weights(const PathBundle& paths, const ControlView& control) {
  if (!control.value) throw validation_error("girsanov_weights: empty control");
  if (control.dim != paths.dim) {
    throw validation_error("girsanov_weights: control dimension mismatch");
  }
  const std::size_t M = paths.grid.steps;
  const std::size_t d = paths.dim;
  WeightMatrix w;
  w.n_paths = paths.n_paths;
  w.nodes = M + 1;
  w.start_index = paths.start_index;
  w.log_m.assign(paths.n_paths * (M + 1), 0.0);

  par::for_blocks(paths.n_paths, [&](std::size_t, std::size_t begin, std::size_t end) {
    std::vector<double> q(d);
    for (std::size_t i = begin; i < end; ++i) {
      double acc = 0.0;
      double* row = w.log_m.data() + i * (M + 1);
      row[paths.start_index] = 0.0;
      for (std::size_t k = paths.start_index; k < M; ++k) {
        control.value(i, k, q);
        const double dtk = paths.grid.dt(k);
        double qdw = 0.0, qq = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          if (!std::isfinite(q[j])) {
            throw numeric_error("girsanov_weights: non-finite control value");
          }
          qdw += q[j] * paths.dwv(i, k, j);
          qq += q[j] * q[j];
        }
        acc += qdw - 0.5 * qq * dtk;
        row[k + 1] = acc;
      }
      for (std::size_t k = 0; k < paths.start_index; ++k) row[k] = 0.0;
    }
  });
  return w;
}

ExpMomentReport exp_moment_estimate(const PathBundle& paths, double lambda) {
  if (!(lambda > 0.0)) throw validation_error("exp_moment_estimate: lambda must be > 0");
  const std::size_t M = paths.grid.steps;
  const std::size_t d = paths.dim;
  const double T = paths.grid.horizon;
  const double K = paths.sde.drift_lipschitz;
  const double sig = paths.sde.sigma_bound;

  ExpMomentReport rep;
  rep.lambda = lambda;
  rep.lambda_threshold = 1.0 / (2.0 * std::exp(2.0 * K * T) * sig * sig * T);
  rep.lambda_certified = lambda < rep.lambda_threshold;

  std::vector<double> vals(paths.n_paths);
  par::for_blocks(paths.n_paths, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      double sup2 = 0.0;
      for (std::size_t k = paths.start_index; k <= M; ++k) {
        double s = 0.0;
        const auto xi = paths.state_at(i, k);
        for (std::size_t j = 0; j < d; ++j) s += xi[j] * xi[j];
        sup2 = std::max(sup2, s);
      }
      vals[i] = std::exp(lambda * sup2);
      if (!std::isfinite(vals[i])) {
        throw numeric_error("exp_moment_estimate: overflow in exp(lambda |X|^2)");
      }
    }
  });

  const auto mv = stats::mean_var(paths.n_paths, [&](std::size_t i) { return vals[i]; });
  rep.estimate = mv.mean;
  rep.se = mv.se;
  rep.tail_dominated = stats::tail_dominated(vals);
  return rep;
}

}  // namespace qbsde
