#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace qbsde {

/// Uniform grid 0 = t_0 < ... < t_M = horizon.
struct TimeGrid {
  double horizon = 1.0;
  std::size_t steps = 1;

  double node(std::size_t k) const {
    return (k >= steps) ? horizon : static_cast<double>(k) * (horizon / static_cast<double>(steps));
  }
  double dt(std::size_t k) const { return node(k + 1) - node(k); }
};

using DriftFn = std::function<void(double t, std::span<const double> x, std::span<double> out)>;
using SigmaFn = std::function<void(double t, std::span<double> out)>;  // row-major dim x dim

/// Forward diffusion dX = b(t,X) dt + sigma(t) dW with declared regularity
/// constants (Lipschitz slope of b, sup-norm bound of sigma).
struct SdeSpec {
  std::size_t dim = 1;
  DriftFn drift;   // empty = zero drift
  SigmaFn sigma;   // empty = identity
  double drift_lipschitz = 0.0;
  double sigma_bound = 1.0;

  bool drift_is_zero() const { return !drift; }

  static SdeSpec brownian(std::size_t dim = 1, double sigma = 1.0);
  static SdeSpec scalar_linear_drift(double slope, double sigma = 1.0);
};

/// Euler paths of the forward diffusion plus the Brownian increments that
/// drove them.  The state is frozen at x0 on nodes before start_index.
struct PathBundle {
  TimeGrid grid;
  SdeSpec sde;
  std::uint64_t seed = 0;
  std::size_t n_paths = 0;
  std::size_t dim = 1;
  std::size_t start_index = 0;
  double t0 = 0.0;
  std::vector<double> x0;
  std::vector<double> dw;  // [path][step][coord]
  std::vector<double> x;   // [path][node][coord]

  double dwv(std::size_t i, std::size_t k, std::size_t j) const {
    return dw[(i * grid.steps + k) * dim + j];
  }
  std::span<const double> increments_at(std::size_t i, std::size_t k) const {
    return {dw.data() + (i * grid.steps + k) * dim, dim};
  }
  std::span<const double> state_at(std::size_t i, std::size_t k) const {
    return {x.data() + (i * (grid.steps + 1) + k) * dim, dim};
  }
};

/// Simulates n_paths Euler paths started from (t0, x0); t0 must sit on the
/// grid.  Increments come from a counter generator, so the bundle is a pure
/// function of (spec, grid, n_paths, seed) independent of worker count.
PathBundle simulate_forward(const SdeSpec& sde, const TimeGrid& grid,
                            std::size_t n_paths, std::uint64_t seed,
                            double t0 = 0.0, std::span<const double> x0 = {});

/// Minimal adapted-control interface used by the weight computation; the
/// richer ControlProcess in control.hpp adapts to it.
struct ControlView {
  std::size_t dim = 1;
  std::function<void(std::size_t path, std::size_t step, std::span<double> out)> value;
};

/// Stochastic exponential of int q dW along each path:
///   log M_{k+1} = log M_k + q_k . dW_k - |q_k|^2 dt_k / 2,  M at start = 1.
struct WeightMatrix {
  std::size_t n_paths = 0;
  std::size_t nodes = 0;
  std::size_t start_index = 0;
  std::vector<double> log_m;  // [path][node]

  double logm(std::size_t i, std::size_t k) const { return log_m[i * nodes + k]; }
  double m(std::size_t i, std::size_t k) const;
};

WeightMatrix girsanov_weights(const PathBundle& paths, const ControlView& control);

struct ExpMomentReport {
  double lambda = 0.0;
  double estimate = 0.0;
  double se = 0.0;
  bool tail_dominated = false;
  double lambda_threshold = 0.0;   // largest certified lambda for this bundle
  bool lambda_certified = false;   // lambda below the threshold
};

/// Estimates E[ exp( lambda * sup_k |X_k|^2 ) ] with a tail-domination flag
/// and the certified-lambda threshold 1 / (2 e^{2KT} |sigma|^2 T).
ExpMomentReport exp_moment_estimate(const PathBundle& paths, double lambda);

}  // namespace qbsde
