#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace qbsde {

/// Driver g(t, x, y, z) of the backward equation
///   Y_t = xi - int_t^T g(s, X_s, Y_s, Z_s) ds + int_t^T Z_s dW_s.
using GeneratorFn = std::function<double(double t, std::span<const double> x,
                                         double y, std::span<const double> z)>;

/// Nonnegative state-dependent bound, e.g. the upper envelope offset.
using EnvelopeFn = std::function<double(double t, std::span<const double> x)>;

enum class GenFamily {
  PureQuadratic,    // g = (q/2)|z|^2
  EntropicLinearY,  // g = k*y + (q/2)|z|^2
  AffineY,          // g = a*y + b   (no z dependence)
  Custom,           // user supplied callable
};

/// A driver together with its declared growth and regularity constants.
/// The constants are inputs (certified claims), not derived quantities;
/// check_assumptions probes them by sampling.
struct GeneratorSpec {
  GenFamily family = GenFamily::PureQuadratic;

  // family parameters
  double quad_gamma = 1.0;  // quadratic coefficient (PureQuadratic, EntropicLinearY)
  double linear_y = 0.0;    // y coefficient (EntropicLinearY, AffineY)
  double constant = 0.0;    // constant term (AffineY)
  GeneratorFn eval_fn;      // Custom only
  std::size_t z_dim = 0;    // expected dim of z; 0 accepts any

  // declared envelope and regularity constants
  double gamma_bar = 1.0;   // quadratic growth coefficient, > 0
  double beta_bar = 0.0;    // linear-in-y growth slope
  double lip_y = 0.0;       // Lipschitz constant in y
  double mono_beta = 0.0;   // one-sided monotonicity constant
  double lower_r = 0.0;     // slope of the linear lower envelope
  EnvelopeFn alpha_upper;   // offset of the upper envelope; empty = 0
  EnvelopeFn alpha_lower;   // offset of the lower envelope; empty = 0
  std::function<double(double)> phi;  // nondecreasing y-growth; empty = beta_bar*s

  std::string label;

  static GeneratorSpec pure_quadratic(double gamma);
  static GeneratorSpec entropic_linear_y(double gamma, double ky);
  static GeneratorSpec affine_y(double a, double b);
  static GeneratorSpec zero();
  static GeneratorSpec custom(GeneratorFn fn, std::size_t z_dim = 0);

  bool depends_on_y() const;
};

/// Evaluates the driver; rejects non-finite inputs and z-dimension mismatches.
double eval_generator(const GeneratorSpec& g, double t, std::span<const double> x,
                      double y, std::span<const double> z);

double alpha_upper_at(const GeneratorSpec& g, double t, std::span<const double> x);
double alpha_lower_at(const GeneratorSpec& g, double t, std::span<const double> x);
double phi_at(const GeneratorSpec& g, double s);

/// Sampling plan for assumption probes.
struct SamplePlan {
  std::size_t count = 10000;
  double t_min = 0.0, t_max = 1.0;
  double x_radius = 3.0;
  double y_radius = 5.0;
  double z_radius = 5.0;
  std::size_t x_dim = 1;
  std::size_t z_dimension = 1;
  std::uint64_t seed = 1;
};

struct ClauseReport {
  std::string name;
  bool pass = true;
  double worst_violation = 0.0;  // max positive violation over samples
  std::string witness;           // sample realizing the worst violation
};

struct AssumptionReport {
  std::vector<ClauseReport> clauses;
  double lip_y_witness = 0.0;  // largest sampled |dg|/|dy| ratio
  bool all_pass = true;
};

/// Probes monotonicity, growth envelopes, y-Lipschitz continuity and
/// z-convexity at sampled points.  Tolerance 1e-9 absolute per clause.
AssumptionReport check_assumptions(const GeneratorSpec& g, const SamplePlan& plan);

/// Search plan for the inf-convolution minimisation.
struct GridPlan {
  double radius = 0.0;     // 0 = choose from |z|, n and the declared envelope
  int coarse_points = 33;  // odd; tensor grid resolution per dimension
  int golden_iters = 48;   // golden-section steps per coordinate bracket
  int sweeps = 6;          // coordinate-descent passes
};

/// Lipschitz regularisation by inf-convolution:
///   g_n(t,x,y,z) = inf_{p,q} [ g(t,x,p,q) + n|p-y| + n|q-z| ].
/// Two-stage search: coarse tensor grid, then golden-section refinement.
/// Throws when the minimiser is pinned to the search boundary.
double inf_convolution(const GeneratorSpec& g, double n, double t,
                       std::span<const double> x, double y,
                       std::span<const double> z, const GridPlan& plan = {});

/// Wraps g_n as a Custom GeneratorSpec; growth constants are inherited and
/// lip_y tightens to min(n, lip_y) (zero when g has no y dependence).
GeneratorSpec lipschitz_envelope(const GeneratorSpec& g, double n,
                                 const GridPlan& plan = {});

}  // namespace qbsde
