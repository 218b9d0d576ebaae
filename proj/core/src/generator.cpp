#include "qbsde/generator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "qbsde/errors.hpp"
#include "qbsde/rng.hpp"

namespace qbsde {

namespace {

double sq_norm(std::span<const double> v) {
  double s = 0.0;
  for (double c : v) s += c * c;
  return s;
}

double norm2(std::span<const double> v) { return std::sqrt(sq_norm(v)); }

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw validation_error(std::string("eval_generator: non-finite ") + what);
  }
}

}  // namespace

GeneratorSpec GeneratorSpec::pure_quadratic(double gamma) {
  if (!(gamma > 0.0)) throw validation_error("pure_quadratic: gamma must be > 0");
  GeneratorSpec g;
  g.family = GenFamily::PureQuadratic;
  g.quad_gamma = gamma;
  g.gamma_bar = gamma;
  g.label = "pure-quadratic";
  return g;
}

GeneratorSpec GeneratorSpec::entropic_linear_y(double gamma, double ky) {
  if (!(gamma > 0.0)) throw validation_error("entropic_linear_y: gamma must be > 0");
  GeneratorSpec g;
  g.family = GenFamily::EntropicLinearY;
  g.quad_gamma = gamma;
  g.linear_y = ky;
  g.gamma_bar = gamma;
  g.beta_bar = std::fabs(ky);
  g.lip_y = std::fabs(ky);
  g.mono_beta = std::max(0.0, -ky);
  g.lower_r = std::fabs(ky);
  g.label = "entropic-linear-y";
  return g;
}

GeneratorSpec GeneratorSpec::affine_y(double a, double b) {
  GeneratorSpec g;
  g.family = GenFamily::AffineY;
  g.linear_y = a;
  g.constant = b;
  g.gamma_bar = 1.0;
  g.beta_bar = std::fabs(a);
  g.lip_y = std::fabs(a);
  g.mono_beta = std::max(0.0, -a);
  g.lower_r = std::fabs(a);
  if (b > 0.0) {
    g.alpha_upper = [b](double, std::span<const double>) { return b; };
  } else if (b < 0.0) {
    g.alpha_lower = [b](double, std::span<const double>) { return -b; };
  }
  g.label = "affine-y";
  return g;
}

GeneratorSpec GeneratorSpec::zero() {
  GeneratorSpec g = affine_y(0.0, 0.0);
  g.label = "zero";
  return g;
}

GeneratorSpec GeneratorSpec::custom(GeneratorFn fn, std::size_t z_dim) {
  if (!fn) throw validation_error("custom generator requires a callable");
  GeneratorSpec g;
  g.family = GenFamily::Custom;
  g.eval_fn = std::move(fn);
  g.z_dim = z_dim;
  g.label = "custom";
  return g;
}

bool GeneratorSpec::depends_on_y() const {
  switch (family) {
    case GenFamily::PureQuadratic: return false;
    case GenFamily::EntropicLinearY:
    case GenFamily::AffineY: return linear_y != 0.0;
    case GenFamily::Custom: return lip_y > 0.0;
  }
  return true;
}

double eval_generator(const GeneratorSpec& g, double t, std::span<const double> x,
                      double y, std::span<const double> z) {
  require_finite(t, "t");
  require_finite(y, "y");
  for (double c : x) require_finite(c, "x");
  for (double c : z) require_finite(c, "z");
  if (g.z_dim != 0 && z.size() != g.z_dim) {
    throw validation_error("eval_generator: z dimension mismatch");
  }
  switch (g.family) {
    case GenFamily::PureQuadratic:
      return 0.5 * g.quad_gamma * sq_norm(z);
    case GenFamily::EntropicLinearY:
      return g.linear_y * y + 0.5 * g.quad_gamma * sq_norm(z);
    case GenFamily::AffineY:
      return g.linear_y * y + g.constant;
    case GenFamily::Custom:
      return g.eval_fn(t, x, y, z);
  }
  throw validation_error("eval_generator: unknown family");
}

double alpha_upper_at(const GeneratorSpec& g, double t, std::span<const double> x) {
  return g.alpha_upper ? g.alpha_upper(t, x) : 0.0;
}

double alpha_lower_at(const GeneratorSpec& g, double t, std::span<const double> x) {
  return g.alpha_lower ? g.alpha_lower(t, x) : 0.0;
}

double phi_at(const GeneratorSpec& g, double s) {
  return g.phi ? g.phi(s) : g.beta_bar * s;
}

namespace {

struct Sample {
  double t;
  std::vector<double> x;
  double y, y2;
  std::vector<double> z, z2;
};

Sample draw_sample(const SamplePlan& plan, std::uint64_t i) {
  Sample s;
  const auto u = [&](std::uint64_t slot, double lo, double hi) {
    return rng::uniform(plan.seed, rng::kSampling, i, slot, 0, lo, hi);
  };
  s.t = u(0, plan.t_min, plan.t_max);
  s.x.resize(plan.x_dim);
  for (std::size_t j = 0; j < plan.x_dim; ++j) {
    s.x[j] = u(1 + j, -plan.x_radius, plan.x_radius);
  }
  s.y = u(100, -plan.y_radius, plan.y_radius);
  s.y2 = u(101, -plan.y_radius, plan.y_radius);
  s.z.resize(plan.z_dimension);
  s.z2.resize(plan.z_dimension);
  for (std::size_t j = 0; j < plan.z_dimension; ++j) {
    s.z[j] = u(200 + j, -plan.z_radius, plan.z_radius);
    s.z2[j] = u(300 + j, -plan.z_radius, plan.z_radius);
  }
  return s;
}

std::string witness_string(const Sample& s) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "t=%.6g x0=%.6g y=%.6g y2=%.6g z0=%.6g z2_0=%.6g",
                s.t, s.x.empty() ? 0.0 : s.x[0], s.y, s.y2,
                s.z.empty() ? 0.0 : s.z[0], s.z2.empty() ? 0.0 : s.z2[0]);
  return buf;
}

}  // namespace

AssumptionReport check_assumptions(const GeneratorSpec& g, const SamplePlan& plan) {
  constexpr double kTol = 1e-9;
  AssumptionReport rep;
  rep.clauses.resize(6);
  rep.clauses[0].name = "monotonicity-y";
  rep.clauses[1].name = "lipschitz-y";
  rep.clauses[2].name = "upper-envelope-existence";
  rep.clauses[3].name = "upper-envelope-uniqueness";
  rep.clauses[4].name = "lower-envelope";
  rep.clauses[5].name = "convexity-z";

  auto update = [&](ClauseReport& c, double violation, const Sample& s) {
    if (violation > c.worst_violation) {
      c.worst_violation = violation;
      c.witness = witness_string(s);
    }
    if (violation > kTol) c.pass = false;
  };

  std::vector<double> zmid(plan.z_dimension);
  for (std::uint64_t i = 0; i < plan.count; ++i) {
    const Sample s = draw_sample(plan, i);
    const double gy = eval_generator(g, s.t, s.x, s.y, s.z);
    const double g0 = eval_generator(g, s.t, s.x, 0.0, s.z);
    const double gy2 = eval_generator(g, s.t, s.x, s.y2, s.z);
    const double au = alpha_upper_at(g, s.t, s.x);
    const double al = alpha_lower_at(g, s.t, s.x);
    const double zn = norm2(s.z);

    update(rep.clauses[0], s.y * (g0 - gy) - g.mono_beta * s.y * s.y, s);

    const double dy = std::fabs(s.y - s.y2);
    update(rep.clauses[1], std::fabs(gy - gy2) - g.lip_y * dy, s);
    if (dy > 1e-9) {
      rep.lip_y_witness = std::max(rep.lip_y_witness, std::fabs(gy - gy2) / dy);
    }

    const double quad = 0.5 * g.gamma_bar * zn * zn;
    update(rep.clauses[2], gy - (au + phi_at(g, std::fabs(s.y)) + quad), s);
    update(rep.clauses[3], gy - (au + g.beta_bar * std::fabs(s.y) + quad), s);
    update(rep.clauses[4], (-al - g.lower_r * (std::fabs(s.y) + zn)) - gy, s);

    for (std::size_t j = 0; j < plan.z_dimension; ++j) zmid[j] = 0.5 * (s.z[j] + s.z2[j]);
    const double gmid = eval_generator(g, s.t, s.x, s.y, zmid);
    const double gz2 = eval_generator(g, s.t, s.x, s.y, s.z2);
    update(rep.clauses[5], gmid - 0.5 * (gy + gz2), s);
  }

  for (const auto& c : rep.clauses) rep.all_pass = rep.all_pass && c.pass;
  return rep;
}

namespace {

// Closed forms of the inf-convolution for the analytic families.  The generic
// search reproduces these within its grid tolerance; the closed forms keep
// ladder solves cheap.
double quad_inf_conv(double gamma, double n, std::span<const double> z) {
  const double zn = norm2(z);
  if (zn <= n / gamma) return 0.5 * gamma * zn * zn;
  return n * zn - 0.5 * n * n / gamma;
}

struct SearchSpace {
  std::vector<double> center;  // search coordinates: optional p, then q
  std::vector<double> radius;
  bool has_p = false;
};

double search_objective(const GeneratorSpec& g, double n, double t,
                        std::span<const double> x, double y,
                        std::span<const double> z, bool has_p,
                        std::span<const double> point, std::vector<double>& qbuf) {
  const double p = has_p ? point[0] : y;
  const std::size_t off = has_p ? 1 : 0;
  qbuf.assign(point.begin() + off, point.end());
  double dq = 0.0;
  for (std::size_t j = 0; j < qbuf.size(); ++j) {
    const double d = qbuf[j] - z[j];
    dq += d * d;
  }
  return eval_generator(g, t, x, p, qbuf) + n * std::fabs(p - y) + n * std::sqrt(dq);
}

}  // namespace

double inf_convolution(const GeneratorSpec& g, double n, double t,
                       std::span<const double> x, double y,
                       std::span<const double> z, const GridPlan& plan) {
  if (!(n > 0.0)) throw validation_error("inf_convolution: n must be > 0");

  switch (g.family) {
    case GenFamily::PureQuadratic:
      return quad_inf_conv(g.quad_gamma, n, z);
    case GenFamily::EntropicLinearY: {
      if (std::fabs(g.linear_y) > n) {
        throw numeric_error("inf_convolution: driver slope in y exceeds n; infimum is -inf");
      }
      return g.linear_y * y + quad_inf_conv(g.quad_gamma, n, z);
    }
    case GenFamily::AffineY: {
      if (std::fabs(g.linear_y) > n) {
        throw numeric_error("inf_convolution: driver slope in y exceeds n; infimum is -inf");
      }
      return g.linear_y * y + g.constant;
    }
    case GenFamily::Custom: break;
  }

  SearchSpace sp;
  sp.has_p = g.depends_on_y();
  if (sp.has_p) {
    sp.center.push_back(y);
    sp.radius.push_back(plan.radius > 0.0 ? plan.radius
                                          : std::max(10.0, 3.0 * std::fabs(y)));
  }
  const double qr = plan.radius > 0.0
                        ? plan.radius
                        : std::max(10.0, 2.0 * norm2(z) + 2.0 * n / std::max(g.gamma_bar, 0.2));
  for (double zj : z) {
    sp.center.push_back(zj);
    sp.radius.push_back(qr);
  }
  const std::size_t dims = sp.center.size();
  if (dims == 0) {
    std::vector<double> q;
    return eval_generator(g, t, x, y, {});
  }
  if (dims > 3) {
    throw validation_error("inf_convolution: search supports at most 3 dimensions");
  }

  std::vector<double> qbuf;
  auto F = [&](std::span<const double> pt) {
    return search_objective(g, n, t, x, y, z, sp.has_p, pt, qbuf);
  };

  // Stage 1: coarse tensor grid, center point included exactly.
  const int m = std::max(3, plan.coarse_points | 1);
  std::vector<double> pt(dims), best_pt = sp.center;
  double best = F(best_pt);
  std::vector<int> idx(dims, 0);
  const std::size_t total = [&] {
    std::size_t tt = 1;
    for (std::size_t k = 0; k < dims; ++k) tt *= static_cast<std::size_t>(m);
    return tt;
  }();
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    for (std::size_t k = 0; k < dims; ++k) {
      idx[k] = static_cast<int>(rem % m);
      rem /= m;
      pt[k] = sp.center[k] + sp.radius[k] * (2.0 * idx[k] / (m - 1) - 1.0);
    }
    const double v = F(pt);
    if (v < best) {
      best = v;
      best_pt = pt;
    }
  }

  // Stage 2: golden-section refinement, one coordinate at a time.
  constexpr double kInvPhi = 0.6180339887498949;
  double h0 = 2.0 / (m - 1);  // coarse spacing in radius units
  for (int sweep = 0; sweep < plan.sweeps; ++sweep) {
    for (std::size_t k = 0; k < dims; ++k) {
      const double h = sp.radius[k] * h0;
      double a = best_pt[k] - h, b = best_pt[k] + h;
      double c = b - kInvPhi * (b - a);
      double d = a + kInvPhi * (b - a);
      pt = best_pt;
      pt[k] = c;
      double fc = F(pt);
      pt[k] = d;
      double fd = F(pt);
      for (int it = 0; it < plan.golden_iters; ++it) {
        if (fc < fd) {
          b = d; d = c; fd = fc;
          c = b - kInvPhi * (b - a);
          pt[k] = c;
          fc = F(pt);
        } else {
          a = c; c = d; fc = fd;
          d = a + kInvPhi * (b - a);
          pt[k] = d;
          fd = F(pt);
        }
      }
      const double cand = 0.5 * (a + b);
      pt[k] = cand;
      const double fv = F(pt);
      if (fv < best) {
        best = fv;
        best_pt[k] = cand;
      }
    }
    h0 *= 0.5;
  }

  for (std::size_t k = 0; k < dims; ++k) {
    if (std::fabs(best_pt[k] - sp.center[k]) > 0.98 * sp.radius[k]) {
      throw numeric_error("inf_convolution: minimiser on search boundary; enlarge radius");
    }
  }
  return best;
}

GeneratorSpec lipschitz_envelope(const GeneratorSpec& g, double n, const GridPlan& plan) {
  if (!(n > 0.0)) throw validation_error("lipschitz_envelope: n must be > 0");
  GeneratorSpec base = g;
  GeneratorSpec out = GeneratorSpec::custom(
      [base, n, plan](double t, std::span<const double> x, double y,
                      std::span<const double> z) {
        return inf_convolution(base, n, t, x, y, z, plan);
      },
      g.z_dim);
  out.gamma_bar = g.gamma_bar;
  out.beta_bar = g.beta_bar;
  out.lip_y = g.depends_on_y() ? std::min(n, g.lip_y) : 0.0;
  out.mono_beta = g.mono_beta;
  out.lower_r = g.lower_r;
  out.alpha_upper = g.alpha_upper;
  out.alpha_lower = g.alpha_lower;
  out.phi = g.phi;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "+lip(%g)", n);
  out.label = g.label + buf;
  return out;
}

}  // namespace qbsde
