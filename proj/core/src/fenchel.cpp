#include "qbsde/fenchel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qbsde/errors.hpp"
#include "qbsde/rng.hpp"

namespace qbsde {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double sq_norm(std::span<const double> v) { return dot(v, v); }

// Maximises fn over the cube [-R, R]^d around `center` by coarse tensor grid
// plus golden-section coordinate ascent.
template <typename Fn>
double maximize_box(const Fn& fn, std::span<const double> center, double R,
                    const DualSearchPlan& plan, std::vector<double>& arg_out) {
  const std::size_t dims = center.size();
  if (dims > 3) throw validation_error("dual search supports at most 3 dimensions");
  const int m = std::max(3, plan.coarse_points | 1);

  std::vector<double> pt(dims), best_pt(center.begin(), center.end());
  double best = fn(best_pt);
  std::size_t total = 1;
  for (std::size_t k = 0; k < dims; ++k) total *= static_cast<std::size_t>(m);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    for (std::size_t k = 0; k < dims; ++k) {
      const int j = static_cast<int>(rem % m);
      rem /= m;
      pt[k] = center[k] + R * (2.0 * j / (m - 1) - 1.0);
    }
    const double v = fn(pt);
    if (v > best) {
      best = v;
      best_pt = pt;
    }
  }

  constexpr double kInvPhi = 0.6180339887498949;
  double h0 = 2.0 / (m - 1);
  for (int sweep = 0; sweep < plan.sweeps; ++sweep) {
    for (std::size_t k = 0; k < dims; ++k) {
      const double h = R * h0;
      double a = best_pt[k] - h, b = best_pt[k] + h;
      double c = b - kInvPhi * (b - a);
      double d = a + kInvPhi * (b - a);
      pt = best_pt;
      pt[k] = c;
      double fc = fn(pt);
      pt[k] = d;
      double fd = fn(pt);
      for (int it = 0; it < plan.golden_iters; ++it) {
        if (fc > fd) {
          b = d; d = c; fd = fc;
          c = b - kInvPhi * (b - a);
          pt[k] = c;
          fc = fn(pt);
        } else {
          a = c; c = d; fc = fd;
          d = a + kInvPhi * (b - a);
          pt[k] = d;
          fd = fn(pt);
        }
      }
      pt[k] = 0.5 * (a + b);
      const double fv = fn(pt);
      if (fv > best) {
        best = fv;
        best_pt[k] = pt[k];
      }
    }
    h0 *= 0.5;
  }
  arg_out = best_pt;
  return best;
}

ExtendedReal numeric_transform(const DualGeneratorView& view, double t,
                               std::span<const double> x, double y,
                               std::span<const double> q) {
  const std::size_t d = q.size();
  std::vector<double> center(d, 0.0), arg;
  auto h = [&](std::span<const double> zv) {
    return dot(zv, q) - eval_generator(view.gen, t, x, y, zv);
  };

  double prev = -std::numeric_limits<double>::infinity();
  double cur = -std::numeric_limits<double>::infinity();
  int settled = 0;
  for (int k = 0; k <= view.plan.max_radius_pow; ++k) {
    const double R = std::ldexp(1.0, k);
    const double vk = maximize_box(h, center, R, view.plan, arg);
    prev = cur;
    cur = std::max(cur, vk);
    if (k > 0) {
      if (cur - prev <= view.plan.settle_tol) {
        if (++settled >= 2) return ExtendedReal::of(cur);
      } else {
        settled = 0;
      }
    }
  }
  if (cur - prev > view.plan.growth_tol) return ExtendedReal::infinity();
  return ExtendedReal::of(cur);
}

}  // namespace

ExtendedReal fenchel_transform(const DualGeneratorView& view, double t,
                               std::span<const double> x, double y,
                               std::span<const double> q) {
  const GeneratorSpec& g = view.gen;
  if (g.z_dim != 0 && q.size() != g.z_dim) {
    throw validation_error("fenchel_transform: q dimension mismatch");
  }
  for (double c : q) {
    if (!std::isfinite(c)) throw validation_error("fenchel_transform: non-finite q");
  }
  if (view.closed_form) {
    switch (g.family) {
      case GenFamily::PureQuadratic:
        return ExtendedReal::of(0.5 * sq_norm(q) / g.quad_gamma);
      case GenFamily::EntropicLinearY:
        return ExtendedReal::of(-g.linear_y * y + 0.5 * sq_norm(q) / g.quad_gamma);
      case GenFamily::AffineY: {
        for (double c : q) {
          if (c != 0.0) return ExtendedReal::infinity();
        }
        return ExtendedReal::of(-(g.linear_y * y + g.constant));
      }
      case GenFamily::Custom: break;
    }
  }
  return numeric_transform(view, t, x, y, q);
}

std::vector<double> subdifferential_select(const DualGeneratorView& view, double t,
                                           std::span<const double> x, double y,
                                           std::span<const double> z) {
  const GeneratorSpec& g = view.gen;
  const std::size_t d = z.size();
  std::vector<double> q(d, 0.0);
  if (view.closed_form && g.family != GenFamily::Custom) {
    switch (g.family) {
      case GenFamily::PureQuadratic:
      case GenFamily::EntropicLinearY:
        for (std::size_t j = 0; j < d; ++j) q[j] = g.quad_gamma * z[j];
        return q;
      case GenFamily::AffineY:
        return q;  // zero
      default: break;
    }
  }

  // Central differences; at a kink this averages the one-sided slopes.
  std::vector<double> zp(z.begin(), z.end()), zm(z.begin(), z.end());
  for (std::size_t j = 0; j < d; ++j) {
    const double h = view.plan.fd_step * (1.0 + std::fabs(z[j]));
    zp[j] = z[j] + h;
    zm[j] = z[j] - h;
    const double gp = eval_generator(g, t, x, y, zp);
    const double gm = eval_generator(g, t, x, y, zm);
    q[j] = (gp - gm) / (2.0 * h);
    zp[j] = z[j];
    zm[j] = z[j];
  }

  // Certificate: subgradient inequality at probe points.
  const double g0 = eval_generator(g, t, x, y, z);
  const double scale = 1.0 + std::sqrt(sq_norm(z));
  std::vector<double> probe(d);
  const double steps[] = {1e-3, 1e-1, 1.0, 3.0};
  auto check = [&](std::span<const double> dir) {
    for (double s : steps) {
      double shift = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        probe[j] = z[j] + s * scale * dir[j];
        shift += s * scale * dir[j] * q[j];
      }
      const double lhs = eval_generator(g, t, x, y, probe) - g0 - shift;
      if (lhs < -view.plan.certificate_tol) {
        throw certification_error(
            "subdifferential_select: subgradient certificate failed "
            "(driver not convex in z at the query point?)");
      }
    }
  };
  std::vector<double> dir(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    dir[j] = 1.0;
    check(dir);
    dir[j] = -1.0;
    check(dir);
    dir[j] = 0.0;
  }
  for (std::uint64_t r = 0; r < 8 && d > 1; ++r) {
    double nn = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      dir[j] = rng::normal(0x5eed, rng::kSampling, r, j, 7);
      nn += dir[j] * dir[j];
    }
    if (nn > 0) {
      for (std::size_t j = 0; j < d; ++j) dir[j] /= std::sqrt(nn);
      check(dir);
    }
  }
  return q;
}

double fenchel_young_gap(const DualGeneratorView& view, double t,
                         std::span<const double> x, double y,
                         std::span<const double> z, std::span<const double> q) {
  const ExtendedReal f = fenchel_transform(view, t, x, y, q);
  if (!f.finite) {
    throw numeric_error("fenchel_young_gap: transform is infinite at q");
  }
  return eval_generator(view.gen, t, x, y, z) + f.value - dot(z, q);
}

DualSuiteReport dual_invariant_suite(const DualGeneratorView& view,
                                     std::size_t draws, std::uint64_t seed,
                                     const SamplePlan& ranges) {
  DualSuiteReport rep;
  rep.draws = draws;
  rep.min_gap = std::numeric_limits<double>::infinity();

  const std::size_t d = std::max<std::size_t>(1, ranges.z_dimension);
  std::vector<double> x(ranges.x_dim), z(d), q(d), q2(d), qmid(d);

  for (std::uint64_t i = 0; i < draws; ++i) {
    const auto u = [&](std::uint64_t slot, double lo, double hi) {
      return rng::uniform(seed, rng::kSampling, i, slot, 1, lo, hi);
    };
    const double t = u(0, ranges.t_min, ranges.t_max);
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = u(1 + j, -ranges.x_radius, ranges.x_radius);
    const double y = u(100, -ranges.y_radius, ranges.y_radius);
    const double y2 = u(101, -ranges.y_radius, ranges.y_radius);
    for (std::size_t j = 0; j < d; ++j) {
      z[j] = u(200 + j, -ranges.z_radius, ranges.z_radius);
      q2[j] = u(300 + j, -ranges.z_radius, ranges.z_radius);
    }
    // half the draws probe q on the subdifferential so that drivers with a
    // small conjugate domain still get finite coverage
    if (i % 2 == 0) {
      q = subdifferential_select(view, t, x, y, z);
    } else {
      for (std::size_t j = 0; j < d; ++j) q[j] = u(400 + j, -ranges.z_radius, ranges.z_radius);
    }

    const ExtendedReal f = fenchel_transform(view, t, x, y, q);
    if (!f.finite) {
      ++rep.infinite_samples;
    } else {
      ++rep.finite_samples;
      const double gap = eval_generator(view.gen, t, x, y, z) + f.value - dot(z, q);
      rep.min_gap = std::min(rep.min_gap, gap);

      const double au = alpha_upper_at(view.gen, t, x);
      const double coer = (-au - view.gen.beta_bar * std::fabs(y) +
                           0.5 * sq_norm(q) / view.gen.gamma_bar) -
                          f.value;
      rep.max_coercivity_violation = std::max(rep.max_coercivity_violation, coer);

      const ExtendedReal fy2 = fenchel_transform(view, t, x, y2, q);
      if (fy2.finite) {
        const double lip = std::fabs(f.value - fy2.value) -
                           view.gen.lip_y * std::fabs(y - y2);
        rep.max_lipschitz_violation = std::max(rep.max_lipschitz_violation, lip);
      }

      const ExtendedReal f2 = fenchel_transform(view, t, x, y, q2);
      if (f2.finite) {
        for (std::size_t j = 0; j < d; ++j) qmid[j] = 0.5 * (q[j] + q2[j]);
        const ExtendedReal fm = fenchel_transform(view, t, x, y, qmid);
        // convexity: f(mid) <= (f(q)+f(q2))/2; infinite midpoints cannot occur
        // on the segment between finite points for a closed convex f
        const double viol = (fm.finite ? fm.value : std::numeric_limits<double>::infinity()) -
                            0.5 * (f.value + f2.value);
        rep.max_convexity_violation = std::max(rep.max_convexity_violation, viol);
      }
    }

    const auto qs = subdifferential_select(view, t, x, y, z);
    const double tight = fenchel_young_gap(view, t, x, y, z, qs);
    rep.max_subdiff_gap = std::max(rep.max_subdiff_gap, std::fabs(tight));
  }

  if (rep.finite_samples == 0) rep.min_gap = 0.0;
  rep.all_pass = rep.min_gap >= -1e-9 && rep.max_convexity_violation <= 1e-9 &&
                 rep.max_lipschitz_violation <= 1e-9 &&
                 rep.max_coercivity_violation <= 1e-9 && rep.max_subdiff_gap <= 1e-6;
  return rep;
}

}  // namespace qbsde
