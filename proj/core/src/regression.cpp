#include "qbsde/regression.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "qbsde/errors.hpp"
#include "qbsde/parallel.hpp"

namespace qbsde {

namespace {

void gen_powers(std::size_t dim, int degree, std::vector<int>& cur, int used,
                std::size_t coord, std::vector<int>& out) {
  if (coord == dim) {
    out.insert(out.end(), cur.begin(), cur.end());
    return;
  }
  for (int e = 0; e + used <= degree; ++e) {
    cur[coord] = e;
    gen_powers(dim, degree, cur, used + e, coord + 1, out);
  }
  cur[coord] = 0;
}

// exponent tuples ordered by total degree, then lexicographically
std::vector<int> make_powers(std::size_t dim, int degree) {
  std::vector<int> all;
  std::vector<int> cur(dim, 0);
  gen_powers(dim, degree, cur, 0, 0, all);
  const std::size_t nb = all.size() / dim;
  std::vector<std::size_t> order(nb);
  for (std::size_t b = 0; b < nb; ++b) order[b] = b;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    int da = 0, db = 0;
    for (std::size_t j = 0; j < dim; ++j) {
      da += all[a * dim + j];
      db += all[b * dim + j];
    }
    return da < db;
  });
  std::vector<int> sorted;
  sorted.reserve(all.size());
  for (std::size_t b : order) {
    for (std::size_t j = 0; j < dim; ++j) sorted.push_back(all[b * dim + j]);
  }
  return sorted;
}

}  // namespace

std::size_t polynomial_basis_size(int degree, std::size_t dim) {
  // C(dim + degree, degree)
  std::size_t num = 1, den = 1;
  for (int i = 1; i <= degree; ++i) {
    num *= dim + static_cast<std::size_t>(i);
    den *= static_cast<std::size_t>(i);
  }
  return num / den;
}

void PolyFit::basis_row(std::span<const double> x, std::span<double> out) const {
  const std::size_t nb = basis_size();
  // per-coordinate power tables of the standardised input
  double tab[8][16];  // dim <= 8, degree <= 15
  for (std::size_t j = 0; j < dim; ++j) {
    double xs = (x[j] - mean[j]) / scale[j];
    // saturating the basis in the sample tails keeps high-degree monomials
    // from amplifying coefficient noise where the fit has no support
    if (clip > 0.0) xs = std::clamp(xs, -clip, clip);
    tab[j][0] = 1.0;
    for (int p = 1; p <= degree; ++p) tab[j][p] = tab[j][p - 1] * xs;
  }
  for (std::size_t b = 0; b < nb; ++b) {
    double v = 1.0;
    for (std::size_t j = 0; j < dim; ++j) v *= tab[j][powers[b * dim + j]];
    out[b] = v;
  }
}

double PolyFit::eval(std::size_t target, std::span<const double> x) const {
  double row[128];
  const std::size_t nb = basis_size();
  basis_row(x, {row, nb});
  const auto& c = coef[target];
  double s = 0.0;
  for (std::size_t b = 0; b < nb; ++b) s += c[b] * row[b];
  return s;
}

PolyFit fit_polynomial(std::size_t n, const StateView& states,
                       std::span<const double* const> targets,
                       const double* weights, const BasisPlan& plan,
                       double ridge) {
  if (n == 0) throw validation_error("fit_polynomial: empty sample");
  if (targets.empty()) throw validation_error("fit_polynomial: no targets");
  if (plan.degree < 0 || plan.degree > 15) {
    throw validation_error("fit_polynomial: degree must be in [0,15]");
  }
  const std::size_t d = states.dim;
  if (d == 0 || d > 8) throw validation_error("fit_polynomial: dim must be in [1,8]");

  PolyFit fit;
  fit.degree = plan.degree;
  fit.dim = d;
  fit.clip = plan.clip;
  fit.powers = make_powers(d, plan.degree);
  const std::size_t B = fit.basis_size();
  if (B > 128) throw validation_error("fit_polynomial: basis too large");
  const std::size_t T = targets.size();

  // Standardisation: blocked mean and variance per coordinate.
  const std::size_t nb = par::block_count(n);
  std::vector<double> bsum(nb * d, 0.0), bsq(nb * d, 0.0);
  par::for_blocks(n, [&](std::size_t blk, std::size_t begin, std::size_t end) {
    double* s = bsum.data() + blk * d;
    double* s2 = bsq.data() + blk * d;
    for (std::size_t i = begin; i < end; ++i) {
      const double* xi = states.row(i);
      for (std::size_t j = 0; j < d; ++j) {
        s[j] += xi[j];
        s2[j] += xi[j] * xi[j];
      }
    }
  });
  fit.mean.assign(d, 0.0);
  fit.scale.assign(d, 1.0);
  for (std::size_t j = 0; j < d; ++j) {
    double s = 0.0, s2 = 0.0;
    for (std::size_t blk = 0; blk < nb; ++blk) {
      s += bsum[blk * d + j];
      s2 += bsq[blk * d + j];
    }
    const double mu = s / static_cast<double>(n);
    const double var = std::max(0.0, s2 / static_cast<double>(n) - mu * mu);
    fit.mean[j] = mu;
    const double sd = std::sqrt(var);
    fit.scale[j] = (sd > 1e-12 * (1.0 + std::fabs(mu))) ? sd : 1.0;
  }

  // Blocked Gram matrix and right-hand sides, combined in block order.
  const std::size_t gsz = B * B, rsz = B * T;
  std::vector<double> bg(nb * gsz, 0.0), br(nb * rsz, 0.0);
  par::for_blocks(n, [&](std::size_t blk, std::size_t begin, std::size_t end) {
    double* G = bg.data() + blk * gsz;
    double* R = br.data() + blk * rsz;
    std::vector<double> phi(B);
    for (std::size_t i = begin; i < end; ++i) {
      fit.basis_row({states.row(i), d}, phi);
      const double w = weights ? weights[i] : 1.0;
      for (std::size_t a = 0; a < B; ++a) {
        const double wa = w * phi[a];
        for (std::size_t b = a; b < B; ++b) G[a * B + b] += wa * phi[b];
        for (std::size_t tt = 0; tt < T; ++tt) R[a * T + tt] += wa * targets[tt][i];
      }
    }
  });
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(B, B);
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(B, T);
  for (std::size_t blk = 0; blk < nb; ++blk) {
    const double* Gb = bg.data() + blk * gsz;
    const double* Rb = br.data() + blk * rsz;
    for (std::size_t a = 0; a < B; ++a) {
      for (std::size_t b = a; b < B; ++b) G(a, b) += Gb[a * B + b];
      for (std::size_t tt = 0; tt < T; ++tt) R(a, tt) += Rb[a * T + tt];
    }
  }
  for (std::size_t a = 0; a < B; ++a) {
    for (std::size_t b = 0; b < a; ++b) G(a, b) = G(b, a);
  }

  const double lambda = ridge * std::max(G.trace() / static_cast<double>(B), 1e-300);
  for (std::size_t a = 0; a < B; ++a) G(a, a) += lambda;

  Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
  if (ldlt.info() != Eigen::Success) {
    throw numeric_error("fit_polynomial: design matrix rank-deficient");
  }
  Eigen::MatrixXd C = ldlt.solve(R);
  if (!C.allFinite() || C.cwiseAbs().maxCoeff() > 1e12) {
    throw numeric_error("fit_polynomial: design matrix rank-deficient");
  }

  fit.coef.resize(T);
  for (std::size_t tt = 0; tt < T; ++tt) {
    fit.coef[tt].resize(B);
    for (std::size_t b = 0; b < B; ++b) fit.coef[tt][b] = C(b, tt);
  }

  // Weighted RMSE per target (diagnostic; blocked and order-stable).
  std::vector<double> bres(nb * (T + 1), 0.0);
  par::for_blocks(n, [&](std::size_t blk, std::size_t begin, std::size_t end) {
    double* acc = bres.data() + blk * (T + 1);
    std::vector<double> phi(B);
    for (std::size_t i = begin; i < end; ++i) {
      fit.basis_row({states.row(i), d}, phi);
      const double w = weights ? weights[i] : 1.0;
      acc[T] += w;
      for (std::size_t tt = 0; tt < T; ++tt) {
        double yhat = 0.0;
        for (std::size_t b = 0; b < B; ++b) yhat += fit.coef[tt][b] * phi[b];
        const double r = targets[tt][i] - yhat;
        acc[tt] += w * r * r;
      }
    }
  });
  fit.rmse.assign(T, 0.0);
  double wtot = 0.0;
  std::vector<double> res(T, 0.0);
  for (std::size_t blk = 0; blk < nb; ++blk) {
    for (std::size_t tt = 0; tt < T; ++tt) res[tt] += bres[blk * (T + 1) + tt];
    wtot += bres[blk * (T + 1) + T];
  }
  if (wtot > 0.0) {
    for (std::size_t tt = 0; tt < T; ++tt) fit.rmse[tt] = std::sqrt(res[tt] / wtot);
  }
  return fit;
}

}  // namespace qbsde
