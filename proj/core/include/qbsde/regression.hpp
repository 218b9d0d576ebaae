#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace qbsde {

struct BasisPlan {
  int degree = 4;    // total degree of the polynomial basis
  double clip = 4.0; // winsorisation radius in standardised units; 0 = off
};

/// Strided view of one state coordinate block per sample (row i at
/// data + i*stride, dim coordinates).
struct StateView {
  const double* data = nullptr;
  std::size_t stride = 0;
  std::size_t dim = 0;
  const double* row(std::size_t i) const { return data + i * stride; }
};

/// A fitted polynomial in standardised coordinates, one coefficient vector
/// per regression target.
struct PolyFit {
  int degree = 0;
  std::size_t dim = 0;
  double clip = 0.0;                // standardised inputs clamped to [-clip, clip]
  std::vector<double> mean, scale;  // per-coordinate standardisation
  std::vector<int> powers;          // [basis][coord] exponents, flattened
  std::vector<std::vector<double>> coef;
  std::vector<double> rmse;         // weighted fit RMSE per target

  std::size_t basis_size() const { return powers.size() / std::max<std::size_t>(1, dim); }
  void basis_row(std::span<const double> x, std::span<double> out) const;
  double eval(std::size_t target, std::span<const double> x) const;
};

std::size_t polynomial_basis_size(int degree, std::size_t dim);

/// Weighted least squares of each target on the polynomial basis of the
/// standardised states; normal equations with relative ridge damping.
/// weights == nullptr means uniform.  Degenerate (constant) coordinates are
/// tolerated; a genuinely unsolvable system throws.
PolyFit fit_polynomial(std::size_t n, const StateView& states,
                       std::span<const double* const> targets,
                       const double* weights, const BasisPlan& plan,
                       double ridge = 1e-10);

}  // namespace qbsde
