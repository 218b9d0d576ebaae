#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace qbsde::stats {

/// Sum of f(i) over [0,n), accumulated per block and combined in block order.
/// Deterministic for any worker count.
double block_sum(std::size_t n, const std::function<double(std::size_t)>& f);

struct MeanVar {
  double mean = 0.0;
  double var = 0.0;  // unbiased sample variance
  double se = 0.0;   // standard error of the mean
  std::size_t n = 0;
};

/// Two-pass mean/variance with deterministic reduction order.
MeanVar mean_var(std::size_t n, const std::function<double(std::size_t)>& f);

/// log( mean_i exp(a_i) ), stabilised against overflow.
double log_mean_exp(const std::vector<double>& a);

/// Share of sum |c_i| carried by the top max(1, ceil(frac*n)) entries.
double tail_share(std::vector<double> contributions, double frac = 1e-3);

/// True when the top 0.1% of contributions carry more than half the total.
bool tail_dominated(std::vector<double> contributions);

}  // namespace qbsde::stats
