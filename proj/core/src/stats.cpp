#include "qbsde/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qbsde/errors.hpp"
#include "qbsde/parallel.hpp"

namespace qbsde::stats {

double block_sum(std::size_t n, const std::function<double(std::size_t)>& f) {
  std::vector<double> partial(par::block_count(n), 0.0);
  par::for_blocks(n, [&](std::size_t b, std::size_t begin, std::size_t end) {
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) s += f(i);
    partial[b] = s;
  });
  double total = 0.0;
  for (double s : partial) total += s;
  return total;
}

MeanVar mean_var(std::size_t n, const std::function<double(std::size_t)>& f) {
  if (n == 0) throw validation_error("mean_var: empty sample");
  MeanVar out;
  out.n = n;
  out.mean = block_sum(n, f) / static_cast<double>(n);
  if (n == 1) return out;
  const double mu = out.mean;
  const double ss = block_sum(n, [&](std::size_t i) {
    const double d = f(i) - mu;
    return d * d;
  });
  out.var = ss / static_cast<double>(n - 1);
  out.se = std::sqrt(out.var / static_cast<double>(n));
  return out;
}

double log_mean_exp(const std::vector<double>& a) {
  if (a.empty()) throw validation_error("log_mean_exp: empty sample");
  double m = -std::numeric_limits<double>::infinity();
  for (double v : a) m = std::max(m, v);
  if (!std::isfinite(m)) {
    throw numeric_error("log_mean_exp: non-finite exponent in sample");
  }
  const double s = block_sum(a.size(), [&](std::size_t i) { return std::exp(a[i] - m); });
  return m + std::log(s / static_cast<double>(a.size()));
}

double tail_share(std::vector<double> contributions, double frac) {
  if (contributions.empty()) return 0.0;
  double total = 0.0;
  for (double& c : contributions) {
    c = std::fabs(c);
    total += c;
  }
  if (total <= 0.0) return 0.0;
  const std::size_t n = contributions.size();
  const std::size_t top = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(frac * static_cast<double>(n))));
  std::nth_element(contributions.begin(), contributions.begin() + (top - 1),
                   contributions.end(), std::greater<double>());
  double tail = 0.0;
  for (std::size_t i = 0; i < top; ++i) tail += contributions[i];
  return tail / total;
}

bool tail_dominated(std::vector<double> contributions) {
  return tail_share(std::move(contributions)) > 0.5;
}

}  // namespace qbsde::stats
