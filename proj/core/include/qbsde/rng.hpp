#pragma once

#include <cstdint>

namespace qbsde::rng {

// Counter-based generator: every variate is a pure function of
// (seed, stream, path, step, coord).  No generator state is shared between
// threads, so results are independent of scheduling and worker count.

enum Stream : std::uint64_t {
  kIncrements = 0x1,   // Brownian increments of a path bundle
  kSampling = 0x2,     // assumption / invariant samplers
  kBattery = 0x3,      // control battery construction
  kPerturb = 0x4,      // control perturbation noise
};

std::uint64_t mix64(std::uint64_t x);

std::uint64_t counter_key(std::uint64_t seed, std::uint64_t stream,
                          std::uint64_t path, std::uint64_t step,
                          std::uint64_t coord);

/// Uniform draw in the open interval (0,1).
double uniform01(std::uint64_t key);

/// Inverse of the standard normal CDF (Wichura's algorithm, ~1e-15 accurate).
double normal_quantile(double p);

/// Standard normal variate for a counter position.
double normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t path,
              std::uint64_t step, std::uint64_t coord);

/// Uniform variate in (lo, hi) for a counter position.
double uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t path,
               std::uint64_t step, std::uint64_t coord, double lo, double hi);

}  // namespace qbsde::rng
