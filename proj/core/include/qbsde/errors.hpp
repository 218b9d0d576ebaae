#pragma once

#include <stdexcept>
#include <string>

namespace qbsde {

/// Bad inputs: malformed configs, dimension mismatches, out-of-range parameters.
class validation_error : public std::invalid_argument {
 public:
  explicit validation_error(const std::string& what) : std::invalid_argument(what) {}
};

/// Numerical breakdown: overflow, non-convergent fixed points, degenerate weights,
/// rank-deficient regressions, insufficient search grids.
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

/// A certification check that was expected to hold failed.
class certification_error : public std::runtime_error {
 public:
  explicit certification_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace qbsde
