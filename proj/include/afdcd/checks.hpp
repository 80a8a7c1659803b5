#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "afdcd/losses.hpp"
#include "afdcd/rng.hpp"
#include "afdcd/tensor.hpp"

namespace afdcd {

/// Worst error seen by one randomized check over `trials` instances.
struct CheckResult {
  std::string name;
  std::size_t trials = 0;
  double worst = 0.0;
  double tolerance = 0.0;

  bool passed() const { return trials > 0 && worst < tolerance; }
};

FeatureMap random_feature_map(std::size_t h, std::size_t w, std::size_t c, Rng& rng, double lo = -1.0,
                              double hi = 1.0);

/// A random omni-contrasting instance no larger than 8 x 8 x 16 (before pooling).
struct OmniInstance {
  FeatureMap student;
  FeatureMap teacher;
  ContrastConfig cfg;
};

OmniInstance random_omni_instance(Rng& rng, DistanceKind kind, std::size_t pool_factor);

/// Optimized losses and kernels against the brute-force oracles.
std::vector<CheckResult> run_oracle_checks(std::size_t trials, std::uint64_t seed);

/// Analytical gradients against central finite differences.
std::vector<CheckResult> run_grad_checks(std::size_t trials, std::uint64_t seed);

/// One line per result; returns true when all passed.
bool report_checks(std::ostream& out, const std::vector<CheckResult>& results);

}  // namespace afdcd
