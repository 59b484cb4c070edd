#pragma once

#include <span>

namespace hmt {

struct Comparison {
  double mean_a = 0.0;
  double mean_b = 0.0;
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;         // two-sided
  double cohens_d = 0.0;  // pooled standard deviation
};

/// Sample mean and unbiased variance.
double mean(std::span<const double> xs);
double sample_variance(std::span<const double> xs);

/// Welch's unpaired t-test of a against b plus Cohen's d.
/// Throws ConfigError with fewer than two values per side, and when both
/// sides have zero variance.
Comparison compare_runs(std::span<const double> a, std::span<const double> b);

}  // namespace hmt
