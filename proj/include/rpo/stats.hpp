#pragma once

// Small statistics toolbox used by the probes and the acceptance suite:
// chi-square survival function, Spearman rank correlation with a permutation
// p-value, and a percentile bootstrap for variance ratios.

#include <cstdint>
#include <span>
#include <vector>

namespace rpo::stats {

double mean(std::span<const double> xs);

// Unbiased (n-1) sample variance.
double sample_variance(std::span<const double> xs);

// Population (n) standard deviation.
double population_stddev(std::span<const double> xs);

// Upper tail P(X >= x) for a chi-square distribution with df degrees of
// freedom, via the regularized upper incomplete gamma function.
double chi_square_sf(double x, int df);

// Pearson chi-square goodness-of-fit statistic against expected counts.
double chi_square_statistic(std::span<const int64_t> observed,
                            std::span<const double> expected);

// Spearman rank correlation with average ranks for ties.
double spearman_rho(std::span<const double> x, std::span<const double> y);

// One-sided permutation p-value for H1: rho > 0.
double spearman_pvalue_greater(std::span<const double> x,
                               std::span<const double> y, int permutations,
                               uint64_t seed);

struct BootstrapInterval {
  double lo = 0.0;
  double hi = 0.0;
};

// Percentile bootstrap CI for sample_variance(a) / sample_variance(b).
BootstrapInterval bootstrap_variance_ratio_ci(std::span<const double> a,
                                              std::span<const double> b,
                                              int resamples, double confidence,
                                              uint64_t seed);

}  // namespace rpo::stats
