#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

// Shared scalar statistics: quantiles, two-sample tests, rank correlation,
// Gaussian distribution helpers. All quantiles use linear interpolation
// between order statistics.

namespace pisorb::stats {

double mean(std::span<const double> x);
double variance(std::span<const double> x, bool sample = true);
double stddev(std::span<const double> x, bool sample = true);

/// Linear-interpolation quantile, q in [0, 1]. Input need not be sorted.
double quantile(std::span<const double> x, double q);
double median(std::span<const double> x);
double iqr(std::span<const double> x);

/// Two-sample Kolmogorov-Smirnov statistic (sup distance between ECDFs).
double ks_statistic(std::span<const double> a, std::span<const double> b);

/// Asymptotic KS p-value via the Kolmogorov distribution series.
double ks_pvalue(double d, std::size_t n1, std::size_t n2);

/// Cohen's d with (n-1)-weighted pooled standard deviation.
/// Sign: negative when the first sample has the smaller mean.
double cohens_d(std::span<const double> a, std::span<const double> b);

double pearson(std::span<const double> x, std::span<const double> y);

/// Ranks with average-rank tie handling (ranks start at 1).
std::vector<double> average_ranks(std::span<const double> x);

double spearman(std::span<const double> x, std::span<const double> y);

/// Standard normal pdf / cdf.
double norm_pdf(double z);
double norm_cdf(double z);

/// Two-sided p-value for a t statistic with df degrees of freedom.
double t_pvalue_two_sided(double t, double df);

/// Slope of the OLS line y = a + b*x; returns b. Requires >= 2 distinct x.
double ols_slope(std::span<const double> x, std::span<const double> y);

/// Closed-form CRPS of a Gaussian N(mu, sigma^2) against observation y.
double crps_gaussian(double y, double mu, double sigma);

/// SplitMix64 step; used to derive independent sub-seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace pisorb::stats
