#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ehrenfest/rng.hpp"

namespace ehrenfest::stats {

struct Summary {
  std::size_t n = 0;
  double mean = 0.0;
  double variance = 0.0;  // unbiased
  double se = 0.0;        // standard error of the mean; infinite when n < 2
  // Standard error of the sample variance from the fourth central moment;
  // infinite when n < 4.
  double variance_se = 0.0;
};

// Two-pass moments, summed in index order so results never depend on threading.
Summary summarize(std::span<const double> x);

// log((1/n) sum exp(x_i)), stable against overflow.
double log_mean_exp(std::span<const double> x);

double correlation(std::span<const double> x, std::span<const double> y);

struct ChiSquare {
  double statistic = 0.0;
  std::size_t dof = 0;
  double p_value = 1.0;
};

// Pearson goodness of fit of integer samples to Poisson(mean). Cells are the
// values 0, 1, ... with adjacent cells merged until each expects >= 5 counts;
// the last cell absorbs the upper tail.
ChiSquare poisson_gof(std::span<const std::uint64_t> samples, double mean);
// Two-sample chi-square homogeneity test on integer samples, cells merged
// until each pooled cell holds >= 10 observations.
ChiSquare two_sample_chi2(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b);
// Upper tail of the chi-square law.
double chi2_sf(double statistic, double dof);

// One-sided upper Clopper-Pearson bound for a binomial proportion.
double clopper_pearson_upper(std::uint64_t successes, std::uint64_t trials, double confidence);

// log P(X >= k) and log P(X <= k) for X ~ Poisson(mean), by log-space Kahan
// summation of the pmf. A continuity-corrected normal approximation takes
// over above mean 1e8.
double poisson_log_sf(double mean, double k);
double poisson_log_cdf(double mean, double k);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double slope_ci_low = 0.0;  // 95% t interval
  double slope_ci_high = 0.0;
};
LinearFit ols(std::span<const double> x, std::span<const double> y);

// Nonparametric bootstrap standard error of statistic(sample).
double bootstrap_se(std::span<const double> x,
                    const std::function<double(std::span<const double>)>& statistic,
                    std::size_t resamples, RngStream& rng);

}  // namespace ehrenfest::stats
