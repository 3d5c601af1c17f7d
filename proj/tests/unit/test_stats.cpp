#include <boost/math/distributions/poisson.hpp>
#include <cmath>

#include "doctest.h"
#include "ehrenfest/rng.hpp"
#include "ehrenfest/stats.hpp"

using namespace ehrenfest;

TEST_CASE("summary") {
  const std::vector<double> x{1.0, 2.0, 3.0, 4.0};
  const auto s = stats::summarize(x);
  CHECK(s.mean == doctest::Approx(2.5));
  CHECK(s.variance == doctest::Approx(5.0 / 3.0));
  CHECK(s.se == doctest::Approx(std::sqrt(5.0 / 12.0)));
}

TEST_CASE("log mean exp is stable") {
  const std::vector<double> x{1000.0, 1000.0};
  CHECK(stats::log_mean_exp(x) == doctest::Approx(1000.0));
  const std::vector<double> y{0.0, std::log(3.0)};
  CHECK(stats::log_mean_exp(y) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("poisson tails agree with boost") {
  for (double mean : {0.5, 10.0, 1000.0, 1e5}) {
    const boost::math::poisson_distribution<> d(mean);
    for (double z : {-3.0, -1.0, 0.0, 1.0, 3.0}) {
      const double k = std::max(0.0, std::floor(mean + z * std::sqrt(mean)));
      const double sf = k == 0.0 ? 1.0 : boost::math::cdf(boost::math::complement(d, k - 1.0));
      CHECK(std::exp(stats::poisson_log_sf(mean, k)) == doctest::Approx(sf).epsilon(1e-10));
      CHECK(std::exp(stats::poisson_log_cdf(mean, k)) ==
            doctest::Approx(boost::math::cdf(d, k)).epsilon(1e-10));
    }
  }
  // Deep tail where direct complements underflow.
  const double deep = stats::poisson_log_sf(1e4, 1e4 + 1000.0);
  CHECK(deep < -40.0);
  CHECK(deep > -60.0);
}

TEST_CASE("chi-square helpers") {
  CHECK(stats::chi2_sf(3.84145882, 1.0) == doctest::Approx(0.05).epsilon(1e-6));
  RngStream rng(3, 0);
  std::vector<std::uint64_t> a(5000), b(5000);
  for (auto& v : a) v = rng.poisson(3.0);
  for (auto& v : b) v = rng.poisson(3.0);
  CHECK(stats::two_sample_chi2(a, b).p_value > 1e-3);
  for (auto& v : b) v = rng.poisson(3.5);
  CHECK(stats::two_sample_chi2(a, b).p_value < 1e-6);
}

TEST_CASE("ols recovers a line") {
  const std::vector<double> x{1, 2, 3, 4, 5}, y{2.1, 3.9, 6.05, 8.0, 9.95};
  const auto f = stats::ols(x, y);
  CHECK(f.slope == doctest::Approx(1.97).epsilon(1e-2));
  CHECK(f.slope_ci_low < f.slope);
  CHECK(f.slope_ci_high > f.slope);
}

TEST_CASE("clopper pearson") {
  CHECK(stats::clopper_pearson_upper(0, 100, 0.95) == doctest::Approx(1.0 - std::pow(0.05, 0.01)));
}

TEST_CASE("bootstrap standard error of a mean") {
  RngStream rng(5, 0);
  std::vector<double> x(400);
  for (auto& v : x) v = rng.normal();
  auto mean = [](std::span<const double> s) { return stats::summarize(s).mean; };
  const double se = stats::bootstrap_se(x, mean, 500, rng);
  CHECK(se == doctest::Approx(stats::summarize(x).se).epsilon(0.15));
}
