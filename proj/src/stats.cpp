#include "ehrenfest/stats.hpp"

#include <algorithm>
#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "ehrenfest/errors.hpp"

namespace ehrenfest::stats {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_pmf(double mean, double k) { return -mean + k * std::log(mean) - std::lgamma(k + 1.0); }

// log sum_{j >= k} pmf(j) (direction +1) or log sum_{j <= k} pmf(j) (direction -1),
// started at k and walked away from the mode, so terms shrink monotonically.
double log_tail_from(double mean, double k, int direction) {
  double sum = 1.0, comp = 0.0, term = 1.0;
  double j = k;
  for (int it = 0; it < 100000000; ++it) {
    if (direction > 0) {
      term *= mean / (j + 1.0);
      j += 1.0;
    } else {
      if (j <= 0.0) break;
      term *= j / mean;
      j -= 1.0;
    }
    const double y = term - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
    if (term < 1e-17 * sum) break;
  }
  return log_pmf(mean, k) + std::log(sum);
}

double log1mexp(double x) {
  // log(1 - exp(x)) for x < 0.
  return x > -0.693 ? std::log(-std::expm1(x)) : std::log1p(-std::exp(x));
}

}  // namespace

Summary summarize(std::span<const double> x) {
  Summary s;
  s.n = x.size();
  if (s.n == 0) {
    s.mean = std::numeric_limits<double>::quiet_NaN();
    s.variance = s.mean;
    s.se = kInf;
    s.variance_se = kInf;
    return s;
  }
  double sum = 0.0;
  for (double v : x) sum += v;
  s.mean = sum / static_cast<double>(s.n);
  double m2 = 0.0, m4 = 0.0;
  for (double v : x) {
    const double d = (v - s.mean) * (v - s.mean);
    m2 += d;
    m4 += d * d;
  }
  const double n = static_cast<double>(s.n);
  s.variance = s.n > 1 ? m2 / (n - 1.0) : std::numeric_limits<double>::quiet_NaN();
  s.se = s.n > 1 ? std::sqrt(s.variance / n) : kInf;
  if (s.n > 3) {
    const double mu2 = m2 / n, mu4 = m4 / n;
    s.variance_se = std::sqrt(std::max(0.0, mu4 - mu2 * mu2 * (n - 3.0) / (n - 1.0)) / n);
  } else {
    s.variance_se = kInf;
  }
  return s;
}

double log_mean_exp(std::span<const double> x) {
  if (x.empty()) return -kInf;
  const double m = *std::max_element(x.begin(), x.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s / static_cast<double>(x.size()));
}

double correlation(std::span<const double> x, std::span<const double> y) {
  require_same_size(x.size(), y.size(), "correlation");
  const auto sx = summarize(x), sy = summarize(y);
  double c = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) c += (x[i] - sx.mean) * (y[i] - sy.mean);
  c /= static_cast<double>(x.size()) - 1.0;
  return c / std::sqrt(sx.variance * sy.variance);
}

double chi2_sf(double statistic, double dof) {
  if (dof <= 0.0) return 1.0;
  if (statistic <= 0.0) return 1.0;
  return boost::math::gamma_q(dof / 2.0, statistic / 2.0);
}

ChiSquare poisson_gof(std::span<const std::uint64_t> samples, double mean) {
  if (samples.empty()) throw std::invalid_argument("poisson_gof: no samples");
  const double n = static_cast<double>(samples.size());
  std::map<std::uint64_t, double> observed;
  std::uint64_t max_seen = 0;
  for (auto v : samples) {
    observed[v] += 1.0;
    max_seen = std::max(max_seen, v);
  }
  // Expected counts per value, up to where the remaining tail is small.
  std::vector<double> expected, obs;
  double cdf = 0.0;
  double pmf = std::exp(-mean);
  for (std::uint64_t k = 0;; ++k) {
    if (k > 0) pmf *= mean / static_cast<double>(k);
    cdf += pmf;
    expected.push_back(n * pmf);
    auto it = observed.find(k);
    obs.push_back(it == observed.end() ? 0.0 : it->second);
    if (k >= max_seen && n * (1.0 - cdf) < 5.0 && static_cast<double>(k) > mean) break;
  }
  // Last cell takes the upper tail.
  expected.back() += n * std::max(0.0, 1.0 - cdf);
  // Merge from the left until each cell expects >= 5.
  std::vector<double> e_cells, o_cells;
  double e_acc = 0.0, o_acc = 0.0;
  for (std::size_t k = 0; k < expected.size(); ++k) {
    e_acc += expected[k];
    o_acc += obs[k];
    if (e_acc >= 5.0) {
      e_cells.push_back(e_acc);
      o_cells.push_back(o_acc);
      e_acc = o_acc = 0.0;
    }
  }
  if (e_acc > 0.0 || o_acc > 0.0) {
    if (e_cells.empty()) {
      e_cells.push_back(e_acc);
      o_cells.push_back(o_acc);
    } else {
      e_cells.back() += e_acc;
      o_cells.back() += o_acc;
    }
  }
  ChiSquare r;
  for (std::size_t c = 0; c < e_cells.size(); ++c) {
    const double d = o_cells[c] - e_cells[c];
    r.statistic += d * d / e_cells[c];
  }
  r.dof = e_cells.size() > 1 ? e_cells.size() - 1 : 0;
  r.p_value = chi2_sf(r.statistic, static_cast<double>(r.dof));
  return r;
}

ChiSquare two_sample_chi2(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("two_sample_chi2: empty sample");
  std::map<std::uint64_t, std::pair<double, double>> cells;
  for (auto v : a) cells[v].first += 1.0;
  for (auto v : b) cells[v].second += 1.0;
  std::vector<std::pair<double, double>> merged;
  std::pair<double, double> acc{0.0, 0.0};
  for (const auto& [v, c] : cells) {
    acc.first += c.first;
    acc.second += c.second;
    if (acc.first + acc.second >= 10.0) {
      merged.push_back(acc);
      acc = {0.0, 0.0};
    }
  }
  if (acc.first + acc.second > 0.0) {
    if (merged.empty()) {
      merged.push_back(acc);
    } else {
      merged.back().first += acc.first;
      merged.back().second += acc.second;
    }
  }
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double n = na + nb;
  ChiSquare r;
  for (const auto& [ca, cb] : merged) {
    const double tot = ca + cb;
    const double ea = tot * na / n, eb = tot * nb / n;
    r.statistic += (ca - ea) * (ca - ea) / ea + (cb - eb) * (cb - eb) / eb;
  }
  r.dof = merged.size() > 1 ? merged.size() - 1 : 0;
  r.p_value = chi2_sf(r.statistic, static_cast<double>(r.dof));
  return r;
}

double clopper_pearson_upper(std::uint64_t successes, std::uint64_t trials, double confidence) {
  if (trials == 0) return 1.0;
  if (successes >= trials) return 1.0;
  const boost::math::beta_distribution<> dist(static_cast<double>(successes) + 1.0,
                                              static_cast<double>(trials - successes));
  return boost::math::quantile(dist, confidence);
}

double poisson_log_sf(double mean, double k) {
  k = std::ceil(k);
  if (k <= 0.0) return 0.0;
  if (!(mean > 0.0)) return -kInf;
  if (mean > 1e8) {
    const boost::math::normal_distribution<> z;
    const double x = (k - 0.5 - mean) / std::sqrt(mean);
    return std::log(boost::math::cdf(boost::math::complement(z, x)));
  }
  if (k > mean) return log_tail_from(mean, k, +1);
  return log1mexp(log_tail_from(mean, k - 1.0, -1));
}

double poisson_log_cdf(double mean, double k) {
  k = std::floor(k);
  if (k < 0.0) return -kInf;
  if (!(mean > 0.0)) return 0.0;
  if (mean > 1e8) {
    const boost::math::normal_distribution<> z;
    return std::log(boost::math::cdf(z, (k + 0.5 - mean) / std::sqrt(mean)));
  }
  if (k < mean) return log_tail_from(mean, k, -1);
  return log1mexp(log_tail_from(mean, k + 1.0, +1));
}

LinearFit ols(std::span<const double> x, std::span<const double> y) {
  require_same_size(x.size(), y.size(), "ols");
  const std::size_t n = x.size();
  if (n < 2) throw std::invalid_argument("ols: need at least two points");
  const auto sx = summarize(x), sy = summarize(y);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - sx.mean) * (x[i] - sx.mean);
    sxy += (x[i] - sx.mean) * (y[i] - sy.mean);
  }
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = sy.mean - f.slope * sx.mean;
  if (n > 2) {
    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = y[i] - f.intercept - f.slope * x[i];
      rss += r * r;
    }
    f.slope_se = std::sqrt(rss / static_cast<double>(n - 2) / sxx);
    const boost::math::students_t_distribution<> t(static_cast<double>(n - 2));
    const double q = boost::math::quantile(t, 0.975);
    f.slope_ci_low = f.slope - q * f.slope_se;
    f.slope_ci_high = f.slope + q * f.slope_se;
  } else {
    f.slope_se = kInf;
    f.slope_ci_low = -kInf;
    f.slope_ci_high = kInf;
  }
  return f;
}

double bootstrap_se(std::span<const double> x,
                    const std::function<double(std::span<const double>)>& statistic,
                    std::size_t resamples, RngStream& rng) {
  if (x.size() < 2 || resamples < 2) return kInf;
  std::vector<double> sample(x.size()), stat(resamples);
  for (std::size_t b = 0; b < resamples; ++b) {
    for (auto& v : sample) v = x[rng.below(x.size())];
    stat[b] = statistic(sample);
  }
  return std::sqrt(summarize(stat).variance);
}

}  // namespace ehrenfest::stats
