#include "ehrenfest/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ehrenfest {

Grid::Grid(std::size_t n_space_, double t_max_, std::size_t n_time_)
    : n_space(n_space_), t_max(t_max_), n_time(n_time_) {
  if (n_space < 2) throw std::invalid_argument("Grid: n_space must be >= 2");
  if (n_time < 1) throw std::invalid_argument("Grid: n_time must be >= 1");
  if (!(t_max > 0.0) || !std::isfinite(t_max)) {
    throw std::invalid_argument("Grid: t_max must be positive and finite");
  }
}

double TestFn::sup_norm() const {
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

bool TestFn::is_constant() const {
  return std::all_of(values.begin(), values.end(),
                     [&](double v) { return v == values.front(); });
}

InitialProfile::InitialProfile(std::vector<double> values) : values_(std::move(values)) {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!(values_[i] > 0.0) || !std::isfinite(values_[i])) {
      throw std::invalid_argument("InitialProfile: entry " + std::to_string(i + 1) +
                                  " is not strictly positive");
    }
  }
}

double InitialProfile::total() const {
  double s = 0.0;
  for (double v : values_) s += v;
  return s;
}

double InitialProfile::max() const {
  return values_.empty() ? 0.0 : *std::max_element(values_.begin(), values_.end());
}

TimeField::TimeField(std::size_t n_time, std::size_t n_space, double t_max, double fill)
    : n_time_(n_time), n_space_(n_space), t_max_(t_max), data_((n_time + 1) * n_space, fill) {
  if (n_time == 0) throw std::invalid_argument("TimeField: n_time must be >= 1");
  if (!(t_max > 0.0)) throw std::invalid_argument("TimeField: t_max must be positive");
}

bool TimeField::same_grid(const TimeField& o) const {
  return n_time_ == o.n_time_ && n_space_ == o.n_space_ && t_max_ == o.t_max_;
}

double TimeField::sup_norm() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

std::pair<std::size_t, double> TimeField::locate(double t) const {
  if (!(t > 0.0)) return {0, 0.0};
  if (t >= t_max_) return {n_time_ - 1, 1.0};
  const double s = t / dt();
  auto k = static_cast<std::size_t>(s);
  if (k >= n_time_) k = n_time_ - 1;
  return {k, s - static_cast<double>(k)};
}

double TimeField::value_at(double t, std::size_t i) const {
  const auto [k, u] = locate(t);
  return (1.0 - u) * (*this)(k, i) + u * (*this)(k + 1, i);
}

void TimeField::row_at(double t, std::span<double> out) const {
  require_same_size(out.size(), n_space_, "TimeField::row_at");
  const auto [k, u] = locate(t);
  const auto a = row(k);
  const auto b = row(k + 1);
  for (std::size_t i = 0; i < n_space_; ++i) out[i] = (1.0 - u) * a[i] + u * b[i];
}

SpaceTimeFn SpaceTimeFn::constant_in_time(const Grid& g, const TestFn& f) {
  require_same_size(f.size(), g.n_space, "SpaceTimeFn::constant_in_time");
  SpaceTimeFn out(g);
  for (std::size_t k = 0; k <= g.n_time; ++k) {
    std::copy(f.values.begin(), f.values.end(), out.row(k).begin());
  }
  return out;
}

bool SpaceTimeFn::is_time_constant() const {
  const auto first = row(0);
  for (std::size_t k = 1; k < n_rows(); ++k) {
    if (!std::equal(first.begin(), first.end(), row(k).begin())) return false;
  }
  return true;
}

TestFn SpaceTimeFn::slice(std::size_t k) const {
  const auto r = row(k);
  return TestFn(std::vector<double>(r.begin(), r.end()));
}

double DensityPath::pair(std::size_t k, std::span<const double> f) const {
  return grid_pair(row(k), f);
}

double DensityPath::mass(std::size_t k) const {
  double s = 0.0;
  for (double v : row(k)) s += v;
  return s / static_cast<double>(n_space());
}

double MeanField::total(std::size_t k) const {
  double s = 0.0;
  for (double v : row(k)) s += v;
  return s;
}

double grid_pair(std::span<const double> a, std::span<const double> b) {
  require_same_size(a.size(), b.size(), "grid_pair");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s / static_cast<double>(a.size());
}

}  // namespace ehrenfest
