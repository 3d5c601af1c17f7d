#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "ehrenfest/errors.hpp"

namespace ehrenfest {

// Urn grid {1/N, 2/N, ..., 1} crossed with a uniform time grid on [0, t_max].
// Urn indices are 0-based in code; urn k sits at x = (k + 1) / N.
struct Grid {
  std::size_t n_space = 2;
  double t_max = 1.0;
  std::size_t n_time = 1;

  Grid() = default;
  Grid(std::size_t n_space, double t_max, std::size_t n_time);

  double dt() const { return t_max / static_cast<double>(n_time); }
  double x(std::size_t i) const {
    return static_cast<double>(i + 1) / static_cast<double>(n_space);
  }
  double t(std::size_t k) const {
    return k == n_time ? t_max
                       : t_max * static_cast<double>(k) / static_cast<double>(n_time);
  }
};

// A function on the urn grid, f(i/N).
struct TestFn {
  std::vector<double> values;

  TestFn() = default;
  explicit TestFn(std::vector<double> v) : values(std::move(v)) {}
  TestFn(std::size_t n, double c) : values(n, c) {}

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }
  std::span<const double> span() const { return values; }
  double sup_norm() const;
  bool is_constant() const;

  template <class F>
  static TestFn sample(std::size_t n, F&& f) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) {
      v[i] = f(static_cast<double>(i + 1) / static_cast<double>(n));
    }
    return TestFn(std::move(v));
  }
};

// phi(i/N): expected molecules per urn at time 0. Strictly positive.
class InitialProfile {
 public:
  InitialProfile() = default;
  explicit InitialProfile(std::vector<double> values);

  template <class F>
  static InitialProfile sample(std::size_t n, F&& f) {
    return InitialProfile(TestFn::sample(n, std::forward<F>(f)).values);
  }

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const { return values_; }
  double total() const;
  double max() const;

 private:
  std::vector<double> values_;
};

// Row-major (n_time + 1) x n_space table; row k is time k * t_max / n_time.
class TimeField {
 public:
  TimeField() = default;
  TimeField(std::size_t n_time, std::size_t n_space, double t_max, double fill = 0.0);
  explicit TimeField(const Grid& g, double fill = 0.0)
      : TimeField(g.n_time, g.n_space, g.t_max, fill) {}

  std::size_t n_time() const { return n_time_; }
  std::size_t n_space() const { return n_space_; }
  std::size_t n_rows() const { return n_time_ + 1; }
  double t_max() const { return t_max_; }
  double dt() const { return t_max_ / static_cast<double>(n_time_); }
  double t(std::size_t k) const {
    return k == n_time_ ? t_max_ : t_max_ * static_cast<double>(k) / static_cast<double>(n_time_);
  }
  Grid grid() const { return Grid(n_space_, t_max_, n_time_); }

  std::span<double> row(std::size_t k) { return {data_.data() + k * n_space_, n_space_}; }
  std::span<const double> row(std::size_t k) const {
    return {data_.data() + k * n_space_, n_space_};
  }
  double& operator()(std::size_t k, std::size_t i) { return data_[k * n_space_ + i]; }
  double operator()(std::size_t k, std::size_t i) const { return data_[k * n_space_ + i]; }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool same_grid(const TimeField& o) const;
  double sup_norm() const;

  // Piecewise-linear interpolation in time; t is clamped to [0, t_max].
  double value_at(double t, std::size_t i) const;
  void row_at(double t, std::span<double> out) const;
  // Cell index k with t in [t_k, t_{k+1}) and the local fraction in [0, 1].
  std::pair<std::size_t, double> locate(double t) const;

 private:
  std::size_t n_time_ = 0;
  std::size_t n_space_ = 0;
  double t_max_ = 0.0;
  std::vector<double> data_;
};

// G(t_k, i/N); a test or tilt function on the space-time grid.
struct SpaceTimeFn : TimeField {
  using TimeField::TimeField;

  template <class F>
  static SpaceTimeFn sample(const Grid& g, F&& f) {
    SpaceTimeFn out(g);
    for (std::size_t k = 0; k <= g.n_time; ++k) {
      const double t = g.t(k);
      for (std::size_t i = 0; i < g.n_space; ++i) out(k, i) = f(t, g.x(i));
    }
    return out;
  }
  // t-independent G(t, x) = f(x).
  static SpaceTimeFn constant_in_time(const Grid& g, const TestFn& f);

  bool is_time_constant() const;
  // Row k as a TestFn.
  TestFn slice(std::size_t k) const;
};

// Densities rho(t_k, i/N) of a measure path mu_t(dx) = rho_t(x) dx.
struct DensityPath : TimeField {
  using TimeField::TimeField;

  // mu_{t_k}(f) = (1/N) sum_i rho(t_k, i/N) f(i/N).
  double pair(std::size_t k, std::span<const double> f) const;
  double mass(std::size_t k) const;
};

// m(t_k, i) = E X_t^N(i).
struct MeanField : TimeField {
  using TimeField::TimeField;

  double total(std::size_t k) const;
};

// (1/N) sum_i a_i b_i, the midpoint quadrature of int a b dx on the urn grid.
double grid_pair(std::span<const double> a, std::span<const double> b);

}  // namespace ehrenfest
