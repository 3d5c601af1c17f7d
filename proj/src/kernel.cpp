#include "ehrenfest/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace ehrenfest {

namespace {

constexpr std::size_t kParallelThreshold = 512;

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

bool all_equal(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

void check_positive(double value, std::size_t i, std::size_t j) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw std::invalid_argument("RateKernel: entry (" + std::to_string(i + 1) + ", " +
                                std::to_string(j + 1) + ") is not strictly positive");
  }
}

}  // namespace

std::string to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::constant: return "constant";
    case KernelKind::product: return "product";
    case KernelKind::polynomial: return "polynomial";
    case KernelKind::table: return "table";
  }
  return "unknown";
}

RateKernel RateKernel::constant(std::size_t n, double value) {
  if (n < 2) throw std::invalid_argument("RateKernel: n must be >= 2");
  check_positive(value, 0, 0);
  RateKernel k;
  k.n_ = n;
  k.kind_ = KernelKind::constant;
  k.left_.assign(1, std::vector<double>(n, value));
  k.right_.assign(1, std::vector<double>(n, 1.0));
  k.max_norm_ = value;
  k.min_entry_ = value;
  k.finalize();
  return k;
}

RateKernel RateKernel::product(std::vector<double> left, std::vector<double> right) {
  require_same_size(left.size(), right.size(), "RateKernel::product");
  if (left.size() < 2) throw std::invalid_argument("RateKernel: n must be >= 2");
  for (std::size_t i = 0; i < left.size(); ++i) {
    check_positive(left[i], i, 0);
    check_positive(right[i], 0, i);
  }
  RateKernel k;
  k.n_ = left.size();
  k.kind_ = KernelKind::product;
  k.max_norm_ = *std::max_element(left.begin(), left.end()) *
                *std::max_element(right.begin(), right.end());
  k.min_entry_ = *std::min_element(left.begin(), left.end()) *
                 *std::min_element(right.begin(), right.end());
  k.left_.push_back(std::move(left));
  k.right_.push_back(std::move(right));
  k.finalize();
  return k;
}

RateKernel RateKernel::polynomial(std::size_t n, const std::vector<std::vector<double>>& coeffs) {
  if (n < 2) throw std::invalid_argument("RateKernel: n must be >= 2");
  if (coeffs.empty()) throw std::invalid_argument("RateKernel::polynomial: no coefficients");
  RateKernel k;
  k.n_ = n;
  k.kind_ = KernelKind::polynomial;
  for (std::size_t p = 0; p < coeffs.size(); ++p) {
    std::vector<double> u(n), v(n, 0.0);
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = static_cast<double>(i + 1) / static_cast<double>(n);
      u[i] = std::pow(x, static_cast<double>(p));
      double yq = 1.0;
      for (double c : coeffs[p]) {
        v[i] += c * yq;
        yq *= x;
        any = any || c != 0.0;
      }
    }
    if (any) {
      k.left_.push_back(std::move(u));
      k.right_.push_back(std::move(v));
    }
  }
  if (k.left_.empty()) throw std::invalid_argument("RateKernel::polynomial: all coefficients zero");
  k.max_norm_ = 0.0;
  k.min_entry_ = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double v = k(i, j);
      check_positive(v, i, j);
      k.max_norm_ = std::max(k.max_norm_, v);
      k.min_entry_ = std::min(k.min_entry_, v);
    }
  }
  k.finalize();
  return k;
}

RateKernel RateKernel::table(std::size_t n, std::vector<double> values) {
  if (n < 2) throw std::invalid_argument("RateKernel: n must be >= 2");
  require_same_size(values.size(), n * n, "RateKernel::table");
  RateKernel k;
  k.n_ = n;
  k.kind_ = KernelKind::table;
  k.max_norm_ = 0.0;
  k.min_entry_ = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      check_positive(values[i * n + j], i, j);
      k.max_norm_ = std::max(k.max_norm_, values[i * n + j]);
      k.min_entry_ = std::min(k.min_entry_, values[i * n + j]);
    }
  }
  k.table_ = std::move(values);
  k.finalize();
  return k;
}

void RateKernel::finalize() {
  diagonal_.resize(n_);
  for (std::size_t i = 0; i < n_; ++i) diagonal_[i] = (*this)(i, i);
  row_sums_.assign(n_, 0.0);
  const std::vector<double> ones(n_, 1.0);
  multiply(ones, row_sums_);
}

double RateKernel::operator()(std::size_t i, std::size_t j) const {
  if (kind_ == KernelKind::table) return table_[i * n_ + j];
  double s = 0.0;
  for (std::size_t r = 0; r < left_.size(); ++r) s += left_[r][i] * right_[r][j];
  return s;
}

void RateKernel::multiply(std::span<const double> v, std::span<double> out) const {
  require_same_size(v.size(), n_, "RateKernel::multiply");
  require_same_size(out.size(), n_, "RateKernel::multiply");
  const auto n = static_cast<std::ptrdiff_t>(n_);
  if (separable()) {
    std::vector<double> w(left_.size());
    for (std::size_t r = 0; r < left_.size(); ++r) w[r] = dot(right_[r], v);
#pragma omp parallel for schedule(static) if (n_ > kParallelThreshold)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t r = 0; r < w.size(); ++r) s += left_[r][i] * w[r];
      out[i] = s;
    }
    return;
  }
#pragma omp parallel for schedule(static) if (n_ > kParallelThreshold / 8)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[i] = dot(std::span<const double>(table_.data() + i * n, n_), v);
  }
}

void RateKernel::multiply_transpose(std::span<const double> v, std::span<double> out) const {
  require_same_size(v.size(), n_, "RateKernel::multiply_transpose");
  require_same_size(out.size(), n_, "RateKernel::multiply_transpose");
  const auto n = static_cast<std::ptrdiff_t>(n_);
  if (separable()) {
    std::vector<double> w(left_.size());
    for (std::size_t r = 0; r < left_.size(); ++r) w[r] = dot(left_[r], v);
#pragma omp parallel for schedule(static) if (n_ > kParallelThreshold)
    for (std::ptrdiff_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < w.size(); ++r) s += right_[r][j] * w[r];
      out[j] = s;
    }
    return;
  }
  // Column sums in fixed row order. Each thread owns a block of columns and
  // sweeps the rows contiguously across it.
  constexpr std::ptrdiff_t kBlock = 256;
  const std::ptrdiff_t blocks = (n + kBlock - 1) / kBlock;
  const double* t = table_.data();
#pragma omp parallel for schedule(static) if (n_ > kParallelThreshold / 8)
  for (std::ptrdiff_t b = 0; b < blocks; ++b) {
    const std::ptrdiff_t j0 = b * kBlock, j1 = std::min(n, j0 + kBlock);
    double acc[kBlock] = {};
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const double vi = v[i];
      const double* row = t + i * n;
      for (std::ptrdiff_t j = j0; j < j1; ++j) acc[j - j0] += row[j] * vi;
    }
    for (std::ptrdiff_t j = j0; j < j1; ++j) out[j] = acc[j - j0];
  }
}

std::vector<double> RateKernel::dense() const {
  if (kind_ == KernelKind::table) return table_;
  std::vector<double> out(n_ * n_);
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < n_; ++j) out[i * n_ + j] = (*this)(i, j);
  }
  return out;
}

TestFn apply_P1(const RateKernel& kernel, const TestFn& f) {
  require_same_size(f.size(), kernel.size(), "apply_P1");
  TestFn out(f.size(), 0.0);
  kernel.multiply(f.values, out.values);
  const double inv_n = 1.0 / static_cast<double>(f.size());
  for (double& v : out.values) v *= inv_n;
  return out;
}

TestFn apply_P2(const RateKernel& kernel, const TestFn& f) {
  require_same_size(f.size(), kernel.size(), "apply_P2");
  TestFn out(f.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(f.size());
  const auto& rs = kernel.row_sums();
  for (std::size_t i = 0; i < f.size(); ++i) out[i] = f[i] * rs[i] * inv_n;
  return out;
}

void apply_P1_minus_P2(const RateKernel& kernel, std::span<const double> f, std::span<double> out) {
  kernel.multiply(f, out);
  const double inv_n = 1.0 / static_cast<double>(f.size());
  const auto& rs = kernel.row_sums();
  for (std::size_t i = 0; i < f.size(); ++i) out[i] = (out[i] - f[i] * rs[i]) * inv_n;
}

TestFn apply_P1_minus_P2(const RateKernel& kernel, const TestFn& f) {
  require_same_size(f.size(), kernel.size(), "apply_P1_minus_P2");
  TestFn out(f.size(), 0.0);
  apply_P1_minus_P2(kernel, f.values, out.values);
  return out;
}

void apply_adjoint(const RateKernel& kernel, std::span<const double> rho, std::span<double> out) {
  kernel.multiply_transpose(rho, out);
  const double inv_n = 1.0 / static_cast<double>(rho.size());
  const auto& rs = kernel.row_sums();
  for (std::size_t i = 0; i < rho.size(); ++i) out[i] = (out[i] - rho[i] * rs[i]) * inv_n;
}

TestFn apply_B(const RateKernel& kernel, const TestFn& f, double cap) {
  const std::size_t n = kernel.size();
  require_same_size(f.size(), n, "apply_B");
  const auto [lo, hi] = std::minmax_element(f.values.begin(), f.values.end());
  if (*hi - *lo > cap) {
    throw NumericalError("apply_B: exponent range " + std::to_string(*hi - *lo) +
                         " exceeds cap " + std::to_string(cap));
  }
  TestFn out(n, 0.0);
  const double inv_n = 1.0 / static_cast<double>(n);
  if (kernel.separable()) {
    // exp(f_j - f_i) = exp(f_j - c) exp(c - f_i) with c = max f.
    const double c = *hi;
    std::vector<double> e(n), ke(n);
    for (std::size_t j = 0; j < n; ++j) e[j] = std::exp(f[j] - c);
    kernel.multiply(e, ke);
    const auto& rs = kernel.row_sums();
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = (std::exp(c - f[i]) * ke[i] - rs[i]) * inv_n;
    }
    return out;
  }
  // exp(f_j - f_i) as a product of hoisted exponentials keeps the inner loop
  // free of transcendental calls.
  const double c = *hi;
  std::vector<double> e(n), e_inv(n);
  for (std::size_t j = 0; j < n; ++j) {
    e[j] = std::exp(f[j] - c);
    e_inv[j] = std::exp(c - f[j]);
  }
  const auto ni = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n > 64)
  for (std::ptrdiff_t i = 0; i < ni; ++i) {
    double s = 0.0;
    const double* k = kernel.table_row(i).data();
    const double ei = e_inv[i];
    for (std::size_t j = 0; j < n; ++j) s += k[j] * (e[j] * ei - 1.0);
    out[i] = s * inv_n;
  }
  return out;
}

TestFn apply_Kquad(const RateKernel& kernel, const TestFn& f) {
  const std::size_t n = kernel.size();
  require_same_size(f.size(), n, "apply_Kquad");
  TestFn out(n, 0.0);
  if (f.is_constant()) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  if (kernel.separable()) {
    const double c = mean_of(f.values);
    std::vector<double> g(n), g2(n), kg(n), kg2(n);
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = f[i] - c;
      g2[i] = g[i] * g[i];
    }
    kernel.multiply(g, kg);
    kernel.multiply(g2, kg2);
    const auto& rs = kernel.row_sums();
    for (std::size_t i = 0; i < n; ++i) {
      const double v = kg2[i] - 2.0 * g[i] * kg[i] + g2[i] * rs[i];
      out[i] = std::max(0.0, v) * inv_n;
    }
    return out;
  }
  const auto ni = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n > 64)
  for (std::ptrdiff_t i = 0; i < ni; ++i) {
    const double* k = kernel.table_row(i).data();
    const double* fv = f.values.data();
    const double fi = fv[i];
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = fv[j] - fi;
      s += k[j] * d * d;
    }
    out[i] = s * inv_n;
  }
  return out;
}

double carre_bracket(std::span<const double> f, std::span<const double> g,
                     const RateKernel& kernel, std::span<const double> rho) {
  const std::size_t n = kernel.size();
  require_same_size(f.size(), n, "carre_bracket");
  require_same_size(g.size(), n, "carre_bracket");
  require_same_size(rho.size(), n, "carre_bracket");
  if (all_equal(f) || all_equal(g)) return 0.0;
  const double inv_n2 = 1.0 / (static_cast<double>(n) * static_cast<double>(n));
  if (kernel.separable()) {
    // sum_j lambda_ij (f_j - f_i)(g_j - g_i)
    //   = K(fg)_i - (f_i K(g)_i + g_i K(f)_i) + f_i g_i K(1)_i,
    // evaluated on mean-centred copies (the bracket is shift invariant).
    const double cf = mean_of(f);
    const double cg = mean_of(g);
    std::vector<double> fc(n), gc(n), fg(n), kf(n), kg(n), kfg(n);
    for (std::size_t i = 0; i < n; ++i) {
      fc[i] = f[i] - cf;
      gc[i] = g[i] - cg;
      fg[i] = fc[i] * gc[i];
    }
    kernel.multiply(fc, kf);
    kernel.multiply(gc, kg);
    kernel.multiply(fg, kfg);
    const auto& rs = kernel.row_sums();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double cross = fc[i] * kg[i] + gc[i] * kf[i];
      s += rho[i] * (kfg[i] - cross + fg[i] * rs[i]);
    }
    return s * inv_n2;
  }
  std::vector<double> rows(n);
  const auto ni = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n > 64)
  for (std::ptrdiff_t i = 0; i < ni; ++i) {
    double s = 0.0;
    const double* k = kernel.table_row(i).data();
    const double fi = f[i], gi = g[i];
    for (std::size_t j = 0; j < n; ++j) s += k[j] * (f[j] - fi) * (g[j] - gi);
    rows[i] = rho[i] * s;
  }
  double s = 0.0;
  for (double r : rows) s += r;
  return s * inv_n2;
}

double carre_bracket(const TestFn& f, const TestFn& g, const RateKernel& kernel,
                     std::span<const double> rho) {
  return carre_bracket(f.span(), g.span(), kernel, rho);
}

std::vector<double> carre_integrand(std::span<const double> f, std::span<const double> g,
                                    const RateKernel& kernel) {
  const std::size_t n = kernel.size();
  require_same_size(f.size(), n, "carre_integrand");
  require_same_size(g.size(), n, "carre_integrand");
  std::vector<double> out(n, 0.0);
  if (all_equal(f) || all_equal(g)) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  if (kernel.separable()) {
    const double cf = mean_of(f);
    const double cg = mean_of(g);
    std::vector<double> fc(n), gc(n), fg(n), kf(n), kg(n), kfg(n);
    for (std::size_t i = 0; i < n; ++i) {
      fc[i] = f[i] - cf;
      gc[i] = g[i] - cg;
      fg[i] = fc[i] * gc[i];
    }
    kernel.multiply(fc, kf);
    kernel.multiply(gc, kg);
    kernel.multiply(fg, kfg);
    const auto& rs = kernel.row_sums();
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = (kfg[i] - (fc[i] * kg[i] + gc[i] * kf[i]) + fg[i] * rs[i]) * inv_n;
    }
    return out;
  }
  const auto ni = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n > 64)
  for (std::ptrdiff_t i = 0; i < ni; ++i) {
    double s = 0.0;
    const double* k = kernel.table_row(i).data();
    const double fi = f[i], gi = g[i];
    for (std::size_t j = 0; j < n; ++j) s += k[j] * (f[j] - fi) * (g[j] - gi);
    out[i] = s * inv_n;
  }
  return out;
}

std::vector<double> trapezoid_weights(std::size_t n_time, double t_max) {
  const double h = t_max / static_cast<double>(n_time);
  std::vector<double> w(n_time + 1, h);
  w.front() = 0.5 * h;
  w.back() = 0.5 * h;
  return w;
}

double pathspace_inner(const SpaceTimeFn& F, const SpaceTimeFn& G, const RateKernel& kernel,
                       const DensityPath& mu) {
  if (!F.same_grid(G) || !F.same_grid(mu)) {
    throw DimensionMismatch("pathspace_inner: time/space grids differ");
  }
  require_same_size(F.n_space(), kernel.size(), "pathspace_inner");
  const auto w = trapezoid_weights(F.n_time(), F.t_max());
  double s = 0.0;
  for (std::size_t k = 0; k < F.n_rows(); ++k) {
    s += w[k] * carre_bracket(F.row(k), G.row(k), kernel, mu.row(k));
  }
  return s;
}

std::vector<double> time_derivative(std::span<const double> v, double dt) {
  const std::size_t m = v.size();
  std::vector<double> d(m, 0.0);
  if (m < 2) return d;
  d.front() = (v[1] - v[0]) / dt;
  d.back() = (v[m - 1] - v[m - 2]) / dt;
  for (std::size_t k = 1; k + 1 < m; ++k) d[k] = (v[k + 1] - v[k - 1]) / (2.0 * dt);
  return d;
}

SpaceTimeFn time_derivative(const SpaceTimeFn& G) {
  SpaceTimeFn D(G.n_time(), G.n_space(), G.t_max());
  const double dt = G.dt();
  const std::size_t last = G.n_time();
  for (std::size_t i = 0; i < G.n_space(); ++i) {
    D(0, i) = (G(1, i) - G(0, i)) / dt;
    D(last, i) = (G(last, i) - G(last - 1, i)) / dt;
    for (std::size_t k = 1; k < last; ++k) D(k, i) = (G(k + 1, i) - G(k - 1, i)) / (2.0 * dt);
  }
  return D;
}

namespace serial {

TestFn apply_P1(const RateKernel& kernel, const TestFn& f) {
  const std::size_t n = kernel.size();
  require_same_size(f.size(), n, "serial::apply_P1");
  TestFn out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += kernel(i, j) * f[j];
    out[i] = s / static_cast<double>(n);
  }
  return out;
}

TestFn apply_P2(const RateKernel& kernel, const TestFn& f) {
  const std::size_t n = kernel.size();
  require_same_size(f.size(), n, "serial::apply_P2");
  TestFn out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += kernel(i, j);
    out[i] = f[i] * s / static_cast<double>(n);
  }
  return out;
}

TestFn apply_B(const RateKernel& kernel, const TestFn& f) {
  const std::size_t n = kernel.size();
  require_same_size(f.size(), n, "serial::apply_B");
  TestFn out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += kernel(i, j) * (std::exp(f[j] - f[i]) - 1.0);
    out[i] = s / static_cast<double>(n);
  }
  return out;
}

TestFn apply_Kquad(const RateKernel& kernel, const TestFn& f) {
  const std::size_t n = kernel.size();
  require_same_size(f.size(), n, "serial::apply_Kquad");
  TestFn out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += kernel(i, j) * (f[j] - f[i]) * (f[j] - f[i]);
    out[i] = s / static_cast<double>(n);
  }
  return out;
}

void apply_adjoint(const RateKernel& kernel, std::span<const double> rho, std::span<double> out) {
  const std::size_t n = kernel.size();
  require_same_size(rho.size(), n, "serial::apply_adjoint");
  require_same_size(out.size(), n, "serial::apply_adjoint");
  for (std::size_t i = 0; i < n; ++i) {
    double in = 0.0, exit = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      in += kernel(j, i) * rho[j];
      exit += kernel(i, j);
    }
    out[i] = (in - rho[i] * exit) / static_cast<double>(n);
  }
}

double carre_bracket(std::span<const double> f, std::span<const double> g,
                     const RateKernel& kernel, std::span<const double> rho) {
  const std::size_t n = kernel.size();
  require_same_size(f.size(), n, "serial::carre_bracket");
  require_same_size(g.size(), n, "serial::carre_bracket");
  require_same_size(rho.size(), n, "serial::carre_bracket");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      s += kernel(i, j) * (f[j] - f[i]) * (g[j] - g[i]) * rho[i];
    }
  }
  return s / (static_cast<double>(n) * static_cast<double>(n));
}

}  // namespace serial

}  // namespace ehrenfest
