#include "ehrenfest/rate.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "ehrenfest/semigroup.hpp"

namespace ehrenfest {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kPinvCutoff = 1e-10;
constexpr double kIndefinite = 1e-8;

double pair_slice(std::span<const double> rho, std::span<const double> f) {
  return grid_pair(rho, f);
}

std::vector<double> to_std(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

struct PsdSolve {
  VectorXd x;
  double quad = 0.0;  // L^T M^+ L
  double min_eig = 0.0;
  double max_eig = 0.0;
  std::size_t rank = 0;
};

// Pseudo-inverse solve of M x = L for symmetric positive semi-definite M,
// discarding eigenvalues below kPinvCutoff * max eigenvalue.
PsdSolve psd_solve(const MatrixXd& m, const VectorXd& l, const char* what) {
  PsdSolve out;
  out.x = VectorXd::Zero(l.size());
  if (m.rows() == 0) return out;
  const Eigen::SelfAdjointEigenSolver<MatrixXd> es(m);
  if (es.info() != Eigen::Success) throw NumericalError(std::string(what) + ": eigensolver failed");
  const VectorXd& ev = es.eigenvalues();
  out.min_eig = ev.minCoeff();
  out.max_eig = ev.maxCoeff();
  if (out.max_eig <= 0.0) return out;
  if (out.min_eig < -kIndefinite * out.max_eig) {
    throw NumericalError(std::string(what) + ": Gram matrix is indefinite (min eigenvalue " +
                         std::to_string(out.min_eig) + ")");
  }
  const VectorXd proj = es.eigenvectors().transpose() * l;
  VectorXd y = VectorXd::Zero(l.size());
  for (Eigen::Index k = 0; k < ev.size(); ++k) {
    if (ev[k] > kPinvCutoff * out.max_eig) {
      y[k] = proj[k] / ev[k];
      out.quad += proj[k] * proj[k] / ev[k];
      ++out.rank;
    }
  }
  out.x = es.eigenvectors() * y;
  return out;
}

double condition_number(const MatrixXd& m) {
  const Eigen::SelfAdjointEigenSolver<MatrixXd> es(m, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

// Spatial Gram (1/N) sum w_i S_a S_b.
MatrixXd weighted_spatial_gram(const std::vector<TestFn>& s, std::span<const double> w) {
  const auto b = static_cast<Eigen::Index>(s.size());
  MatrixXd g(b, b);
  for (Eigen::Index a = 0; a < b; ++a) {
    for (Eigen::Index c = a; c < b; ++c) {
      const auto& sa = s[static_cast<std::size_t>(a)].values;
      const auto& sc = s[static_cast<std::size_t>(c)].values;
      double acc = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * sa[i] * sc[i];
      g(a, c) = g(c, a) = acc / static_cast<double>(w.size());
    }
  }
  return g;
}

// P(k, a) = pi_k(S_a) for k = 0..k_end.
MatrixXd project_path(const TimeField& path, const std::vector<TestFn>& s, std::size_t k_end) {
  MatrixXd p(static_cast<Eigen::Index>(k_end + 1), static_cast<Eigen::Index>(s.size()));
  for (std::size_t k = 0; k <= k_end; ++k) {
    for (std::size_t a = 0; a < s.size(); ++a) {
      p(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(a)) =
          pair_slice(path.row(k), s[a].values);
    }
  }
  return p;
}

// Pathspace Gram <<S_a T_b, S_c T_d>> over nodes 0..k_end, weighted by rho:
// sum_k w_k T_b(k) T_d(k) <S_a|S_c>_{rho_k}. Per-pair integrands are time
// independent, so each bracket is one weighted sum per time node.
MatrixXd tensor_gram(const std::vector<TestFn>& s, const std::vector<std::vector<double>>& tp,
                     const std::vector<double>& w, const RateKernel& kernel, const TimeField& rho,
                     std::size_t k_end) {
  const std::size_t nb = s.size(), nt = tp.size();
  const std::size_t n_pairs = nb * (nb + 1) / 2;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(n_pairs);
  for (std::size_t a = 0; a < nb; ++a) {
    for (std::size_t c = a; c < nb; ++c) pairs.emplace_back(a, c);
  }
  // bracket[p][k] = <S_a|S_c>_{rho_k}
  std::vector<std::vector<double>> bracket(n_pairs, std::vector<double>(k_end + 1));
  const auto np = static_cast<std::ptrdiff_t>(n_pairs);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t p = 0; p < np; ++p) {
    const auto [a, c] = pairs[static_cast<std::size_t>(p)];
    const auto integrand = carre_integrand(s[a].values, s[c].values, kernel);
    for (std::size_t k = 0; k <= k_end; ++k) {
      bracket[static_cast<std::size_t>(p)][k] = grid_pair(rho.row(k), integrand);
    }
  }
  const auto dim = static_cast<Eigen::Index>(nb * nt);
  MatrixXd g = MatrixXd::Zero(dim, dim);
  for (std::size_t p = 0; p < n_pairs; ++p) {
    const auto [a, c] = pairs[p];
    for (std::size_t b = 0; b < nt; ++b) {
      for (std::size_t d = 0; d < nt; ++d) {
        double acc = 0.0;
        for (std::size_t k = 0; k <= k_end; ++k) acc += w[k] * tp[b][k] * tp[d][k] * bracket[p][k];
        const auto i = static_cast<Eigen::Index>(a * nt + b);
        const auto j = static_cast<Eigen::Index>(c * nt + d);
        g(i, j) = acc;
        g(j, i) = acc;
      }
    }
  }
  return g;
}

// Coefficient vector of the part of the dynamic functional that is linear in G:
// pi_T(G_T) - pi_0(G_0) - int pi_s(d_s G_s) ds, and, when with_drift is set,
// additionally - int pi_s((P1 - P2) G_s) ds.
VectorXd dynamic_linear(const TimeField& pi, const BasisSet& basis, const RateKernel& kernel,
                        bool with_drift) {
  const auto& s = basis.spatial();
  const auto& tp = basis.temporal();
  const auto& dtp = basis.temporal_derivative();
  const std::size_t last = pi.n_time();
  const auto w = trapezoid_weights(pi.n_time(), pi.t_max());
  const MatrixXd p = project_path(pi, s, last);
  MatrixXd q;
  if (with_drift) {
    std::vector<TestFn> drift;
    drift.reserve(s.size());
    for (const auto& sa : s) drift.push_back(apply_P1_minus_P2(kernel, sa));
    q = project_path(pi, drift, last);
  }
  const std::size_t nt = tp.size();
  VectorXd l(static_cast<Eigen::Index>(basis.dim()));
  for (std::size_t a = 0; a < s.size(); ++a) {
    const auto ai = static_cast<Eigen::Index>(a);
    for (std::size_t b = 0; b < nt; ++b) {
      double v = tp[b][last] * p(static_cast<Eigen::Index>(last), ai) - tp[b][0] * p(0, ai);
      for (std::size_t k = 0; k <= last; ++k) {
        const auto ki = static_cast<Eigen::Index>(k);
        double integrand = dtp[b][k] * p(ki, ai);
        if (with_drift) integrand += tp[b][k] * q(ki, ai);
        v -= w[k] * integrand;
      }
      l[static_cast<Eigen::Index>(a * nt + b)] = v;
    }
  }
  return l;
}

void check_path(const MeasurePath& pi, const BasisSet& basis, const RateKernel& kernel,
                const char* what) {
  const Grid g = basis.grid();
  if (pi.density.n_space() != g.n_space || pi.density.n_time() != g.n_time ||
      pi.density.t_max() != g.t_max) {
    throw DimensionMismatch(std::string(what) + ": path grid differs from the basis grid");
  }
  require_same_size(kernel.size(), g.n_space, what);
}

void check_nonnegative(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (x < 0.0) throw std::invalid_argument(std::string(what) + ": negative density");
  }
}

}  // namespace

MeasurePath::MeasurePath(DensityPath d, PathScale s) : density(std::move(d)), scale(s) {
  if (scale == PathScale::occupation) check_nonnegative(density.data(), "MeasurePath");
}

BasisSet::BasisSet(const Grid& grid, std::size_t n_spatial, std::size_t n_temporal)
    : grid_(grid) {
  if (n_spatial == 0 || n_temporal == 0) throw std::invalid_argument("BasisSet: empty family");
  for (std::size_t a = 0; a < n_spatial; ++a) {
    spatial_.push_back(TestFn::sample(grid.n_space, [a](double x) {
      return std::cos(static_cast<double>(a) * std::numbers::pi * x);
    }));
  }
  temporal_ = bernstein(n_temporal, grid.n_time, grid.dt());
  for (const auto& t : temporal_) temporal_dt_.push_back(time_derivative(t, grid.dt()));
}

BasisSet::BasisSet(const Grid& grid, std::vector<TestFn> spatial, std::size_t n_temporal)
    : grid_(grid), spatial_(std::move(spatial)) {
  if (spatial_.empty() || n_temporal == 0) throw std::invalid_argument("BasisSet: empty family");
  for (const auto& s : spatial_) require_same_size(s.size(), grid.n_space, "BasisSet");
  temporal_ = bernstein(n_temporal, grid.n_time, grid.dt());
  for (const auto& t : temporal_) temporal_dt_.push_back(time_derivative(t, grid.dt()));
}

std::vector<std::vector<double>> BasisSet::bernstein(std::size_t count, std::size_t k_end,
                                                     double dt) {
  std::vector<std::vector<double>> out(count, std::vector<double>(k_end + 1));
  const std::size_t deg = count - 1;
  const double t_end = static_cast<double>(k_end) * dt;
  for (std::size_t j = 0; j <= k_end; ++j) {
    const double s = k_end == 0 ? 0.0 : static_cast<double>(j) * dt / t_end;
    for (std::size_t b = 0; b < count; ++b) {
      const double binom = std::exp(std::lgamma(static_cast<double>(deg) + 1.0) -
                                    std::lgamma(static_cast<double>(b) + 1.0) -
                                    std::lgamma(static_cast<double>(deg - b) + 1.0));
      out[b][j] = std::round(binom) * std::pow(s, static_cast<double>(b)) *
                  std::pow(1.0 - s, static_cast<double>(deg - b));
    }
  }
  return out;
}

TestFn BasisSet::combine_spatial(std::span<const double> coeffs) const {
  require_same_size(coeffs.size(), n_spatial(), "BasisSet::combine_spatial");
  TestFn out(grid_.n_space, 0.0);
  for (std::size_t a = 0; a < coeffs.size(); ++a) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += coeffs[a] * spatial_[a][i];
  }
  return out;
}

SpaceTimeFn BasisSet::combine(std::span<const double> coeffs) const {
  require_same_size(coeffs.size(), dim(), "BasisSet::combine");
  SpaceTimeFn out(grid_);
  const std::size_t nt = n_temporal();
  std::vector<double> sx(grid_.n_space);
  for (std::size_t k = 0; k <= grid_.n_time; ++k) {
    std::fill(sx.begin(), sx.end(), 0.0);
    for (std::size_t a = 0; a < n_spatial(); ++a) {
      double c = 0.0;
      for (std::size_t b = 0; b < nt; ++b) c += coeffs[a * nt + b] * temporal_[b][k];
      if (c == 0.0) continue;
      for (std::size_t i = 0; i < sx.size(); ++i) sx[i] += c * spatial_[a][i];
    }
    std::copy(sx.begin(), sx.end(), out.row(k).begin());
  }
  return out;
}

double BasisSet::spatial_condition() const {
  return condition_number(
      weighted_spatial_gram(spatial_, std::vector<double>(grid_.n_space, 1.0)));
}

double BasisSet::temporal_condition() const {
  const auto w = trapezoid_weights(grid_.n_time, grid_.t_max);
  const auto nt = static_cast<Eigen::Index>(temporal_.size());
  MatrixXd g(nt, nt);
  for (Eigen::Index b = 0; b < nt; ++b) {
    for (Eigen::Index d = 0; d < nt; ++d) {
      double acc = 0.0;
      for (std::size_t k = 0; k < w.size(); ++k) {
        acc += w[k] * temporal_[static_cast<std::size_t>(b)][k] *
               temporal_[static_cast<std::size_t>(d)][k];
      }
      g(b, d) = acc;
    }
  }
  return condition_number(g);
}

double I_ini_closed(const TestFn& g, const InitialProfile& profile) {
  require_same_size(g.size(), profile.size(), "I_ini_closed");
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) s += profile[i] * g[i] * g[i];
  return 0.5 * s / static_cast<double>(g.size());
}

IniResult I_ini_variational(std::span<const double> nu, const InitialProfile& profile,
                            const BasisSet& basis) {
  require_same_size(nu.size(), profile.size(), "I_ini_variational");
  require_same_size(nu.size(), basis.grid().n_space, "I_ini_variational");
  const auto& s = basis.spatial();
  const MatrixXd m = weighted_spatial_gram(s, profile.values());
  VectorXd l(static_cast<Eigen::Index>(s.size()));
  for (std::size_t a = 0; a < s.size(); ++a) {
    l[static_cast<Eigen::Index>(a)] = pair_slice(nu, s[a].values);
  }
  const Eigen::SelfAdjointEigenSolver<MatrixXd> es(m, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() <= kPinvCutoff * es.eigenvalues().maxCoeff()) {
    throw NumericalError("I_ini_variational: degenerate basis (singular Gram)");
  }
  const VectorXd c = m.ldlt().solve(l);
  IniResult out;
  out.value = 0.5 * l.dot(c);
  out.coefficients = to_std(c);
  out.witness = basis.combine_spatial(out.coefficients);
  return out;
}

double linear_functional_l(const MeasurePath& pi, const SpaceTimeFn& G, const RateKernel& kernel,
                           const DensityPath& mu) {
  const auto& p = pi.density;
  if (!p.same_grid(G) || !p.same_grid(mu)) {
    throw DimensionMismatch("linear_functional_l: time/space grids differ");
  }
  require_same_size(kernel.size(), G.n_space(), "linear_functional_l");
  const std::size_t last = G.n_time();
  const auto w = trapezoid_weights(G.n_time(), G.t_max());
  const SpaceTimeFn dG = time_derivative(G);
  std::vector<double> drift(G.n_space());
  double v = pair_slice(p.row(last), G.row(last)) - pair_slice(p.row(0), G.row(0));
  for (std::size_t k = 0; k <= last; ++k) {
    apply_P1_minus_P2(kernel, G.row(k), drift);
    v -= w[k] * (pair_slice(p.row(k), dG.row(k)) + pair_slice(p.row(k), drift));
  }
  return v - 0.5 * pathspace_inner(G, G, kernel, mu);
}

DynResult I_dyn_variational(const MeasurePath& pi, const RateKernel& kernel,
                            const DensityPath& mu, const BasisSet& basis) {
  check_path(pi, basis, kernel, "I_dyn_variational");
  if (!pi.density.same_grid(mu)) throw DimensionMismatch("I_dyn_variational: mu grid differs");
  const VectorXd l = dynamic_linear(pi.density, basis, kernel, true);
  const auto w = trapezoid_weights(mu.n_time(), mu.t_max());
  const MatrixXd m =
      tensor_gram(basis.spatial(), basis.temporal(), w, kernel, mu, mu.n_time());
  const PsdSolve sol = psd_solve(m, l, "I_dyn_variational");
  DynResult out;
  out.value = 0.5 * sol.quad;
  out.coefficients = to_std(sol.x);
  out.witness = basis.combine(out.coefficients);
  out.gram_min_eigen = sol.min_eig;
  out.gram_max_eigen = sol.max_eig;
  out.gram_rank = sol.rank;
  return out;
}

IniResult J_ini(std::span<const double> nu, const InitialProfile& profile, const BasisSet& basis,
                const OptimizerConfig& cfg) {
  require_same_size(nu.size(), profile.size(), "J_ini");
  require_same_size(nu.size(), basis.grid().n_space, "J_ini");
  check_nonnegative(nu, "J_ini");
  const auto& s = basis.spatial();
  const std::size_t n = nu.size(), nb = s.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  VectorXd l(static_cast<Eigen::Index>(nb));
  for (std::size_t a = 0; a < nb; ++a) l[static_cast<Eigen::Index>(a)] = pair_slice(nu, s[a].values);

  auto field = [&](const VectorXd& c) {
    std::vector<double> f(n, 0.0);
    for (std::size_t a = 0; a < nb; ++a) {
      const double ca = c[static_cast<Eigen::Index>(a)];
      for (std::size_t i = 0; i < n; ++i) f[i] += ca * s[a][i];
    }
    return f;
  };
  auto objective = [&](const VectorXd& c) {
    const auto f = field(c);
    double pen = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (f[i] > kExpArgumentCap) return -std::numeric_limits<double>::infinity();
      pen += profile[i] * std::expm1(f[i]);
    }
    return l.dot(c) - pen * inv_n;
  };

  VectorXd c = VectorXd::Zero(static_cast<Eigen::Index>(nb));
  // Warm start from the unconstrained optimum log(nu / phi), projected on the span.
  if (std::all_of(nu.begin(), nu.end(), [](double x) { return x > 0.0; })) {
    std::vector<double> target(n);
    for (std::size_t i = 0; i < n; ++i) target[i] = std::log(nu[i] / profile[i]);
    const MatrixXd gs = weighted_spatial_gram(s, std::vector<double>(n, 1.0));
    VectorXd rhs(static_cast<Eigen::Index>(nb));
    for (std::size_t a = 0; a < nb; ++a) rhs[static_cast<Eigen::Index>(a)] = pair_slice(target, s[a].values);
    const VectorXd c0 = gs.ldlt().solve(rhs);
    if (c0.allFinite() && objective(c0) > objective(c)) c = c0;
  }

  IniResult out;
  out.converged = false;
  double value = objective(c);
  for (std::size_t it = 0; it < cfg.newton_max_iterations; ++it) {
    out.iterations = it + 1;
    const auto f = field(c);
    std::vector<double> wexp(n);
    for (std::size_t i = 0; i < n; ++i) wexp[i] = profile[i] * std::exp(f[i]);
    VectorXd grad = l;
    for (std::size_t a = 0; a < nb; ++a) {
      grad[static_cast<Eigen::Index>(a)] -= pair_slice(wexp, s[a].values);
    }
    const MatrixXd h = weighted_spatial_gram(s, wexp);  // minus the Hessian
    const VectorXd step = h.ldlt().solve(grad);
    const double decrement = grad.dot(step);
    if (grad.lpNorm<Eigen::Infinity>() < 1e-14 || decrement < 1e-24) {
      out.converged = true;
      break;
    }
    double t = 1.0;
    double trial = objective(c + step);
    while (!(trial >= value + 1e-4 * t * decrement) && t > 1e-12) {
      t *= 0.5;
      trial = objective(c + t * step);
    }
    if (t <= 1e-12) {
      // No further ascent possible at double precision.
      out.converged = decrement < 1e-16;
      break;
    }
    c += t * step;
    value = trial;
  }
  out.value = std::max(0.0, value);
  out.coefficients = to_std(c);
  out.witness = basis.combine_spatial(out.coefficients);
  return out;
}

DynResult J_dyn(const MeasurePath& pi, const RateKernel& kernel, const BasisSet& basis,
                const OptimizerConfig& cfg) {
  check_path(pi, basis, kernel, "J_dyn");
  const TimeField& p = pi.density;
  check_nonnegative(p.data(), "J_dyn");
  const std::size_t n = p.n_space(), last = p.n_time();
  const double inv_n = 1.0 / static_cast<double>(n);
  const auto w = trapezoid_weights(p.n_time(), p.t_max());
  const VectorXd l = dynamic_linear(p, basis, kernel, false);
  const auto& rs = kernel.row_sums();
  const auto& s = basis.spatial();
  const auto& tp = basis.temporal();
  const std::size_t nb = s.size(), nt = tp.size();

  // Returns the objective; fills grad when requested.
  auto evaluate = [&](const VectorXd& c, VectorXd* grad) {
    const SpaceTimeFn G = basis.combine(to_std(c));
    double penalty = 0.0;
    if (grad) *grad = l;
    std::vector<double> e_plus(n), e_minus(n), ke(n), kt(n), u(n), tmp(n);
    for (std::size_t k = 0; k <= last; ++k) {
      const auto g = G.row(k);
      const auto rho = p.row(k);
      const auto [lo, hi] = std::minmax_element(g.begin(), g.end());
      if (*hi - *lo > kExpArgumentCap) return -std::numeric_limits<double>::infinity();
      const double shift = *hi;
      for (std::size_t i = 0; i < n; ++i) {
        e_plus[i] = std::exp(g[i] - shift);
        e_minus[i] = std::exp(shift - g[i]);
      }
      kernel.multiply(e_plus, ke);
      double pb = 0.0;
      for (std::size_t i = 0; i < n; ++i) pb += rho[i] * (e_minus[i] * ke[i] - rs[i]);
      penalty += w[k] * pb * inv_n * inv_n;
      if (!grad) continue;
      for (std::size_t i = 0; i < n; ++i) tmp[i] = rho[i] * e_minus[i];
      kernel.multiply_transpose(tmp, kt);
      for (std::size_t i = 0; i < n; ++i) {
        u[i] = (e_plus[i] * kt[i] - rho[i] * e_minus[i] * ke[i]) * inv_n * inv_n;
      }
      for (std::size_t a = 0; a < nb; ++a) {
        double su = 0.0;
        for (std::size_t i = 0; i < n; ++i) su += u[i] * s[a][i];
        for (std::size_t b = 0; b < nt; ++b) {
          (*grad)[static_cast<Eigen::Index>(a * nt + b)] -= w[k] * tp[b][k] * su;
        }
      }
    }
    return l.dot(c) - penalty;
  };

  // Precondition with the curvature at G = 0, the pathspace Gram weighted by pi.
  const MatrixXd h0 = tensor_gram(s, tp, w, kernel, p, last);
  const Eigen::SelfAdjointEigenSolver<MatrixXd> es(h0);
  const double top = std::max(es.eigenvalues().maxCoeff(), 1e-300);
  VectorXd inv_ev(es.eigenvalues().size());
  for (Eigen::Index k = 0; k < inv_ev.size(); ++k) {
    inv_ev[k] = 1.0 / (std::max(es.eigenvalues()[k], 0.0) + 1e-8 * top);
  }
  auto precondition = [&](const VectorXd& g) -> VectorXd {
    return es.eigenvectors() * (inv_ev.asDiagonal() * (es.eigenvectors().transpose() * g));
  };

  DynResult out;
  out.converged = false;
  out.gram_min_eigen = es.eigenvalues().minCoeff();
  out.gram_max_eigen = es.eigenvalues().maxCoeff();
  VectorXd c = VectorXd::Zero(static_cast<Eigen::Index>(basis.dim()));
  VectorXd grad;
  double value = evaluate(c, &grad);
  for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
    out.iterations = it;
    out.gradient_norm = grad.norm();
    if (out.gradient_norm <= cfg.gradient_tolerance) {
      out.converged = true;
      break;
    }
    const VectorXd d = precondition(grad);
    const double slope = grad.dot(d);
    double t = 1.0;
    double trial = evaluate(c + d, nullptr);
    while (!(trial >= value + 1e-4 * t * slope) && t > 1e-14) {
      t *= 0.5;
      trial = evaluate(c + t * d, nullptr);
    }
    if (t <= 1e-14) break;  // stalled at rounding level
    c += t * d;
    value = evaluate(c, &grad);
    out.iterations = it + 1;
    out.gradient_norm = grad.norm();
  }
  if (!out.converged && out.gradient_norm <= cfg.gradient_tolerance) out.converged = true;
  out.value = std::max(0.0, value);
  out.coefficients = to_std(c);
  out.witness = basis.combine(out.coefficients);
  return out;
}

MarginalRate marginal_rate(const TestFn& f, double x_level, double t_star,
                           const RateKernel& kernel, const InitialProfile& profile,
                           const DensityPath& mu, const BasisSet& basis) {
  const std::size_t n = f.size();
  require_same_size(n, kernel.size(), "marginal_rate");
  require_same_size(n, profile.size(), "marginal_rate");
  require_same_size(n, mu.n_space(), "marginal_rate");
  const double dt = mu.dt();
  const double kd = t_star / dt;
  const auto k_star = static_cast<std::size_t>(std::llround(kd));
  if (t_star < 0.0 || k_star > mu.n_time() || std::abs(kd - static_cast<double>(k_star)) > 1e-9) {
    throw std::invalid_argument("marginal_rate: t_star is not a node of the time grid");
  }
  const auto& s = basis.spatial();
  const std::size_t nb = s.size(), nt = basis.n_temporal();

  // h_k = e^{(t* - t_k)(P1 - P2)} f, propagated backward from h_{k*} = f.
  std::vector<std::vector<double>> h(k_star + 1);
  h[k_star] = f.values;
  for (std::size_t k = k_star; k > 0; --k) h[k - 1] = semigroup_apply(h[k], kernel, dt);

  // Initial block: L_a = int phi S_a h_0, M = phi-weighted Gram.
  const MatrixXd m0 = weighted_spatial_gram(s, profile.values());
  VectorXd l0(static_cast<Eigen::Index>(nb));
  {
    std::vector<double> ph(n);
    for (std::size_t i = 0; i < n; ++i) ph[i] = profile[i] * h[0][i];
    for (std::size_t a = 0; a < nb; ++a) l0[static_cast<Eigen::Index>(a)] = pair_slice(ph, s[a].values);
  }
  const PsdSolve sol0 = psd_solve(m0, l0, "marginal_rate");
  double sigma2 = sol0.quad;

  MarginalRate out;
  out.witness_F = SpaceTimeFn(mu.grid());
  VectorXd c1;
  std::vector<std::vector<double>> tp;
  if (k_star > 0) {
    tp = BasisSet::bernstein(nt, k_star, dt);
    const auto w = trapezoid_weights(k_star, t_star);
    VectorXd l1 = VectorXd::Zero(static_cast<Eigen::Index>(nb * nt));
    for (std::size_t k = 0; k <= k_star; ++k) {
      for (std::size_t a = 0; a < nb; ++a) {
        const double br = carre_bracket(s[a].values, h[k], kernel, mu.row(k));
        for (std::size_t b = 0; b < nt; ++b) {
          l1[static_cast<Eigen::Index>(a * nt + b)] += w[k] * tp[b][k] * br;
        }
      }
    }
    const MatrixXd m1 = tensor_gram(s, tp, w, kernel, mu, k_star);
    const PsdSolve sol1 = psd_solve(m1, l1, "marginal_rate");
    sigma2 += sol1.quad;
    c1 = sol1.x;
  }
  if (!(sigma2 >= 1e-12)) {
    throw NumericalError("marginal_rate: sigma^2 below 1e-12 (degenerate direction)");
  }
  out.sigma2 = sigma2;
  out.rate = x_level * x_level / (2.0 * sigma2);
  const double scale = x_level / sigma2;
  out.witness_g = basis.combine_spatial(to_std(sol0.x * scale));
  if (k_star > 0) {
    for (std::size_t k = 0; k <= k_star; ++k) {
      for (std::size_t a = 0; a < nb; ++a) {
        double coef = 0.0;
        for (std::size_t b = 0; b < nt; ++b) {
          coef += c1[static_cast<Eigen::Index>(a * nt + b)] * tp[b][k];
        }
        coef *= scale;
        for (std::size_t i = 0; i < n; ++i) out.witness_F(k, i) += coef * s[a][i];
      }
    }
  }
  out.initial_tilt = TestFn(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) out.initial_tilt[i] = out.witness_g[i] * profile[i];
  return out;
}

nlohmann::json to_json(const RateBreakdown& r) {
  nlohmann::json j;
  const bool quad = r.kind == RateBreakdown::Kind::quadratic;
  j[quad ? "i_ini" : "j_ini"] = r.ini;
  j[quad ? "i_dyn" : "j_dyn"] = r.dyn;
  j["basis"] = {{"B", r.basis_spatial}, {"Bt", r.basis_temporal}};
  if (r.witness_g) j["witness_g"] = r.witness_g->values;
  if (r.witness_F) {
    auto rows = nlohmann::json::array();
    for (std::size_t k = 0; k < r.witness_F->n_rows(); ++k) {
      const auto row = r.witness_F->row(k);
      rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    j["witness_F"] = std::move(rows);
  }
  return j;
}

}  // namespace ehrenfest
