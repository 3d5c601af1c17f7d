#include "ehrenfest/semigroup.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <unsupported/Eigen/MatrixFunctions>

#include "ehrenfest/table_io.hpp"

namespace ehrenfest {

namespace {

double inf_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double sum_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

void check_mass(double initial, double current, double t, const char* what) {
  if (std::abs(current - initial) > 1e-8 * std::max(std::abs(initial), 1e-300)) {
    throw NumericalError(std::string(what) + ": total mass drifted from " +
                         format_roundtrip(initial) + " to " + format_roundtrip(current) +
                         " at t=" + format_roundtrip(t));
  }
}

// One classical RK4 step of y' = A* y.
void rk4_adjoint_step(const RateKernel& kernel, std::vector<double>& y, double h,
                      std::vector<double>& k1, std::vector<double>& k2, std::vector<double>& k3,
                      std::vector<double>& k4, std::vector<double>& tmp) {
  const std::size_t n = y.size();
  apply_adjoint(kernel, y, k1);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
  apply_adjoint(kernel, tmp, k2);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
  apply_adjoint(kernel, tmp, k3);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * k3[i];
  apply_adjoint(kernel, tmp, k4);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
}

template <class Apply>
std::vector<double> taylor_exp(std::span<const double> v, double t, double op_norm,
                               Apply&& apply) {
  std::vector<double> acc(v.begin(), v.end());
  if (t == 0.0) return acc;
  if (t < 0.0) throw std::invalid_argument("semigroup: negative time");
  const auto n_sub = static_cast<std::size_t>(std::max(1.0, std::ceil(t * op_norm / 0.5)));
  const double h = t / static_cast<double>(n_sub);
  std::vector<double> term(acc.size()), next(acc.size());
  for (std::size_t s = 0; s < n_sub; ++s) {
    term = acc;
    for (int n = 1; n < 200; ++n) {
      apply(term, next);
      const double c = h / n;
      for (std::size_t i = 0; i < next.size(); ++i) term[i] = c * next[i];
      for (std::size_t i = 0; i < next.size(); ++i) acc[i] += term[i];
      const double an = inf_norm(acc);
      if (an == 0.0 || inf_norm(term) < 1e-14 * an) break;
    }
  }
  return acc;
}

}  // namespace

MoleculeGenerator::MoleculeGenerator(const RateKernel& kernel, const Grid& grid)
    : kernel_(kernel), grid_(grid) {
  require_same_size(kernel.size(), grid.n_space, "build_generator");
  const std::size_t n = kernel.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  exit_rates_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    exit_rates_[i] = (kernel.row_sums()[i] - kernel.diagonal()[i]) * inv_n;
  }
  uniformization_rate_ = *std::max_element(exit_rates_.begin(), exit_rates_.end());
}

double MoleculeGenerator::q(std::size_t i, std::size_t j) const {
  if (i == j) return -exit_rates_[i];
  return kernel_(i, j) / static_cast<double>(size());
}

void MoleculeGenerator::apply_left(std::span<const double> v, std::span<double> out) const {
  const std::size_t n = size();
  require_same_size(v.size(), n, "MoleculeGenerator::apply_left");
  require_same_size(out.size(), n, "MoleculeGenerator::apply_left");
  std::vector<double> kt(n);
  kernel_.multiply_transpose(v, kt);
  const double inv_n = 1.0 / static_cast<double>(n);
  const auto& diag = kernel_.diagonal();
  for (std::size_t j = 0; j < n; ++j) {
    out[j] = (kt[j] - diag[j] * v[j]) * inv_n - v[j] * exit_rates_[j];
  }
}

void MoleculeGenerator::apply_right(std::span<const double> v, std::span<double> out) const {
  const std::size_t n = size();
  require_same_size(v.size(), n, "MoleculeGenerator::apply_right");
  require_same_size(out.size(), n, "MoleculeGenerator::apply_right");
  std::vector<double> kv(n);
  kernel_.multiply(v, kv);
  const double inv_n = 1.0 / static_cast<double>(n);
  const auto& diag = kernel_.diagonal();
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = (kv[i] - diag[i] * v[i]) * inv_n - v[i] * exit_rates_[i];
  }
}

Eigen::MatrixXd MoleculeGenerator::dense() const {
  const std::size_t n = size();
  Eigen::MatrixXd m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) m(i, j) = q(i, j);
  }
  return m;
}

MoleculeGenerator build_generator(const RateKernel& kernel, const Grid& grid) {
  return MoleculeGenerator(kernel, grid);
}

std::vector<double> uniformization_weights(double lambda_t, double tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("uniformization: tol must be positive");
  if (lambda_t < 0.0) throw std::invalid_argument("uniformization: negative time");
  if (lambda_t == 0.0) return {1.0};
  const double log_l = std::log(lambda_t);
  std::vector<double> w;
  for (std::size_t k = 0;; ++k) {
    const double kd = static_cast<double>(k);
    w.push_back(std::exp(-lambda_t + kd * log_l - std::lgamma(kd + 1.0)));
    // Geometric bound on the tail beyond k once the ratio L/(m+1) < 1.
    if (kd + 2.0 > lambda_t) {
      const double next = std::exp(-lambda_t + (kd + 1.0) * log_l - std::lgamma(kd + 2.0));
      const double tail = next / (1.0 - lambda_t / (kd + 2.0));
      if (tail < tol) break;
    }
  }
  return w;
}

TransitionMatrix transition_matrix(const MoleculeGenerator& gen, double t, double tol) {
  if (t < 0.0) throw std::invalid_argument("transition_matrix: negative time");
  const auto n = static_cast<Eigen::Index>(gen.size());
  const double lam = gen.uniformization_rate();
  const auto w = uniformization_weights(lam * t, tol);
  const Eigen::MatrixXd step = Eigen::MatrixXd::Identity(n, n) + gen.dense() / lam;
  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd acc = w[0] * power;
  for (std::size_t k = 1; k < w.size(); ++k) {
    power = power * step;
    acc.noalias() += w[k] * power;
  }
  return {std::move(acc), t, w.size() - 1};
}

std::vector<double> propagate_left(const MoleculeGenerator& gen, std::span<const double> v,
                                   double t, double tol) {
  const double lam = gen.uniformization_rate();
  const auto w = uniformization_weights(lam * t, tol);
  const std::size_t n = gen.size();
  std::vector<double> cur(v.begin(), v.end()), q(n), acc(n);
  for (std::size_t i = 0; i < n; ++i) acc[i] = w[0] * cur[i];
  for (std::size_t k = 1; k < w.size(); ++k) {
    gen.apply_left(cur, q);
    for (std::size_t i = 0; i < n; ++i) {
      cur[i] += q[i] / lam;
      acc[i] += w[k] * cur[i];
    }
  }
  return acc;
}

MeanField mean_field(const InitialProfile& profile, const MoleculeGenerator& gen, double tol) {
  require_same_size(profile.size(), gen.size(), "mean_field");
  const Grid& g = gen.grid();
  MeanField m(g);
  std::vector<double> cur(profile.values().begin(), profile.values().end());
  const double mass0 = profile.total();
  std::copy(cur.begin(), cur.end(), m.row(0).begin());
  for (std::size_t k = 1; k <= g.n_time; ++k) {
    cur = propagate_left(gen, cur, g.t(k) - g.t(k - 1), tol);
    check_mass(mass0, sum_of(cur), g.t(k), "mean_field");
    std::copy(cur.begin(), cur.end(), m.row(k).begin());
  }
  return m;
}

std::vector<double> mean_field_at(const InitialProfile& profile, const MoleculeGenerator& gen,
                                  double t, double tol) {
  require_same_size(profile.size(), gen.size(), "mean_field_at");
  auto out = propagate_left(gen, profile.values(), t, tol);
  check_mass(profile.total(), sum_of(out), t, "mean_field_at");
  return out;
}

double mean_field_bound(const RateKernel& kernel, const InitialProfile& profile, double t_max) {
  return std::exp(2.0 * kernel.max_norm() * t_max) * profile.max();
}

DensityPath hydro_solve(const RateKernel& kernel, const InitialProfile& profile, const Grid& grid) {
  require_same_size(kernel.size(), grid.n_space, "hydro_solve");
  require_same_size(profile.size(), grid.n_space, "hydro_solve");
  const std::size_t n = grid.n_space;
  DensityPath rho(grid);
  std::vector<double> y(profile.values().begin(), profile.values().end());
  std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
  const double mass0 = sum_of(y);
  std::copy(y.begin(), y.end(), rho.row(0).begin());
  const double h = grid.dt();
  for (std::size_t k = 1; k <= grid.n_time; ++k) {
    rk4_adjoint_step(kernel, y, h, k1, k2, k3, k4, tmp);
    check_mass(mass0, sum_of(y), grid.t(k), "hydro_solve");
    std::copy(y.begin(), y.end(), rho.row(k).begin());
  }
  return rho;
}

std::vector<double> hydro_final(const RateKernel& kernel, const InitialProfile& profile, double t,
                                std::size_t n_steps) {
  require_same_size(kernel.size(), profile.size(), "hydro_final");
  if (n_steps == 0) throw std::invalid_argument("hydro_final: n_steps must be positive");
  const std::size_t n = kernel.size();
  std::vector<double> y(profile.values().begin(), profile.values().end());
  std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
  const double mass0 = sum_of(y);
  const double h = t / static_cast<double>(n_steps);
  for (std::size_t k = 0; k < n_steps; ++k) rk4_adjoint_step(kernel, y, h, k1, k2, k3, k4, tmp);
  check_mass(mass0, sum_of(y), t, "hydro_final");
  return y;
}

std::vector<double> adjoint_semigroup_apply(std::span<const double> nu, const RateKernel& kernel,
                                            double t) {
  require_same_size(nu.size(), kernel.size(), "adjoint_semigroup_apply");
  return taylor_exp(nu, t, 2.0 * kernel.max_norm(),
                    [&](std::span<const double> in, std::span<double> out) {
                      apply_adjoint(kernel, in, out);
                    });
}

std::vector<double> semigroup_apply(std::span<const double> f, const RateKernel& kernel,
                                    double t) {
  require_same_size(f.size(), kernel.size(), "semigroup_apply");
  return taylor_exp(f, t, 2.0 * kernel.max_norm(),
                    [&](std::span<const double> in, std::span<double> out) {
                      apply_P1_minus_P2(kernel, in, out);
                    });
}

void write_field_csv(std::ostream& out, const TimeField& field) {
  out << "t,x,value\n";
  const double n = static_cast<double>(field.n_space());
  for (std::size_t k = 0; k < field.n_rows(); ++k) {
    const std::string t = format_csv(field.t(k));
    for (std::size_t i = 0; i < field.n_space(); ++i) {
      out << t << ',' << format_csv(static_cast<double>(i + 1) / n) << ','
          << format_csv(field(k, i)) << '\n';
    }
  }
}

namespace serial {

Eigen::MatrixXd transition_matrix_expm(const MoleculeGenerator& gen, double t) {
  const Eigen::MatrixXd qt = gen.dense() * t;
  return qt.exp();
}

MeanField mean_field_rk4(const InitialProfile& profile, const RateKernel& kernel,
                         const Grid& grid) {
  const std::size_t n = grid.n_space;
  const double inv_n = 1.0 / static_cast<double>(n);
  auto rhs = [&](const std::vector<double>& m, std::vector<double>& out) {
    for (std::size_t i = 0; i < n; ++i) {
      double gain = 0.0, rate = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        gain += kernel(j, i) * inv_n * m[j];
        rate += kernel(i, j) * inv_n;
      }
      out[i] = gain - m[i] * rate;
    }
  };
  MeanField out(grid);
  std::vector<double> y(profile.values().begin(), profile.values().end());
  std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
  std::copy(y.begin(), y.end(), out.row(0).begin());
  const double h = grid.dt();
  for (std::size_t k = 1; k <= grid.n_time; ++k) {
    rhs(y, k1);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
    rhs(tmp, k2);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
    rhs(tmp, k3);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * k3[i];
    rhs(tmp, k4);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    std::copy(y.begin(), y.end(), out.row(k).begin());
  }
  return out;
}

}  // namespace serial

}  // namespace ehrenfest
