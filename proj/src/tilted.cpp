#include "ehrenfest/tilted.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "ehrenfest/semigroup.hpp"
#include "ehrenfest/stats.hpp"

namespace ehrenfest {

namespace {

// Gauss-Legendre nodes on [0, 1].
constexpr double kGaussNodes[4] = {
    0.5 * (1.0 - 0.8611363115940526), 0.5 * (1.0 - 0.3399810435848563),
    0.5 * (1.0 + 0.3399810435848563), 0.5 * (1.0 + 0.8611363115940526)};

// Inverse of the Vandermonde matrix V(m, p) = u_m^p at the Gauss nodes.
Eigen::Matrix4d gauss_vandermonde_inverse() {
  Eigen::Matrix4d v;
  for (int m = 0; m < 4; ++m) {
    for (int p = 0; p < 4; ++p) v(m, p) = std::pow(kGaussNodes[m], p);
  }
  return v.inverse();
}

// c_i for one time slice of G. With E_j = expm1(beta (G_j - mean G)),
//   sum_j lambda_ij (e^{beta (G_j - G_i)} - 1) = ((K E)_i - E_i K(1)_i) / (1 + E_i),
// which keeps full relative precision when beta * G is small.
void compensator_rate(std::span<const double> g, const RateKernel& kernel, double beta,
                      std::span<double> out) {
  const std::size_t n = g.size();
  double mean = 0.0;
  for (double v : g) mean += v;
  mean /= static_cast<double>(n);
  std::vector<double> e(n), ke(n);
  for (std::size_t j = 0; j < n; ++j) e[j] = std::expm1(beta * (g[j] - mean));
  kernel.multiply(e, ke);
  const auto& rs = kernel.row_sums();
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = (ke[i] - e[i] * rs[i]) / (1.0 + e[i]) * inv_n;
}

double max_abs_diff(const TimeField& a, const TimeField& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.data().size(); ++k) {
    m = std::max(m, std::abs(a.data()[k] - b.data()[k]));
  }
  return m;
}

}  // namespace

TiltedRateTable::TiltedRateTable(const SpaceTimeFn& G, double beta)
    : G_(G), beta_(beta), time_constant_(G.is_time_constant()) {
  const double exponent = 2.0 * beta * G.sup_norm();
  if (exponent > kExpArgumentCap) {
    throw NumericalError("TiltedRateTable: 2 (a_N/N) ||G|| = " + std::to_string(exponent) +
                         " exceeds the exponent cap");
  }
  bound_ = std::exp(exponent);
}

double TiltedRateTable::multiplier(double t, std::size_t i, std::size_t j) const {
  if (time_constant_) return std::exp(beta_ * (G_(0, j) - G_(0, i)));
  return std::exp(beta_ * (G_.value_at(t, j) - G_.value_at(t, i)));
}

CompensatorTable::CompensatorTable(const SpaceTimeFn& G, const RateKernel& kernel, double beta)
    : n_space_(G.n_space()), t_max_(G.t_max()) {
  require_same_size(G.n_space(), kernel.size(), "CompensatorTable");
  const bool constant = G.is_time_constant();
  n_cells_ = constant ? 1 : G.n_time();
  h_ = t_max_ / static_cast<double>(n_cells_);
  const std::size_t n = n_space_;
  prefix_.assign(n_cells_ * n, 0.0);
  cubic_.assign(n_cells_ * n * 4, 0.0);
  const Eigen::Matrix4d vinv = gauss_vandermonde_inverse();
  std::vector<double> full(n_cells_ * n);
  const auto cells = static_cast<std::ptrdiff_t>(n_cells_);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t cs = 0; cs < cells; ++cs) {
    const auto c = static_cast<std::size_t>(cs);
    std::vector<double> g(n), rate(4 * n);
    for (int m = 0; m < 4; ++m) {
      if (constant) {
        std::copy(G.row(0).begin(), G.row(0).end(), g.begin());
      } else {
        const double u = kGaussNodes[m];
        const auto r0 = G.row(c), r1 = G.row(c + 1);
        for (std::size_t i = 0; i < n; ++i) g[i] = (1.0 - u) * r0[i] + u * r1[i];
      }
      compensator_rate(g, kernel, beta, std::span<double>(rate.data() + m * n, n));
    }
    for (std::size_t i = 0; i < n; ++i) {
      Eigen::Vector4d vals(rate[i], rate[n + i], rate[2 * n + i], rate[3 * n + i]);
      if (constant) vals.setConstant(rate[i]);
      const Eigen::Vector4d coef = vinv * vals;
      double* dst = cubic_.data() + (c * n + i) * 4;
      for (int p = 0; p < 4; ++p) dst[p] = constant && p > 0 ? 0.0 : coef[p];
      if (constant) dst[0] = rate[i];
      full[c * n + i] = h_ * (dst[0] + dst[1] / 2.0 + dst[2] / 3.0 + dst[3] / 4.0);
    }
  }
  for (std::size_t c = 1; c < n_cells_; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      prefix_[c * n + i] = prefix_[(c - 1) * n + i] + full[(c - 1) * n + i];
    }
  }
}

double CompensatorTable::cumulative(std::size_t i, double t) const {
  t = std::clamp(t, 0.0, t_max_);
  auto c = static_cast<std::size_t>(t / h_);
  if (c >= n_cells_) c = n_cells_ - 1;
  const double u = (t - static_cast<double>(c) * h_) / h_;
  const double* p = cubic_.data() + (c * n_space_ + i) * 4;
  const double integral = u * (p[0] + u * (p[1] / 2.0 + u * (p[2] / 3.0 + u * p[3] / 4.0)));
  return prefix_[c * n_space_ + i] + h_ * integral;
}

std::vector<double> CompensatorTable::rate_at(const SpaceTimeFn& G, const RateKernel& kernel,
                                              double beta, double t) {
  std::vector<double> g(G.n_space()), out(G.n_space());
  G.row_at(t, g);
  compensator_rate(g, kernel, beta, out);
  return out;
}

MartingaleAccumulator::MartingaleAccumulator(const CompensatorTable& table, const SpaceTimeFn& G,
                                             double beta, const UrnState& initial)
    : table_(&table), G_(&G), beta_(beta), counts_(initial.counts),
      since_(initial.size(), 0.0) {
  require_same_size(initial.size(), table.n_space(), "MartingaleAccumulator");
}

void MartingaleAccumulator::settle(std::size_t i, double t) {
  if (counts_[i] != 0) {
    compensator_ += static_cast<double>(counts_[i]) *
                    (table_->cumulative(i, t) - table_->cumulative(i, since_[i]));
  }
  since_[i] = t;
}

void MartingaleAccumulator::on_jump(double t, std::size_t src, std::size_t dst) {
  settle(src, t);
  settle(dst, t);
  --counts_[src];
  ++counts_[dst];
  jump_term_ += beta_ * (G_->value_at(t, dst) - G_->value_at(t, src));
  last_time_ = t;
}

void MartingaleAccumulator::finish(double t_end) {
  for (std::size_t i = 0; i < counts_.size(); ++i) settle(i, t_end);
  last_time_ = t_end;
}

double log_gamma(const TrajectorySnapshots& traj, const CompensatorTable& table,
                 const SpaceTimeFn& G, const ScalingSequence& scaling) {
  if (!traj.jump_log) throw std::invalid_argument("log_gamma: trajectory has no jump log");
  if (traj.t_end < G.t_max()) {
    throw std::invalid_argument("log_gamma: jump log does not cover [0, T0]");
  }
  const std::size_t n = traj.initial.size();
  const double beta = scaling.a(n) / static_cast<double>(n);
  MartingaleAccumulator acc(table, G, beta, traj.initial);
  double prev = 0.0;
  for (const auto& j : *traj.jump_log) {
    if (j.time < prev) throw std::invalid_argument("log_gamma: jump log out of order");
    prev = j.time;
    acc.on_jump(j.time, j.source, j.destination);
  }
  acc.finish(G.t_max());
  return acc.log_value();
}

double log_gamma(const TrajectorySnapshots& traj, const SpaceTimeFn& G, const RateKernel& kernel,
                 const ScalingSequence& scaling) {
  const std::size_t n = kernel.size();
  const CompensatorTable table(G, kernel, scaling.a(n) / static_cast<double>(n));
  return log_gamma(traj, table, G, scaling);
}

TrajectorySnapshots tilted_simulate(const UrnState& state, const Simulator& sim,
                                    const SpaceTimeFn& G, const ScalingSequence& scaling,
                                    std::span<const double> obs_times, RngStream& rng,
                                    bool record_jumps) {
  const std::size_t n = state.size();
  require_same_size(G.n_space(), n, "tilted_simulate");
  const TiltedRateTable table(G, scaling.a(n) / static_cast<double>(n));
  NullObserver obs;
  return sim.run_with(state, obs_times, rng, record_jumps, TiltedDynamics{&table}, obs);
}

std::vector<double> xi_density(std::span<const double> G, const RateKernel& kernel,
                               std::span<const double> rho) {
  const std::size_t n = kernel.size();
  require_same_size(G.size(), n, "xi_density");
  require_same_size(rho.size(), n, "xi_density");
  // The bracket is invariant under constant shifts of G; centring limits cancellation.
  double mean = 0.0;
  for (double v : G) mean += v;
  mean /= static_cast<double>(n);
  std::vector<double> g(n), rg(n), kt_rho(n), kt_rg(n), kg(n), out(n);
  for (std::size_t i = 0; i < n; ++i) {
    g[i] = G[i] - mean;
    rg[i] = rho[i] * g[i];
  }
  kernel.multiply_transpose(rho, kt_rho);
  kernel.multiply_transpose(rg, kt_rg);
  kernel.multiply(g, kg);
  const auto& rs = kernel.row_sums();
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t l = 0; l < n; ++l) {
    out[l] = (g[l] * kt_rho[l] - kt_rg[l] - rho[l] * kg[l] + rho[l] * g[l] * rs[l]) * inv_n;
  }
  return out;
}

ThetaSolution solve_theta(const TestFn& f, const SpaceTimeFn& G, const RateKernel& kernel,
                          const DensityPath& mu) {
  if (!G.same_grid(mu)) throw DimensionMismatch("solve_theta: G and mu grids differ");
  const std::size_t n = mu.n_space();
  require_same_size(f.size(), n, "solve_theta");
  require_same_size(kernel.size(), n, "solve_theta");
  const double h = mu.dt();
  DensityPath direct(mu.grid()), duhamel(mu.grid());
  std::copy(f.values.begin(), f.values.end(), direct.row(0).begin());
  std::copy(f.values.begin(), f.values.end(), duhamel.row(0).begin());

  std::vector<double> y(f.values), z(f.values);
  std::vector<double> d0(n), d1(n), rho_mid(n), g_mid(n), k1(n), k2(n), k3(n), k4(n), tmp(n);
  std::vector<double> xi_next = xi_density(G.row(0), kernel, mu.row(0));
  for (std::size_t k = 0; k < mu.n_time(); ++k) {
    const auto r0 = mu.row(k), r1 = mu.row(k + 1);
    const std::vector<double> xi0 = xi_next;
    xi_next = xi_density(G.row(k + 1), kernel, r1);
    for (std::size_t i = 0; i < n; ++i) g_mid[i] = 0.5 * (G(k, i) + G(k + 1, i));

    // Direct RK4; rho at the half step by cubic Hermite interpolation.
    apply_adjoint(kernel, r0, d0);
    apply_adjoint(kernel, r1, d1);
    for (std::size_t i = 0; i < n; ++i) {
      rho_mid[i] = 0.5 * (r0[i] + r1[i]) + h / 8.0 * (d0[i] - d1[i]);
    }
    const std::vector<double> xi_mid = xi_density(g_mid, kernel, rho_mid);
    apply_adjoint(kernel, y, k1);
    for (std::size_t i = 0; i < n; ++i) {
      k1[i] += xi0[i];
      tmp[i] = y[i] + 0.5 * h * k1[i];
    }
    apply_adjoint(kernel, tmp, k2);
    for (std::size_t i = 0; i < n; ++i) {
      k2[i] += xi_mid[i];
      tmp[i] = y[i] + 0.5 * h * k2[i];
    }
    apply_adjoint(kernel, tmp, k3);
    for (std::size_t i = 0; i < n; ++i) {
      k3[i] += xi_mid[i];
      tmp[i] = y[i] + h * k3[i];
    }
    apply_adjoint(kernel, tmp, k4);
    for (std::size_t i = 0; i < n; ++i) {
      k4[i] += xi_next[i];
      y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    std::copy(y.begin(), y.end(), direct.row(k + 1).begin());

    // Duhamel with Simpson's rule; rho at the half step from the semigroup.
    const auto rho_half = adjoint_semigroup_apply(r0, kernel, 0.5 * h);
    const auto xi_half = xi_density(g_mid, kernel, rho_half);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = z[i] + h / 6.0 * xi0[i];
    const auto full = adjoint_semigroup_apply(tmp, kernel, h);
    const auto half = adjoint_semigroup_apply(xi_half, kernel, 0.5 * h);
    for (std::size_t i = 0; i < n; ++i) {
      z[i] = full[i] + 4.0 * h / 6.0 * half[i] + h / 6.0 * xi_next[i];
    }
    std::copy(z.begin(), z.end(), duhamel.row(k + 1).begin());
  }
  ThetaSolution out;
  out.method_gap = max_abs_diff(direct, duhamel);
  if (out.method_gap > 1e-6) {
    throw NumericalError("solve_theta: RK4 and Duhamel integrations differ by " +
                         std::to_string(out.method_gap));
  }
  out.path = MeasurePath(std::move(direct), PathScale::fluctuation);
  return out;
}

double mgf_exact(const TestFn& f, std::span<const double> meanfield_slice,
                 const ScalingSequence& scaling) {
  require_same_size(f.size(), meanfield_slice.size(), "mgf_exact");
  const std::size_t n = f.size();
  const double b = scaling.a(n) / static_cast<double>(n);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = b * f[i];
    // e^x - x - 1 without cancellation for small x.
    const double term =
        std::abs(x) < 1e-3 ? x * x * (0.5 + x * (1.0 / 6.0 + x / 24.0)) : std::expm1(x) - x;
    s += meanfield_slice[i] * term;
  }
  return s;
}

ImportanceEstimate importance_estimate(const EventFn& event, const TestFn& f,
                                       const SpaceTimeFn& G, const RateKernel& kernel,
                                       const InitialProfile& profile,
                                       const ScalingSequence& scaling,
                                       const ImportanceConfig& cfg) {
  const std::size_t n = kernel.size();
  require_same_size(f.size(), n, "importance_estimate");
  require_same_size(profile.size(), n, "importance_estimate");
  require_same_size(G.n_space(), n, "importance_estimate");
  if (cfg.replicas == 0) throw std::invalid_argument("importance_estimate: replicas must be >= 1");
  const double beta = scaling.a(n) / static_cast<double>(n);
  const Simulator sim(kernel, G.grid());
  const TiltedRateTable rates(G, beta);
  const CompensatorTable table(G, kernel, beta);

  // log(dP_f / dP) = sum_i X_0(i) log(1 + a f_i / (N phi_i)) - (a / N) f_i.
  std::vector<double> log_ratio(n);
  double shift = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    log_ratio[i] = std::log1p(beta * f[i] / profile[i]);
    shift += beta * f[i];
  }

  ImportanceEstimate out;
  out.replicas = cfg.replicas;
  out.log_weights.resize(cfg.replicas);
  out.hits.resize(cfg.replicas);
  const auto reps = static_cast<std::ptrdiff_t>(cfg.replicas);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t r = 0; r < reps; ++r) {
    RngStream rng(cfg.master_seed, static_cast<std::uint64_t>(r));
    const UrnState x0 = sample_initial_perturbed(profile, f, scaling, rng);
    MartingaleAccumulator acc(table, G, beta, x0);
    const auto traj = sim.run_with(x0, cfg.obs_times, rng, false, TiltedDynamics{&rates}, acc);
    acc.finish(G.t_max());
    double init = -shift;
    for (std::size_t i = 0; i < n; ++i) init += static_cast<double>(x0.counts[i]) * log_ratio[i];
    out.log_weights[static_cast<std::size_t>(r)] = -acc.log_value() - init;
    out.hits[static_cast<std::size_t>(r)] = event(traj) ? 1 : 0;
  }

  // Plain importance-sampling mean (1/R) sum w 1{hit}, scaled by e^m to stay finite.
  const double m = *std::max_element(out.log_weights.begin(), out.log_weights.end());
  const double reps_d = static_cast<double>(cfg.replicas);
  double sw = 0.0, sw2 = 0.0, swh = 0.0, swh2 = 0.0;
  for (std::size_t r = 0; r < cfg.replicas; ++r) {
    const double w = std::exp(out.log_weights[r] - m);
    sw += w;
    sw2 += w * w;
    if (out.hits[r]) {
      swh += w;
      swh2 += w * w;
    }
  }
  const double scale = std::exp(m);
  out.raw_value = scale * swh / reps_d;
  out.value = std::clamp(out.raw_value, 0.0, 1.0);
  out.self_normalized = swh / sw;
  if (cfg.replicas > 1) {
    const double mean = swh / reps_d;
    const double var = std::max(0.0, (swh2 - reps_d * mean * mean) / (reps_d - 1.0));
    out.std_error = scale * std::sqrt(var / reps_d);
  } else {
    out.std_error = std::numeric_limits<double>::infinity();
  }
  out.ess = sw * sw / sw2;
  out.ess_event = swh2 > 0.0 ? swh * swh / swh2 : 0.0;
  out.mean_weight = std::exp(stats::log_mean_exp(out.log_weights));
  out.ess_below_floor = out.ess_event < cfg.ess_floor;
  return out;
}

nlohmann::json to_json(const ImportanceEstimate& e) {
  std::vector<double> sorted = e.log_weights;
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double q) {
    if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
  };
  nlohmann::json q;
  for (double p : {0.01, 0.05, 0.5, 0.95, 0.99}) q[std::to_string(p).substr(0, 4)] = quantile(p);
  return {{"value", e.value},
          {"raw_value", e.raw_value},
          {"stderr", e.std_error},
          {"ess", e.ess},
          {"ess_event", e.ess_event},
          {"self_normalized", e.self_normalized},
          {"replicas", e.replicas},
          {"mean_weight", e.mean_weight},
          {"ess_below_floor", e.ess_below_floor},
          {"log_weight_quantiles", q}};
}

}  // namespace ehrenfest
