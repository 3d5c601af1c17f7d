#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ehrenfest/grid.hpp"
#include "ehrenfest/kernel.hpp"
#include "ehrenfest/rate.hpp"
#include "ehrenfest/simulator.hpp"
#include "json.hpp"

namespace ehrenfest {

// Jump-rate multipliers of the tilted chain,
// exp{(a_N / N)(G_t(j) - G_t(i))}, all within [1/bound, bound] for
// bound = exp{2 (a_N / N) ||G||}.
class TiltedRateTable {
 public:
  TiltedRateTable(const SpaceTimeFn& G, double beta);

  double beta() const { return beta_; }
  double bound() const { return bound_; }
  const SpaceTimeFn& G() const { return G_; }
  double multiplier(double t, std::size_t i, std::size_t j) const;

 private:
  SpaceTimeFn G_;
  double beta_;
  double bound_;
  bool time_constant_;
};

// Thinning policy for Simulator::run_with: proposals at bound x the original
// rates, accepted with probability multiplier / bound. A unit bound accepts
// without consuming randomness, so G = 0 reproduces the untilted stream.
struct TiltedDynamics {
  const TiltedRateTable* table;
  double bound() const { return table->bound(); }
  bool accept(double t, std::size_t src, std::size_t dst, RngStream& rng) const {
    if (table->bound() == 1.0) return true;
    return rng.uniform() * table->bound() < table->multiplier(t, src, dst);
  }
};

// Cumulative integrals C_i(t) = int_0^t c_i(s) ds of the per-molecule
// compensator rate c_i(s) = (1/N) sum_{j != i} lambda(i, j)(e^{beta (G_s(j) - G_s(i))} - 1),
// with G linear in time on each grid cell. On every cell c_i is sampled at
// the four Gauss-Legendre nodes and replaced by its cubic interpolant, whose
// integral over the whole cell is the 4-point Gauss rule. A time-constant G
// uses a single cell on which c_i is constant and the integral exact.
class CompensatorTable {
 public:
  CompensatorTable(const SpaceTimeFn& G, const RateKernel& kernel, double beta);

  std::size_t n_space() const { return n_space_; }
  double t_max() const { return t_max_; }
  double cumulative(std::size_t i, double t) const;
  // c_i(t) evaluated directly from G and the kernel (for tests).
  static std::vector<double> rate_at(const SpaceTimeFn& G, const RateKernel& kernel, double beta,
                                     double t);

 private:
  std::size_t n_space_ = 0;
  std::size_t n_cells_ = 0;
  double t_max_ = 0.0;
  double h_ = 0.0;
  std::vector<double> prefix_;  // [cell * n_space + i], integral up to cell start
  std::vector<double> cubic_;   // [(cell * n_space + i) * 4 + p], coefficients in local u
};

// Running log Gamma_t^N(G) along one trajectory, as an observer.
//
// With H_G(t, x) = exp{(a_N / N) sum_i (x_i - m(t, i)) G_t(i)} the mean-field
// terms cancel between the boundary ratio and the compensator, leaving
//   log Gamma_t = (a_N / N) sum_{jumps i->j} (G_tau(j) - G_tau(i)) - int_0^t sum_i X_s(i) c_i(s) ds.
// Each jump costs O(1): urns settle their compensator share only when their
// count changes, and at finish().
class MartingaleAccumulator {
 public:
  MartingaleAccumulator(const CompensatorTable& table, const SpaceTimeFn& G, double beta,
                        const UrnState& initial);

  void on_jump(double t, std::size_t src, std::size_t dst);
  void finish(double t_end);

  double log_value() const { return jump_term_ - compensator_; }
  double jump_term() const { return jump_term_; }
  double compensator() const { return compensator_; }
  double last_time() const { return last_time_; }

 private:
  void settle(std::size_t i, double t);

  const CompensatorTable* table_;
  const SpaceTimeFn* G_;
  double beta_;
  std::vector<std::uint64_t> counts_;
  std::vector<double> since_;
  double jump_term_ = 0.0;
  double compensator_ = 0.0;
  double last_time_ = 0.0;
};

// log Gamma_{T0}^N(G) replayed from the trajectory's jump log.
double log_gamma(const TrajectorySnapshots& traj, const SpaceTimeFn& G, const RateKernel& kernel,
                 const ScalingSequence& scaling);
double log_gamma(const TrajectorySnapshots& traj, const CompensatorTable& table,
                 const SpaceTimeFn& G, const ScalingSequence& scaling);

TrajectorySnapshots tilted_simulate(const UrnState& state, const Simulator& sim,
                                    const SpaceTimeFn& G, const ScalingSequence& scaling,
                                    std::span<const double> obs_times, RngStream& rng,
                                    bool record_jumps = false);

// Density xi_t with (1/N) sum xi h = <G_t|h>_t for every grid h.
std::vector<double> xi_density(std::span<const double> G, const RateKernel& kernel,
                               std::span<const double> rho);

struct ThetaSolution {
  MeasurePath path;
  // Sup-norm gap between the two internal integrations.
  double method_gap = 0.0;
};

// d theta / dt = (P1 - P2)^* theta + xi_t(G_t), theta_0 = f, on mu's grid.
// Integrated by RK4 and by the Duhamel formula with Simpson's rule; throws
// NumericalError when they disagree by more than 1e-6.
ThetaSolution solve_theta(const TestFn& f, const SpaceTimeFn& G, const RateKernel& kernel,
                          const DensityPath& mu);

// log E exp{(a_N^2 / N) theta_t(f)} = sum_i m(t, i)(e^{b f_i} - b f_i - 1), b = a_N / N.
double mgf_exact(const TestFn& f, std::span<const double> meanfield_slice,
                 const ScalingSequence& scaling);

struct ImportanceEstimate {
  // raw_value clipped to [0, 1]. Clipping only moves the estimate toward
  // the true probability.
  double value = 0.0;
  // Unbiased mean (1/R) sum_r w_r 1{event_r}.
  double raw_value = 0.0;
  double std_error = 0.0;
  // (sum w)^2 / sum w^2 over all replicas.
  double ess = 0.0;
  // The same ratio over the replicas that hit the event; these are the
  // terms the estimate is built from.
  double ess_event = 0.0;
  std::size_t replicas = 0;
  // log(dP / dP_hat) per replica, in replica order.
  std::vector<double> log_weights;
  std::vector<std::uint8_t> hits;
  // Plain mean of the weights; 1 in expectation.
  double mean_weight = 0.0;
  // sum w 1{event} / sum w, a diagnostic only: with dispersed weights the
  // normaliser is dominated by a few replicas and the ratio is biased.
  double self_normalized = 0.0;
  // ess_event below the configured floor.
  bool ess_below_floor = false;
};

struct ImportanceConfig {
  std::size_t replicas = 1000;
  std::uint64_t master_seed = 1;
  std::vector<double> obs_times;
  double ess_floor = 0.0;
};

using EventFn = std::function<bool(const TrajectorySnapshots&)>;

// Importance sampling under the perturbed initial law and tilted dynamics,
// with weights exp{-log Gamma - log(dP_f / dP)}.
ImportanceEstimate importance_estimate(const EventFn& event, const TestFn& f,
                                       const SpaceTimeFn& G, const RateKernel& kernel,
                                       const InitialProfile& profile,
                                       const ScalingSequence& scaling,
                                       const ImportanceConfig& cfg);

// {value, raw_value, stderr, ess, ess_event, replicas, mean_weight, self_normalized,
//  ess_below_floor, log_weight_quantiles}
nlohmann::json to_json(const ImportanceEstimate& e);

}  // namespace ehrenfest
