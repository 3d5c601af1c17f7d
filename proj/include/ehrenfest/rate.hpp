#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "ehrenfest/grid.hpp"
#include "ehrenfest/kernel.hpp"
#include "json.hpp"

namespace ehrenfest {

enum class PathScale { fluctuation, occupation };

// A space-time density path pi_t on the urn grid. Fluctuation-scale paths
// are signed; occupation-scale paths must be nonnegative.
struct MeasurePath {
  DensityPath density;
  PathScale scale = PathScale::fluctuation;

  MeasurePath() = default;
  MeasurePath(DensityPath d, PathScale s);
};

// Finite search space for the variational suprema: spatial cosines
// cos(a pi x), a = 0..B-1, crossed with Bernstein polynomials of degree
// Bt-1 on [0, T0]. Tensor element m = a * Bt + b is S_a(x) T_b(t).
class BasisSet {
 public:
  BasisSet(const Grid& grid, std::size_t n_spatial = 16, std::size_t n_temporal = 8);
  // Custom spatial family with the default temporal family.
  BasisSet(const Grid& grid, std::vector<TestFn> spatial, std::size_t n_temporal);

  const Grid& grid() const { return grid_; }
  std::size_t n_spatial() const { return spatial_.size(); }
  std::size_t n_temporal() const { return temporal_.size(); }
  std::size_t dim() const { return n_spatial() * n_temporal(); }

  const std::vector<TestFn>& spatial() const { return spatial_; }
  // T_b at every time node, and its grid time derivative.
  const std::vector<std::vector<double>>& temporal() const { return temporal_; }
  const std::vector<std::vector<double>>& temporal_derivative() const { return temporal_dt_; }

  TestFn combine_spatial(std::span<const double> coeffs) const;
  SpaceTimeFn combine(std::span<const double> coeffs) const;

  // Condition numbers of the spatial Gram (1/N) sum S_a S_b and of the
  // temporal Gram under trapezoidal weights.
  double spatial_condition() const;
  double temporal_condition() const;

  // Bernstein family of size count on [0, t_k_end], sampled at nodes 0..k_end.
  static std::vector<std::vector<double>> bernstein(std::size_t count, std::size_t k_end,
                                                    double dt);

 private:
  Grid grid_;
  std::vector<TestFn> spatial_;
  std::vector<std::vector<double>> temporal_;
  std::vector<std::vector<double>> temporal_dt_;
};

struct OptimizerConfig {
  std::size_t max_iterations = 500;
  double gradient_tolerance = 1e-9;
  std::size_t newton_max_iterations = 100;
};

struct IniResult {
  double value = 0.0;
  TestFn witness;
  std::vector<double> coefficients;
  std::size_t iterations = 0;
  bool converged = true;
};

struct DynResult {
  double value = 0.0;
  SpaceTimeFn witness;
  std::vector<double> coefficients;
  // Spectrum of the Gram used by the quadratic solves.
  double gram_min_eigen = 0.0;
  double gram_max_eigen = 0.0;
  std::size_t gram_rank = 0;
  // Iterative solves only.
  std::size_t iterations = 0;
  double gradient_norm = 0.0;
  bool converged = true;
};

// (1/2)(1/N) sum phi g^2.
double I_ini_closed(const TestFn& g, const InitialProfile& profile);
// sup over the spatial span of nu(f) - (1/2) int phi f^2; nu is a density slice.
IniResult I_ini_variational(std::span<const double> nu, const InitialProfile& profile,
                            const BasisSet& basis);

// pi_T(G_T) - pi_0(G_0) - int pi_s((d_s + P1 - P2) G_s) ds - (1/2) <<G, G>>.
double linear_functional_l(const MeasurePath& pi, const SpaceTimeFn& G, const RateKernel& kernel,
                           const DensityPath& mu);
// sup over the tensor span of linear_functional_l(pi, .); the quadratic
// term is weighted by the hydrodynamic path mu.
DynResult I_dyn_variational(const MeasurePath& pi, const RateKernel& kernel,
                            const DensityPath& mu, const BasisSet& basis);

// sup over the spatial span of nu(f) - int phi (e^f - 1), damped Newton.
IniResult J_ini(std::span<const double> nu, const InitialProfile& profile, const BasisSet& basis,
                const OptimizerConfig& cfg = {});
// sup over the tensor span of pi_T(G_T) - pi_0(G_0) - int pi_s((d_s + B) G_s) ds.
// Preconditioned gradient ascent with Armijo backtracking.
DynResult J_dyn(const MeasurePath& pi, const RateKernel& kernel, const BasisSet& basis,
                const OptimizerConfig& cfg = {});

struct MarginalRate {
  double rate = 0.0;
  // Fluctuation variance sigma^2(t*, f) reproduced by the basis.
  double sigma2 = 0.0;
  // Optimal initial tilt g and dynamic tilt F (zero after t*).
  TestFn witness_g;
  SpaceTimeFn witness_F;
  // Initial-law perturbation matching the optimal path: f_tilt = g * phi.
  TestFn initial_tilt;
};

// inf { I_ini(pi_0) + I_dyn(pi) : pi_{t*}(f) = x } = x^2 / (2 sigma^2), with
// sigma^2 computed in the dual as L^T M^+ L over the initial and dynamic
// blocks of the basis. t_star must be a node of mu's time grid.
MarginalRate marginal_rate(const TestFn& f, double x_level, double t_star,
                           const RateKernel& kernel, const InitialProfile& profile,
                           const DensityPath& mu, const BasisSet& basis);

struct RateBreakdown {
  enum class Kind { quadratic, entropy };
  Kind kind = Kind::quadratic;
  double ini = 0.0;
  double dyn = 0.0;
  std::optional<TestFn> witness_g;
  std::optional<SpaceTimeFn> witness_F;
  std::size_t basis_spatial = 0;
  std::size_t basis_temporal = 0;
};

// {i_ini, i_dyn} (or {j_ini, j_dyn}), basis {B, Bt}, witnesses as arrays.
nlohmann::json to_json(const RateBreakdown& r);

}  // namespace ehrenfest
