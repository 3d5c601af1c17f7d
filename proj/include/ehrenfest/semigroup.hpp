#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "ehrenfest/grid.hpp"
#include "ehrenfest/kernel.hpp"

namespace ehrenfest {

// Rate matrix of one molecule: q(i, j) = lambda(i, j) / N for j != i,
// q(i, i) = -r_i with r_i = (1/N) sum_{j != i} lambda(i, j).
//
// On the urn grid q coincides with P1 - P2 (the j = i term of P1 - P2
// vanishes), so the same object drives the chain and the limit equation.
class MoleculeGenerator {
 public:
  MoleculeGenerator() = default;
  MoleculeGenerator(const RateKernel& kernel, const Grid& grid);

  std::size_t size() const { return kernel_.size(); }
  const RateKernel& kernel() const { return kernel_; }
  const Grid& grid() const { return grid_; }
  // r_i, the total exit rate of a molecule in urn i.
  const std::vector<double>& exit_rates() const { return exit_rates_; }
  // Lambda = max_i r_i.
  double uniformization_rate() const { return uniformization_rate_; }

  double q(std::size_t i, std::size_t j) const;
  // out = v^T Q (row vector times Q), O(N * rank).
  void apply_left(std::span<const double> v, std::span<double> out) const;
  // out = Q v (Q times column vector).
  void apply_right(std::span<const double> v, std::span<double> out) const;
  Eigen::MatrixXd dense() const;

 private:
  RateKernel kernel_;
  Grid grid_;
  std::vector<double> exit_rates_;
  double uniformization_rate_ = 0.0;
};

MoleculeGenerator build_generator(const RateKernel& kernel, const Grid& grid);

struct TransitionMatrix {
  Eigen::MatrixXd p;
  double t = 0.0;
  // Largest Poisson index kept in the uniformization sum.
  std::size_t truncation_order = 0;
};

// Poisson(lambda_t) weights w_0..w_K with tail mass sum_{k > K} w_k < tol.
std::vector<double> uniformization_weights(double lambda_t, double tol);

TransitionMatrix transition_matrix(const MoleculeGenerator& gen, double t, double tol = 1e-14);

// Row vector v^T e^{tQ}, by uniformization.
std::vector<double> propagate_left(const MoleculeGenerator& gen, std::span<const double> v,
                                   double t, double tol = 1e-14);

// m(t_k, .) = phi^T p_{t_k} on the generator's grid.
MeanField mean_field(const InitialProfile& profile, const MoleculeGenerator& gen,
                     double tol = 1e-14);
// One slice m(t, .), without storing the path.
std::vector<double> mean_field_at(const InitialProfile& profile, const MoleculeGenerator& gen,
                                  double t, double tol = 1e-14);
// e^{2 ||lambda|| T0} max phi, a uniform bound on every mean-field entry.
double mean_field_bound(const RateKernel& kernel, const InitialProfile& profile, double t_max);

// RK4 on d rho / dt = (P1 - P2)^* rho with rho_0 = phi, step T0 / n_time.
DensityPath hydro_solve(const RateKernel& kernel, const InitialProfile& profile, const Grid& grid);
// Final slice only, for grids too large to store the path.
std::vector<double> hydro_final(const RateKernel& kernel, const InitialProfile& profile,
                                double t, std::size_t n_steps);

// e^{t (P1 - P2)^*} nu for a signed density slice (Taylor series with substeps).
std::vector<double> adjoint_semigroup_apply(std::span<const double> nu, const RateKernel& kernel,
                                            double t);
// e^{t (P1 - P2)} f for a function.
std::vector<double> semigroup_apply(std::span<const double> f, const RateKernel& kernel,
                                    double t);

// CSV rows "t,x,value", 15 significant digits.
void write_field_csv(std::ostream& out, const TimeField& field);

namespace serial {
// Dense e^{tQ} through the Eigen matrix exponential of the generator
// (scaling and squaring), an independent reference for transition_matrix.
Eigen::MatrixXd transition_matrix_expm(const MoleculeGenerator& gen, double t);
// RK4 on the mean-field ODE written with explicit double sums.
MeanField mean_field_rk4(const InitialProfile& profile, const RateKernel& kernel,
                         const Grid& grid);
}  // namespace serial

}  // namespace ehrenfest
