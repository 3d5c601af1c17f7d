#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ehrenfest/grid.hpp"

namespace ehrenfest {

enum class KernelKind { constant, product, polynomial, table };

std::string to_string(KernelKind kind);

// Jump-rate function lambda sampled on the urn grid: lambda(i/N, j/N).
//
// Closed-form kernels are stored as a short sum of separable terms
// lambda(x, y) = sum_r u_r(x) v_r(y), so matrix-vector products cost
// O(N * rank) and the N x N table is never formed. Tables are dense.
// Every entry is validated strictly positive at construction.
class RateKernel {
 public:
  RateKernel() = default;

  static RateKernel constant(std::size_t n, double value);
  // lambda(i, j) = left[i] * right[j]; both factors strictly positive.
  static RateKernel product(std::vector<double> left, std::vector<double> right);
  // lambda(x, y) = sum_{p,q} coeffs[p][q] x^p y^q.
  static RateKernel polynomial(std::size_t n, const std::vector<std::vector<double>>& coeffs);
  // Row-major n x n table of lambda(i/N, j/N).
  static RateKernel table(std::size_t n, std::vector<double> values);

  std::size_t size() const { return n_; }
  KernelKind kind() const { return kind_; }
  bool separable() const { return kind_ != KernelKind::table; }
  std::size_t rank() const { return separable() ? left_.size() : n_; }
  // Constant or product kernel: lambda(i, j) = left(0)[i] * right(0)[j].
  bool rank_one() const { return separable() && left_.size() == 1; }
  std::span<const double> left(std::size_t r) const { return left_[r]; }
  std::span<const double> right(std::size_t r) const { return right_[r]; }

  double operator()(std::size_t i, std::size_t j) const;
  // Row i of a table kernel; empty for separable kernels.
  std::span<const double> table_row(std::size_t i) const {
    if (separable()) return {};
    return std::span<const double>(table_).subspan(i * n_, n_);
  }
  // ||lambda|| = max entry.
  double max_norm() const { return max_norm_; }
  double min_entry() const { return min_entry_; }

  // out_i = sum_j lambda(i, j) v_j.
  void multiply(std::span<const double> v, std::span<double> out) const;
  // out_j = sum_i lambda(i, j) v_i.
  void multiply_transpose(std::span<const double> v, std::span<double> out) const;

  const std::vector<double>& row_sums() const { return row_sums_; }
  const std::vector<double>& diagonal() const { return diagonal_; }
  // Row-major copy of the full table.
  std::vector<double> dense() const;

 private:
  void finalize();

  std::size_t n_ = 0;
  KernelKind kind_ = KernelKind::constant;
  std::vector<std::vector<double>> left_;
  std::vector<std::vector<double>> right_;
  std::vector<double> table_;
  std::vector<double> row_sums_;
  std::vector<double> diagonal_;
  double max_norm_ = 0.0;
  double min_entry_ = 0.0;
};

inline constexpr double kExpArgumentCap = 700.0;

// (P1 f)(x) = (1/N) sum_j lambda(x, j/N) f(j/N).
TestFn apply_P1(const RateKernel& kernel, const TestFn& f);
// (P2 f)(x) = f(x) (1/N) sum_j lambda(x, j/N).
TestFn apply_P2(const RateKernel& kernel, const TestFn& f);
// (P1 - P2) f, the generator of the limiting per-molecule motion on functions.
TestFn apply_P1_minus_P2(const RateKernel& kernel, const TestFn& f);
void apply_P1_minus_P2(const RateKernel& kernel, std::span<const double> f, std::span<double> out);
// Adjoint of P1 - P2 on densities: (1/N) sum_j lambda(j, i) rho_j - rho_i (1/N) sum_j lambda(i, j).
void apply_adjoint(const RateKernel& kernel, std::span<const double> rho, std::span<double> out);
// (B f)(x) = (1/N) sum_j lambda(x, j/N) (exp(f(j/N) - f(x)) - 1).
// Throws NumericalError when max f - min f exceeds cap.
TestFn apply_B(const RateKernel& kernel, const TestFn& f, double cap = kExpArgumentCap);
// (K^N f)(x) = (1/N) sum_j lambda(x, j/N) (f(j/N) - f(x))^2.
TestFn apply_Kquad(const RateKernel& kernel, const TestFn& f);

// <f|g>_t = (1/N^2) sum_i sum_j lambda(i, j) (f_j - f_i)(g_j - g_i) rho_t(i).
double carre_bracket(std::span<const double> f, std::span<const double> g,
                     const RateKernel& kernel, std::span<const double> rho);
double carre_bracket(const TestFn& f, const TestFn& g, const RateKernel& kernel,
                     std::span<const double> rho);
// c_i = (1/N) sum_j lambda(i, j) (f_j - f_i)(g_j - g_i), so that
// <f|g>_t = (1/N) sum_i rho_t(i) c_i. Time independent, hence reusable
// across every slice of a path.
std::vector<double> carre_integrand(std::span<const double> f, std::span<const double> g,
                                    const RateKernel& kernel);
// <<F, G>> = int_0^T0 <F_s|G_s>_s ds, trapezoidal in time.
double pathspace_inner(const SpaceTimeFn& F, const SpaceTimeFn& G, const RateKernel& kernel,
                       const DensityPath& mu);

// Trapezoidal weights on the uniform time grid of `field`.
std::vector<double> trapezoid_weights(std::size_t n_time, double t_max);

// Time derivative on the grid: centered differences inside, first-order
// one-sided at both ends. Together with the trapezoidal weights this
// satisfies sum_k w_k (D g)_k = g_n - g_0 exactly for every grid function g.
SpaceTimeFn time_derivative(const SpaceTimeFn& G);
std::vector<double> time_derivative(std::span<const double> values, double dt);

// Direct double-sum implementations of the operators, written straight
// from their definitions with no factorization and no threading. Kept as
// the reference the optimized paths are tested and benchmarked against.
namespace serial {
TestFn apply_P1(const RateKernel& kernel, const TestFn& f);
TestFn apply_P2(const RateKernel& kernel, const TestFn& f);
TestFn apply_B(const RateKernel& kernel, const TestFn& f);
TestFn apply_Kquad(const RateKernel& kernel, const TestFn& f);
void apply_adjoint(const RateKernel& kernel, std::span<const double> rho, std::span<double> out);
double carre_bracket(std::span<const double> f, std::span<const double> g,
                     const RateKernel& kernel, std::span<const double> rho);
}  // namespace serial

}  // namespace ehrenfest
