#include <cmath>

#include "doctest.h"
#include "ehrenfest/rate.hpp"
#include "ehrenfest/semigroup.hpp"
#include "ehrenfest/tilted.hpp"

using namespace ehrenfest;

namespace {

DensityPath scaled(const DensityPath& p, double c) {
  DensityPath out = p;
  for (auto& v : out.data()) v *= c;
  return out;
}

}  // namespace

TEST_CASE("closed-form initial rate") {
  const auto phi = InitialProfile(std::vector<double>(20, 1.0));
  CHECK(I_ini_closed(TestFn(20, 0.0), phi) == 0.0);
  CHECK(I_ini_closed(TestFn(20, 3.0), phi) == doctest::Approx(4.5));
  const auto g = TestFn::sample(20, [](double x) { return x - 0.3; });
  TestFn g2 = g;
  for (auto& v : g2.values) v *= 2.0;
  CHECK(I_ini_closed(g2, phi) == doctest::Approx(4.0 * I_ini_closed(g, phi)));
}

TEST_CASE("variational initial rate matches the closed form on the span") {
  const std::size_t n = 64;
  const Grid grid(n, 1.0, 10);
  const BasisSet basis(grid, 8, 2);
  const auto phi = InitialProfile::sample(n, [](double x) { return 1.0 + 0.5 * x; });
  const auto zero = I_ini_variational(std::vector<double>(n, 0.0), phi, basis);
  CHECK(zero.value == 0.0);
  std::vector<double> c(8, 0.0);
  c[0] = 0.3;
  c[2] = -1.1;
  c[5] = 0.4;
  const auto g = basis.combine_spatial(c);
  std::vector<double> nu(n);
  for (std::size_t i = 0; i < n; ++i) nu[i] = g[i] * phi[i];
  const auto r = I_ini_variational(nu, phi, basis);
  CHECK(std::abs(r.value - I_ini_closed(g, phi)) < 1e-10);
  for (std::size_t i = 0; i < n; ++i) CHECK(r.witness[i] == doctest::Approx(g[i]).epsilon(1e-8));
  const auto small = I_ini_variational(nu, phi, BasisSet(grid, 4, 2));
  CHECK(small.value <= r.value + 1e-14);
}

TEST_CASE("J_ini entropy examples") {
  const std::size_t n = 32;
  const Grid grid(n, 1.0, 10);
  const BasisSet basis(grid, 6, 2);
  const auto phi = InitialProfile::sample(n, [](double x) { return 1.0 + x; });
  std::vector<double> nu(phi.values().begin(), phi.values().end());
  const auto z = J_ini(nu, phi, basis);
  CHECK(std::abs(z.value) < 1e-12);
  const auto one = InitialProfile(std::vector<double>(n, 1.0));
  for (double c : {0.25, 2.0, 5.0}) {
    const auto r = J_ini(std::vector<double>(n, c), one, basis);
    CHECK(r.converged);
    CHECK(std::abs(r.value - (c * std::log(c) - c + 1.0)) < 1e-8);
  }
}

TEST_CASE("linear functional examples and dynamic rate on a tilted path") {
  const std::size_t n = 40;
  const Grid grid(n, 1.0, 400);
  const auto k = RateKernel::constant(n, 1.0);
  const auto phi = InitialProfile(std::vector<double>(n, 1.0));
  const auto mu = hydro_solve(k, phi, grid);
  const BasisSet basis(grid, 6, 4);
  std::vector<double> c(basis.dim(), 0.0);
  c[2 * 4 + 1] = 1.0;  // cos(2 pi x) times a Bernstein bump
  c[1 * 4 + 3] = 0.5;
  const auto G = basis.combine(c);
  const double gg = pathspace_inner(G, G, k, mu);

  const MeasurePath zero(DensityPath(grid, 0.0), PathScale::fluctuation);
  CHECK(linear_functional_l(zero, SpaceTimeFn(grid), k, mu) == 0.0);
  CHECK(linear_functional_l(zero, G, k, mu) == doctest::Approx(-0.5 * gg));

  const auto theta = solve_theta(TestFn(n, 0.0), G, k, mu);
  CHECK(std::abs(linear_functional_l(theta.path, G, k, mu) - 0.5 * gg) < 1e-4);

  const auto r = I_dyn_variational(theta.path, k, mu, basis);
  CHECK(std::abs(r.value - 0.5 * gg) < 1e-4);
  CHECK(r.value >= 0.0);
  const MeasurePath doubled(scaled(theta.path.density, 2.0), PathScale::fluctuation);
  CHECK(I_dyn_variational(doubled, k, mu, basis).value == doctest::Approx(4.0 * r.value).epsilon(1e-9));
  CHECK(I_dyn_variational(zero, k, mu, basis).value == 0.0);
}

TEST_CASE("J_dyn vanishes on the hydrodynamic path and is positive off it") {
  const std::size_t n = 40;
  const Grid grid(n, 1.0, 100);
  const auto k = RateKernel::constant(n, 1.0);
  const auto phi = InitialProfile::sample(n, [](double x) { return 1.0 + 0.5 * std::cos(2 * M_PI * x); });
  const auto mu = hydro_solve(k, phi, grid);
  const BasisSet basis(grid, 6, 4);
  const auto at_mu = J_dyn(MeasurePath(mu, PathScale::occupation), k, basis);
  CHECK(at_mu.value >= 0.0);
  CHECK(at_mu.value <= 1e-6);

  DensityPath bent = mu;
  for (std::size_t kk = 1; kk <= grid.n_time; ++kk)
    for (std::size_t i = 0; i < n; ++i) bent(kk, i) *= 1.0 + 0.1 * std::sin(2 * M_PI * grid.x(i));
  const auto off = J_dyn(MeasurePath(bent, PathScale::occupation), k, basis);
  CHECK(off.value > 1e-3);
  CHECK_THROWS(MeasurePath(scaled(mu, -1.0), PathScale::occupation));
}

TEST_CASE("marginal rate") {
  const std::size_t n = 60;
  const Grid grid(n, 1.0, 100);
  const auto k = RateKernel::polynomial(n, {{1.0, 0.0}, {0.0, 1.0}});
  const auto phi1 = InitialProfile(std::vector<double>(n, 1.0));
  const BasisSet basis(grid);
  const auto mu1 = hydro_solve(k, phi1, grid);
  const auto f1 = TestFn(n, 1.0);
  CHECK(marginal_rate(f1, 0.0, 0.5, k, phi1, mu1, basis).rate == 0.0);
  CHECK(marginal_rate(f1, 1.7, 0.0, k, phi1, mu1, basis).rate == doctest::Approx(1.7 * 1.7 / 2.0));

  const auto phi = InitialProfile::sample(n, [](double x) { return 1.0 + 0.5 * std::cos(2 * M_PI * x); });
  const auto mu = hydro_solve(k, phi, grid);
  const auto f = TestFn::sample(n, [](double x) { return std::cos(M_PI * x); });
  const auto m = mean_field_at(phi, build_generator(k, grid), 0.6);
  double v = 0.0;
  for (std::size_t i = 0; i < n; ++i) v += m[i] * f[i] * f[i] / n;
  const auto r = marginal_rate(f, 2.0, 0.6, k, phi, mu, basis);
  CHECK(std::abs(r.rate / (2.0 / v) - 1.0) < 0.02);
}

TEST_CASE("rate breakdown JSON") {
  RateBreakdown b;
  b.ini = 0.5;
  b.dyn = 0.25;
  b.basis_spatial = 16;
  b.basis_temporal = 8;
  b.witness_g = TestFn(3, 1.0);
  const auto j = to_json(b);
  CHECK(j["i_ini"] == 0.5);
  CHECK(j["i_dyn"] == 0.25);
  CHECK(j["basis"]["B"] == 16);
  CHECK(j["witness_g"].size() == 3);
}
