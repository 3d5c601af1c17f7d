#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "ehrenfest/semigroup.hpp"

using namespace ehrenfest;

namespace {

RateKernel random_table(std::size_t n, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.2, 2.0);
  std::vector<double> v(n * n);
  for (auto& x : v) x = u(gen);
  return RateKernel::table(n, std::move(v));
}

}  // namespace

TEST_CASE("generator entries") {
  const auto gen = build_generator(RateKernel::constant(2, 1.0), Grid(2, 1.0, 10));
  CHECK(gen.q(0, 1) == doctest::Approx(0.5));
  CHECK(gen.q(0, 0) == doctest::Approx(-0.5));
  const auto g2 = build_generator(random_table(9, 1), Grid(9, 1.0, 10));
  const auto q = g2.dense();
  for (int i = 0; i < 9; ++i) CHECK(std::abs(q.row(i).sum()) < 1e-14);
  const auto prod = RateKernel::product({1.0, 2.0, 3.0}, {0.5, 1.5, 2.5});
  const auto g3 = build_generator(prod, Grid(3, 1.0, 10));
  CHECK(g3.q(1, 2) == doctest::Approx(2.0 * 2.5 / 3.0));
}

TEST_CASE("uniform chain transition matrix") {
  const std::size_t n = 50;
  const auto gen = build_generator(RateKernel::constant(n, 1.0), Grid(n, 10.0, 10));
  for (double t : {0.1, 1.0, 10.0}) {
    const auto p = transition_matrix(gen, t).p;
    const double d = 1.0 / n + (1.0 - 1.0 / n) * std::exp(-t);
    const double o = 1.0 / n - std::exp(-t) / n;
    for (std::size_t i = 0; i < n; i += 7) {
      for (std::size_t j = 0; j < n; j += 3) CHECK(std::abs(p(i, j) - (i == j ? d : o)) < 1e-10);
    }
  }
  const auto id = transition_matrix(gen, 0.0).p;
  CHECK((id - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS(transition_matrix(gen, 1.0, 0.0));
}

TEST_CASE("uniformization matches the matrix exponential") {
  const auto gen = build_generator(random_table(12, 2), Grid(12, 1.0, 10));
  const auto a = transition_matrix(gen, 0.7).p;
  const auto b = serial::transition_matrix_expm(gen, 0.7);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
  for (int i = 0; i < 12; ++i) CHECK(a.row(i).sum() == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("Chapman-Kolmogorov") {
  const auto gen = build_generator(random_table(16, 3), Grid(16, 1.0, 10));
  const auto ps = transition_matrix(gen, 0.3).p, pt = transition_matrix(gen, 0.5).p;
  const auto pst = transition_matrix(gen, 0.8).p;
  CHECK((ps * pt - pst).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("mean field examples") {
  const std::size_t n = 40;
  const Grid grid(n, 1.0, 20);
  const auto gen = build_generator(RateKernel::constant(n, 1.0), grid);
  const auto flat = mean_field(InitialProfile(std::vector<double>(n, 1.0)), gen);
  for (double v : flat.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));

  const auto phi = InitialProfile::sample(n, [](double x) { return x; });
  const auto m = mean_field(phi, gen);
  const double avg = phi.total() / n;
  for (std::size_t k = 0; k <= grid.n_time; ++k) {
    const double t = grid.t(k);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(m(k, i) == doctest::Approx(std::exp(-t) * grid.x(i) + (1 - std::exp(-t)) * avg)
                           .epsilon(1e-10));
    }
  }
  for (std::size_t i = 0; i < n; ++i) CHECK(m(0, i) == phi[i]);
}

TEST_CASE("mean field agrees with RK4 on its ODE and respects the exponential bound") {
  const std::size_t n = 24;
  const Grid grid(n, 1.5, 300);
  const auto k = random_table(n, 4);
  const auto phi = InitialProfile::sample(n, [](double x) { return 1.0 + std::cos(6 * x); });
  const auto m = mean_field(phi, build_generator(k, grid));
  const auto r = serial::mean_field_rk4(phi, k, grid);
  double err = 0.0, top = 0.0;
  for (std::size_t q = 0; q < m.data().size(); ++q) {
    err = std::max(err, std::abs(m.data()[q] - r.data()[q]));
    top = std::max(top, m.data()[q]);
  }
  CHECK(err < 1e-9);
  CHECK(top <= mean_field_bound(k, phi, grid.t_max));
  for (std::size_t kk = 0; kk <= grid.n_time; ++kk)
    CHECK(m.total(kk) == doctest::Approx(phi.total()).epsilon(1e-12));
  const auto slice = mean_field_at(phi, build_generator(k, grid), grid.t_max);
  for (std::size_t i = 0; i < n; ++i) CHECK(slice[i] == doctest::Approx(m(grid.n_time, i)).epsilon(1e-12));
}

TEST_CASE("hydrodynamic path for the uniform kernel") {
  const std::size_t n = 1000;
  const Grid grid(n, 1.0, 1000);
  const auto phi = InitialProfile::sample(n, [](double x) { return 1.0 + 0.5 * std::sin(3 * x); });
  const double avg = phi.total() / n;
  const auto rho = hydro_solve(RateKernel::constant(n, 1.0), phi, grid);
  double err = 0.0;
  for (std::size_t k = 0; k <= grid.n_time; k += 50) {
    const double t = grid.t(k);
    for (std::size_t i = 0; i < n; ++i)
      err = std::max(err, std::abs(rho(k, i) - (std::exp(-t) * phi[i] + (1 - std::exp(-t)) * avg)));
  }
  CHECK(err <= 1e-6);
  const auto flat = hydro_solve(RateKernel::constant(50, 1.0),
                                InitialProfile(std::vector<double>(50, 1.0)), Grid(50, 1.0, 10));
  for (double v : flat.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("hydro path and mean field are dual") {
  const std::size_t n = 30;
  const Grid grid(n, 1.0, 100);
  const auto k = random_table(n, 5);
  const auto phi = InitialProfile::sample(n, [](double x) { return 0.5 + x; });
  const auto rho = hydro_solve(k, phi, grid);
  const auto m = mean_field(phi, build_generator(k, grid));
  const auto f = TestFn::sample(n, [](double x) { return std::cos(4 * x); });
  for (std::size_t kk = 0; kk <= grid.n_time; kk += 10) {
    double mf = 0.0;
    for (std::size_t i = 0; i < n; ++i) mf += m(kk, i) * f[i] / n;
    CHECK(rho.pair(kk, f.values) == doctest::Approx(mf).epsilon(1e-8));
  }
  const auto fin = hydro_final(k, phi, 1.0, 100);
  for (std::size_t i = 0; i < n; ++i) CHECK(fin[i] == doctest::Approx(rho(100, i)).epsilon(1e-13));
}

TEST_CASE("adjoint semigroup") {
  const std::size_t n = 40;
  std::vector<double> nu(n);
  for (std::size_t i = 0; i < n; ++i) nu[i] = std::cos(2 * M_PI * (i + 1.0) / n);
  const auto id = adjoint_semigroup_apply(nu, RateKernel::constant(n, 1.0), 0.0);
  for (std::size_t i = 0; i < n; ++i) CHECK(id[i] == nu[i]);
  const auto e = adjoint_semigroup_apply(nu, RateKernel::constant(n, 1.0), 1.0);
  for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(e[i] - std::exp(-1.0) * nu[i]) < 1e-9);

  const auto k = random_table(n, 6);
  const auto a = adjoint_semigroup_apply(adjoint_semigroup_apply(nu, k, 0.4), k, 0.9);
  const auto b = adjoint_semigroup_apply(nu, k, 1.3);
  for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(a[i] - b[i]) < 1e-9);

  // Pairing <e^{tA*} nu, f> = <nu, e^{tA} f>.
  std::vector<double> f(n);
  for (std::size_t i = 0; i < n; ++i) f[i] = std::sin(5.0 * i / n);
  const auto sf = semigroup_apply(f, k, 1.3);
  CHECK(grid_pair(b, f) == doctest::Approx(grid_pair(nu, sf)).epsilon(1e-11));
}

TEST_CASE("field CSV") {
  TimeField f(1, 2, 1.0, 0.5);
  std::ostringstream os;
  write_field_csv(os, f);
  CHECK(os.str() == "t,x,value\n0,0.5,0.5\n0,1,0.5\n1,0.5,0.5\n1,1,0.5\n");
}
