#include <cmath>
#include <random>

#include "doctest.h"
#include "ehrenfest/functions.hpp"
#include "ehrenfest/kernel.hpp"

using namespace ehrenfest;

namespace {

RateKernel one_plus_xy(std::size_t n) { return RateKernel::polynomial(n, {{1.0, 0.0}, {0.0, 1.0}}); }

double max_err(const TestFn& got, auto&& exact) {
  double m = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double x = static_cast<double>(i + 1) / static_cast<double>(got.size());
    m = std::max(m, std::abs(got[i] - exact(x)));
  }
  return m;
}

TestFn random_fn(std::size_t n, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  TestFn f(n, 0.0);
  for (auto& v : f.values) v = u(gen);
  return f;
}

RateKernel random_table(std::size_t n, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.2, 2.0);
  std::vector<double> v(n * n);
  for (auto& x : v) x = u(gen);
  return RateKernel::table(n, std::move(v));
}

}  // namespace

TEST_CASE("grid validation") {
  CHECK_THROWS(Grid(1, 1.0, 10));
  CHECK_THROWS(Grid(4, 0.0, 10));
  CHECK_THROWS(Grid(4, 1.0, 0));
  const Grid g(4, 2.0, 8);
  CHECK(g.x(0) == doctest::Approx(0.25));
  CHECK(g.x(3) == 1.0);
  CHECK(g.t(8) == 2.0);
}

TEST_CASE("kernel construction rejects nonpositive entries") {
  CHECK_THROWS(RateKernel::constant(4, 0.0));
  CHECK_THROWS(RateKernel::table(2, {1.0, 1.0, -1.0, 1.0}));
  CHECK_THROWS(RateKernel::polynomial(4, {{1.0, 0.0}, {0.0, -5.0}}));
  CHECK_THROWS(InitialProfile({1.0, 0.0}));
  const auto k = one_plus_xy(10);
  CHECK(k.max_norm() == doctest::Approx(2.0));
  CHECK(k(9, 9) == doctest::Approx(2.0));
}

TEST_CASE("P1 examples") {
  const auto c = RateKernel::constant(50, 1.0);
  const auto f = random_fn(50, 1);
  const auto p = apply_P1(c, f);
  double mean = 0.0;
  for (double v : f.values) mean += v / 50.0;
  for (double v : p.values) CHECK(v == doctest::Approx(mean).epsilon(1e-12));
  const auto pc = apply_P1(c, TestFn(50, 3.5));
  for (double v : pc.values) CHECK(v == doctest::Approx(3.5));

  const std::size_t n = 1000;
  const auto x = TestFn::sample(n, [](double x) { return x; });
  CHECK(max_err(apply_P1(one_plus_xy(n), x), [](double x) { return 0.5 + x / 3.0; }) <= 2.0 / n);
}

TEST_CASE("P2 examples") {
  const auto f = random_fn(40, 2);
  const auto p = apply_P2(RateKernel::constant(40, 1.0), f);
  for (std::size_t i = 0; i < 40; ++i) CHECK(p[i] == doctest::Approx(f[i]).epsilon(1e-13));
  const auto z = apply_P2(one_plus_xy(40), TestFn(40, 0.0));
  for (double v : z.values) CHECK(v == 0.0);
  const std::size_t n = 1000;
  CHECK(max_err(apply_P2(one_plus_xy(n), TestFn(n, 1.0)), [](double x) { return 1.0 + x / 2.0; }) <=
        2.0 / n);
}

TEST_CASE("B examples") {
  const auto k = one_plus_xy(30);
  for (double v : apply_B(k, TestFn(30, 7.0)).values) CHECK(v == doctest::Approx(0.0));
  const std::size_t n = 64;
  const std::size_t i0 = 17;
  TestFn f(n, std::log(2.0));
  f[i0] = 0.0;
  const auto b = apply_B(RateKernel::constant(n, 1.0), f);
  CHECK(b[i0] == doctest::Approx(static_cast<double>(n - 1) / n).epsilon(1e-13));
  const std::size_t m = 1000;
  const auto x = TestFn::sample(m, [](double x) { return x; });
  CHECK(max_err(apply_B(RateKernel::constant(m, 1.0), x),
                [](double x) { return std::exp(-x) * (std::exp(1.0) - 1.0) - 1.0; }) <= 2.0 / m);
  TestFn wild(8, 0.0);
  wild[3] = 800.0;
  CHECK_THROWS_AS(apply_B(RateKernel::constant(8, 1.0), wild), NumericalError);
}

TEST_CASE("B is invariant under constant shifts") {
  const auto k = random_table(20, 3);
  auto f = random_fn(20, 4);
  const auto b0 = apply_B(k, f);
  for (auto& v : f.values) v += 3.25;
  const auto b1 = apply_B(k, f);
  for (std::size_t i = 0; i < 20; ++i) CHECK(b1[i] == doctest::Approx(b0[i]).epsilon(1e-12));
}

TEST_CASE("Kquad examples") {
  for (double v : apply_Kquad(one_plus_xy(10), TestFn(10, 2.0)).values) CHECK(v == 0.0);
  const std::size_t n = 1000;
  const auto x = TestFn::sample(n, [](double x) { return x; });
  CHECK(max_err(apply_Kquad(RateKernel::constant(n, 1.0), x),
                [](double x) { return x * x - x + 1.0 / 3.0; }) <= 2.0 / n);
  const auto two = apply_Kquad(RateKernel::constant(2, 1.0), TestFn(std::vector<double>{0.0, 1.0}));
  CHECK(two[0] == doctest::Approx(0.5));
  CHECK(two[1] == doctest::Approx(0.5));
  const auto q = apply_Kquad(random_table(25, 5), random_fn(25, 6));
  for (double v : q.values) CHECK(v > 0.0);
}

TEST_CASE("carre bracket examples") {
  const auto k = random_table(30, 7);
  std::vector<double> rho(30, 1.0);
  const auto f = random_fn(30, 8), g = random_fn(30, 9);
  CHECK(carre_bracket(TestFn(30, 1.5), g, k, rho) == 0.0);
  CHECK(carre_bracket(f, g, k, rho) == doctest::Approx(carre_bracket(g, f, k, rho)).epsilon(1e-13));
  CHECK(carre_bracket(f, f, k, rho) >= 0.0);
  const std::size_t n = 1000;
  const auto x = TestFn::sample(n, [](double x) { return x; });
  const std::vector<double> ones(n, 1.0);
  CHECK(std::abs(carre_bracket(x, x, RateKernel::constant(n, 1.0), ones) - 1.0 / 6.0) <= 5.0 / n);
}

TEST_CASE("carre integrand reproduces the bracket") {
  const auto k = one_plus_xy(40);
  const auto f = random_fn(40, 10), g = random_fn(40, 11);
  const auto rho = random_fn(40, 12);
  const auto c = carre_integrand(f.values, g.values, k);
  CHECK(grid_pair(rho.values, c) == doctest::Approx(carre_bracket(f, g, k, rho.values)).epsilon(1e-12));
}

TEST_CASE("pathspace inner product") {
  const Grid grid(200, 1.0, 50);
  const auto k = RateKernel::constant(200, 1.0);
  DensityPath mu(grid, 1.0);
  const SpaceTimeFn zero(grid);
  const auto G = SpaceTimeFn::sample(grid, [](double, double x) { return x; });
  CHECK(pathspace_inner(zero, G, k, mu) == 0.0);
  CHECK(std::abs(pathspace_inner(G, G, k, mu) - 1.0 / 6.0) <= 5.0 / 200 + 1.0 / (50.0 * 50.0));
  const auto F = SpaceTimeFn::sample(grid, [](double t, double x) { return std::sin(3 * x + t); });
  CHECK(pathspace_inner(F, G, k, mu) == doctest::Approx(pathspace_inner(G, F, k, mu)).epsilon(1e-13));
  CHECK(pathspace_inner(F, F, k, mu) >= 0.0);
  CHECK_THROWS_AS(pathspace_inner(F, SpaceTimeFn(Grid(200, 1.0, 49)), k, mu), DimensionMismatch);
}

TEST_CASE("linearity of P1 and P2") {
  const auto k = random_table(25, 13);
  const auto f = random_fn(25, 14), g = random_fn(25, 15);
  TestFn comb(25, 0.0);
  for (std::size_t i = 0; i < 25; ++i) comb[i] = 2.0 * f[i] - 0.5 * g[i];
  const auto a = apply_P1(k, comb), fa = apply_P1(k, f), ga = apply_P1(k, g);
  const auto b = apply_P2(k, comb), fb = apply_P2(k, f), gb = apply_P2(k, g);
  for (std::size_t i = 0; i < 25; ++i) {
    CHECK(a[i] == doctest::Approx(2.0 * fa[i] - 0.5 * ga[i]).epsilon(1e-12));
    CHECK(b[i] == doctest::Approx(2.0 * fb[i] - 0.5 * gb[i]).epsilon(1e-12));
  }
}

TEST_CASE("pathspace Gram is positive semi-definite") {
  const Grid grid(30, 1.0, 20);
  const auto k = random_table(30, 16);
  DensityPath mu(grid, 1.0);
  std::vector<SpaceTimeFn> fam;
  for (int m = 0; m < 6; ++m) {
    fam.push_back(SpaceTimeFn::sample(grid, [m](double t, double x) {
      return std::cos(m * x * 3.0) * (1.0 + m * t);
    }));
  }
  double trace = 0.0;
  double min_minor = 1e300;
  std::vector<double> gram(36);
  for (int a = 0; a < 6; ++a) {
    for (int b = 0; b < 6; ++b) gram[a * 6 + b] = pathspace_inner(fam[a], fam[b], k, mu);
    trace += gram[a * 6 + a];
  }
  // Smallest eigenvalue via power iteration on (trace I - G).
  std::vector<double> v(6, 1.0), w(6);
  double lam = 0.0;
  for (int it = 0; it < 2000; ++it) {
    double norm = 0.0;
    for (int a = 0; a < 6; ++a) {
      w[a] = trace * v[a];
      for (int b = 0; b < 6; ++b) w[a] -= gram[a * 6 + b] * v[b];
      norm += w[a] * w[a];
    }
    norm = std::sqrt(norm);
    lam = norm;
    for (int a = 0; a < 6; ++a) v[a] = w[a] / norm;
  }
  min_minor = trace - lam;
  CHECK(min_minor >= -1e-10 * trace);
}

TEST_CASE("optimised operators match the direct double sums") {
  for (const auto& k : {one_plus_xy(37), random_table(37, 17), RateKernel::constant(37, 0.7),
                        RateKernel::product(std::vector<double>(37, 1.5), std::vector<double>(37, 0.5))}) {
    const auto f = random_fn(37, 20), g = random_fn(37, 21), rho = random_fn(37, 22);
    auto close = [](const TestFn& a, const TestFn& b) {
      for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
    };
    close(apply_P1(k, f), serial::apply_P1(k, f));
    close(apply_P2(k, f), serial::apply_P2(k, f));
    close(apply_B(k, f), serial::apply_B(k, f));
    close(apply_Kquad(k, f), serial::apply_Kquad(k, f));
    std::vector<double> a(37), b(37);
    apply_adjoint(k, rho.values, a);
    serial::apply_adjoint(k, rho.values, b);
    close(TestFn(a), TestFn(b));
    CHECK(carre_bracket(f, g, k, rho.values) ==
          doctest::Approx(serial::carre_bracket(f.values, g.values, k, rho.values)).epsilon(1e-12));
  }
}

TEST_CASE("large separable kernels agree with the reference above the threading threshold") {
  const std::size_t n = 1500;
  const auto k = one_plus_xy(n);
  const auto f = TestFn::sample(n, [](double x) { return std::sin(5 * x); });
  const auto a = apply_B(k, f), b = serial::apply_B(k, f);
  for (std::size_t i = 0; i < n; i += 37) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-11));
}

TEST_CASE("SBP time derivative telescopes under trapezoidal weights") {
  std::vector<double> g(41);
  for (std::size_t k = 0; k < g.size(); ++k) g[k] = std::sin(0.3 * k) + 0.01 * k * k;
  const double dt = 0.05;
  const auto d = time_derivative(g, dt);
  const auto w = trapezoid_weights(40, 2.0);
  double s = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) s += w[k] * d[k];
  CHECK(s == doctest::Approx(g.back() - g.front()).epsilon(1e-12));
}

TEST_CASE("function specs") {
  const auto f = ScalarFunction::parse("const 1 + cos 1 0.5");
  CHECK(f(0.5) == doctest::Approx(0.5));
  CHECK(!f.is_constant());
  CHECK(ScalarFunction::parse("poly 1 2 3")(2.0) == doctest::Approx(17.0));
  CHECK(ScalarFunction::parse("sin 1")(0.25) == doctest::Approx(1.0));
  CHECK(ScalarFunction::parse("exp 1e+0 2")(1.0) == doctest::Approx(2.0 * std::exp(1.0)));
  CHECK(ScalarFunction::parse("const 2").is_constant());
  CHECK_THROWS(ScalarFunction::parse("bogus 1"));
  CHECK_THROWS(ScalarFunction::parse("cos"));
  CHECK_THROWS(ScalarFunction::parse(""));
}
