#include <cmath>

#include "doctest.h"
#include "ehrenfest/semigroup.hpp"
#include "ehrenfest/stats.hpp"
#include "ehrenfest/tilted.hpp"

using namespace ehrenfest;

TEST_CASE("tilted rate multipliers stay within the bound") {
  const Grid grid(10, 1.0, 20);
  const auto G = SpaceTimeFn::sample(grid, [](double t, double x) { return std::sin(6 * x + t); });
  const TiltedRateTable table(G, 0.3);
  CHECK(table.bound() == doctest::Approx(std::exp(2 * 0.3 * G.sup_norm())));
  for (double t : {0.0, 0.33, 1.0})
    for (std::size_t i = 0; i < 10; ++i)
      for (std::size_t j = 0; j < 10; ++j) {
        const double m = table.multiplier(t, i, j);
        CHECK(m <= table.bound() * (1 + 1e-15));
        CHECK(m >= 1.0 / table.bound() * (1 - 1e-15));
      }
  CHECK_THROWS(TiltedRateTable(SpaceTimeFn(grid, 400.0), 1.0));
}

TEST_CASE("log gamma on two urns matches the hand-computed compensator") {
  const Grid grid(2, 1.0, 4);
  const auto k = RateKernel::constant(2, 1.0);
  const ScalingSequence sc(0.75);
  const double beta = sc.a(2) / 2.0;
  const double g0 = 0.3, g1 = -0.8;
  const auto G = SpaceTimeFn::constant_in_time(grid, TestFn(std::vector<double>{g0, g1}));
  TrajectorySnapshots traj;
  traj.initial = UrnState({3, 1});
  traj.t_end = 1.0;
  traj.jump_log = std::vector<JumpRecord>{{0.2, 0, 1}, {0.5, 0, 1}, {0.9, 1, 0}};
  const double c0 = 0.5 * std::expm1(beta * (g1 - g0));
  const double c1 = 0.5 * std::expm1(beta * (g0 - g1));
  // States (3,1) on [0,.2), (2,2) on [.2,.5), (1,3) on [.5,.9), (2,2) on [.9,1].
  const double comp = 0.2 * (3 * c0 + c1) + 0.3 * (2 * c0 + 2 * c1) + 0.4 * (c0 + 3 * c1) +
                      0.1 * (2 * c0 + 2 * c1);
  const double jumps = beta * ((g1 - g0) + (g1 - g0) + (g0 - g1));
  CHECK(log_gamma(traj, G, k, sc) == doctest::Approx(jumps - comp).epsilon(1e-13));
  CHECK(log_gamma(traj, SpaceTimeFn(grid), k, sc) == 0.0);
  traj.jump_log.reset();
  CHECK_THROWS(log_gamma(traj, G, k, sc));
}

TEST_CASE("compensator table integrates the time-dependent rate") {
  const std::size_t n = 12;
  const Grid grid(n, 1.0, 8);
  const auto k = RateKernel::polynomial(n, {{1.0, 0.0}, {0.0, 1.0}});
  const auto G = SpaceTimeFn::sample(grid, [](double t, double x) { return std::sin(2 * M_PI * x) * (1 + t * t); });
  const double beta = 0.4;
  const CompensatorTable table(G, k, beta);
  // Fine composite Simpson on the piecewise-linear-in-time G.
  const std::size_t m = 4000;
  for (double t_end : {0.37, 1.0}) {
    std::vector<double> acc(n, 0.0);
    const double h = t_end / m;
    for (std::size_t s = 0; s <= m; ++s) {
      const double w = (s == 0 || s == m) ? 1.0 : (s % 2 ? 4.0 : 2.0);
      const auto c = CompensatorTable::rate_at(G, k, beta, s * h);
      for (std::size_t i = 0; i < n; ++i) acc[i] += w * c[i] * h / 3.0;
    }
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(table.cumulative(i, t_end) - acc[i]) < 1e-6);
  }
}

TEST_CASE("zero tilt reproduces the plain dynamics exactly") {
  const std::size_t n = 20;
  const Grid grid(n, 1.0, 10);
  const auto k = RateKernel::polynomial(n, {{1.0, 0.0}, {0.0, 1.0}});
  RngStream r0(1, 0);
  const auto x0 = sample_initial(InitialProfile(std::vector<double>(n, 2.0)), r0);
  const std::vector<double> obs{0.5, 1.0};
  RngStream a(2, 0), b(2, 0);
  const Simulator sim(k, grid);
  const auto plain = sim.run(x0, obs, a, true);
  const auto tilt = tilted_simulate(x0, sim, SpaceTimeFn(grid), ScalingSequence(0.75), obs, b, true);
  CHECK(*plain.jump_log == *tilt.jump_log);
  CHECK(plain.states[1].counts == tilt.states[1].counts);
}

TEST_CASE("xi density for the uniform kernel") {
  const std::size_t n = 30;
  const auto g = TestFn::sample(n, [](double x) { return x * x; });
  double mean = 0.0;
  for (double v : g.values) mean += v / n;
  const auto xi = xi_density(g.values, RateKernel::constant(n, 1.0), std::vector<double>(n, 1.0));
  for (std::size_t i = 0; i < n; ++i) CHECK(xi[i] == doctest::Approx(2.0 * (g[i] - mean)).epsilon(1e-12));

  // Defining identity against the carre bracket for a general kernel.
  const auto k = RateKernel::polynomial(n, {{1.0, 0.5}, {0.2, 1.0}});
  const auto rho = TestFn::sample(n, [](double x) { return 1.0 + x; });
  const auto h = TestFn::sample(n, [](double x) { return std::cos(4 * x); });
  const auto xk = xi_density(g.values, k, rho.values);
  CHECK(grid_pair(xk, h.values) == doctest::Approx(carre_bracket(g, h, k, rho.values)).epsilon(1e-12));
}

TEST_CASE("solve_theta closed forms") {
  const std::size_t n = 40;
  const Grid grid(n, 1.0, 200);
  const auto k = RateKernel::constant(n, 1.0);
  const auto mu = hydro_solve(k, InitialProfile(std::vector<double>(n, 1.0)), grid);

  const auto z = solve_theta(TestFn(n, 0.0), SpaceTimeFn(grid), k, mu);
  CHECK(z.path.density.sup_norm() == 0.0);

  const auto f = TestFn::sample(n, [](double x) { return std::cos(2 * M_PI * x); });
  const auto free = solve_theta(f, SpaceTimeFn(grid), k, mu);
  for (std::size_t kk = 0; kk <= grid.n_time; kk += 20)
    for (std::size_t i = 0; i < n; ++i)
      CHECK(std::abs(free.path.density(kk, i) - std::exp(-grid.t(kk)) * f[i]) < 1e-6);

  const auto g = TestFn::sample(n, [](double x) { return x * x; });
  double gbar = 0.0;
  for (double v : g.values) gbar += v / n;
  const auto forced = solve_theta(TestFn(n, 0.0), SpaceTimeFn::constant_in_time(grid, g), k, mu);
  CHECK(forced.method_gap < 1e-6);
  for (std::size_t kk = 0; kk <= grid.n_time; kk += 20) {
    const double t = grid.t(kk);
    for (std::size_t i = 0; i < n; ++i)
      CHECK(std::abs(forced.path.density(kk, i) - 2.0 * (1 - std::exp(-t)) * (g[i] - gbar)) < 1e-6);
  }
}

TEST_CASE("exact MGF") {
  const ScalingSequence sc(0.6);
  CHECK(mgf_exact(TestFn(50, 0.0), std::vector<double>(50, 1.0), sc) == 0.0);
  const std::size_t n = 1000000;
  const auto f = TestFn::sample(n, [](double x) { return std::cos(2 * M_PI * x); });
  const std::vector<double> m(n, 1.0);
  const double b = sc.a(n) / n;
  double quad = 0.0;
  for (std::size_t i = 0; i < n; ++i) quad += 0.5 * b * b * m[i] * f[i] * f[i];
  CHECK(std::abs(mgf_exact(f, m, sc) / quad - 1.0) < 0.01);
}

TEST_CASE("importance sampling degenerate cases") {
  const std::size_t n = 50;
  const Grid grid(n, 1.0, 10);
  const auto k = RateKernel::constant(n, 1.0);
  const auto phi = InitialProfile(std::vector<double>(n, 1.0));
  const ScalingSequence sc(0.75);
  ImportanceConfig cfg;
  cfg.replicas = 400;
  cfg.obs_times = {1.0};
  const auto G = SpaceTimeFn::sample(grid, [](double, double x) { return std::sin(2 * M_PI * x); });
  const auto f = TestFn::sample(n, [](double x) { return 0.5 * std::cos(2 * M_PI * x); });
  const auto sure = importance_estimate([](const TrajectorySnapshots&) { return true; }, f, G, k, phi, sc, cfg);
  CHECK(std::abs(sure.raw_value - 1.0) < 3.0 * sure.std_error);
  CHECK(sure.raw_value == doctest::Approx(sure.mean_weight).epsilon(1e-12));
  CHECK(sure.value == std::min(1.0, sure.raw_value));
  CHECK(sure.self_normalized == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sure.ess <= static_cast<double>(cfg.replicas) + 1e-9);
  const auto plain = importance_estimate([](const TrajectorySnapshots&) { return true; },
                                         TestFn(n, 0.0), SpaceTimeFn(grid), k, phi, sc, cfg);
  CHECK(plain.value == 1.0);
  CHECK(plain.std_error == 0.0);

  cfg.replicas = 4000;
  const auto half = importance_estimate(
      [n](const TrajectorySnapshots& t) { return t.states.back().total > n; }, TestFn(n, 0.0),
      SpaceTimeFn(grid), k, phi, sc, cfg);
  const double exact = std::exp(stats::poisson_log_sf(50.0, 51.0));
  CHECK(std::abs(half.value - exact) < 3.0 * half.std_error);
  CHECK(half.ess == doctest::Approx(4000.0));
  const auto j = to_json(half);
  CHECK(j.contains("stderr"));
  CHECK(j["replicas"] == 4000);
}

TEST_CASE("importance sampling covers an exact tail in at least 95% of repeated runs") {
  // P(total at T0 >= 60) for N = 50 is about 0.09; the tilt pushes the
  // initial law up so roughly half the replicas hit.
  const std::size_t n = 50;
  const Grid grid(n, 1.0, 10);
  const auto k = RateKernel::constant(n, 1.0);
  const auto phi = InitialProfile(std::vector<double>(n, 1.0));
  const ScalingSequence sc(0.75);
  const double beta = sc.a(n) / static_cast<double>(n);
  const TestFn f(n, 10.0 / (beta * static_cast<double>(n)));
  const SpaceTimeFn G(grid);
  const double exact = std::exp(stats::poisson_log_sf(50.0, 60.0));
  int covered = 0;
  const int runs = 20;
  for (int run = 0; run < runs; ++run) {
    ImportanceConfig cfg;
    cfg.replicas = 400;
    cfg.master_seed = 1000 + static_cast<std::uint64_t>(run);
    cfg.obs_times = {1.0};
    const auto est = importance_estimate(
        [](const TrajectorySnapshots& t) { return t.states.back().total >= 60; }, f, G, k, phi,
        sc, cfg);
    CHECK(est.value >= 0.0);
    CHECK(est.value <= 1.0);
    if (std::abs(est.raw_value - exact) < 3.0 * est.std_error) ++covered;
  }
  CHECK(covered >= 19);
}
