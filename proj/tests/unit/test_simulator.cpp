#include <cmath>
#include <sstream>

#include "doctest.h"
#include "ehrenfest/semigroup.hpp"
#include "ehrenfest/simulator.hpp"
#include "ehrenfest/stats.hpp"

using namespace ehrenfest;

TEST_CASE("scaling sequence validation") {
  CHECK_THROWS(ScalingSequence(0.5));
  CHECK_THROWS(ScalingSequence(1.0));
  CHECK(ScalingSequence(0.75).a(10000) == doctest::Approx(1000.0));
}

TEST_CASE("rng streams are reproducible and distinct") {
  RngStream a(7, 3), b(7, 3), c(7, 4);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    (void)c;
  }
  RngStream d(7, 3), e(7, 4);
  int same = 0;
  for (int i = 0; i < 100; ++i) same += d.next_u64() == e.next_u64();
  CHECK(same == 0);
}

TEST_CASE("poisson variates across the mean range") {
  RngStream rng(11, 0);
  for (double mean : {0.3, 4.0, 25.0, 400.0}) {
    std::vector<std::uint64_t> x(20000);
    for (auto& v : x) v = rng.poisson(mean);
    CHECK(stats::poisson_gof(x, mean).p_value > 1e-3);
  }
}

TEST_CASE("initial sampling") {
  const std::size_t n = 10000;
  RngStream rng(1, 0);
  const auto s = sample_initial(InitialProfile(std::vector<double>(n, 1.0)), rng);
  CHECK(s.consistent());
  const double mean = static_cast<double>(s.total) / n;
  CHECK(mean >= 0.97);
  CHECK(mean <= 1.03);
  const auto gof = stats::poisson_gof(s.counts, 1.0);
  CHECK(gof.p_value > 0.01);

  const ScalingSequence sc(0.75);
  RngStream r2(2, 0);
  const auto p = sample_initial_perturbed(InitialProfile(std::vector<double>(n, 1.0)),
                                          TestFn(n, 1.0), sc, r2);
  const double expect = 1.0 + std::pow(n, -0.25);
  CHECK(std::abs(static_cast<double>(p.total) / n - expect) < 3.0 * std::sqrt(expect / n));
  RngStream r3(3, 0);
  CHECK_THROWS_WITH(sample_initial_perturbed(InitialProfile(std::vector<double>(4, 1.0)),
                                             TestFn(std::vector<double>{0.0, -100.0, 0.0, 0.0}),
                                             ScalingSequence(0.75), r3),
                    doctest::Contains("urn 2"));
}

TEST_CASE("trajectories conserve mass and are deterministic") {
  const std::size_t n = 30;
  const Grid grid(n, 2.0, 10);
  const auto k = RateKernel::polynomial(n, {{1.0, 0.0}, {0.0, 1.0}});
  RngStream r0(5, 0);
  const auto x0 = sample_initial(InitialProfile(std::vector<double>(n, 3.0)), r0);
  const std::vector<double> obs{0.0, 0.5, 1.0, 2.0};
  RngStream a(9, 1), b(9, 1);
  const auto ta = simulate_trajectory(x0, k, grid, obs, a, true);
  const auto tb = simulate_trajectory(x0, k, grid, obs, b, true);
  REQUIRE(ta.states.size() == 4);
  for (std::size_t q = 0; q < 4; ++q) {
    CHECK(ta.states[q].total == x0.total);
    CHECK(ta.states[q].consistent());
    CHECK(ta.states[q].counts == tb.states[q].counts);
  }
  CHECK(ta.states[0].counts == x0.counts);
  CHECK(*ta.jump_log == *tb.jump_log);
  CHECK(ta.event_count == ta.jump_log->size());
  for (const auto& j : *ta.jump_log) CHECK(j.source != j.destination);

  std::stringstream bin;
  write_jump_log(bin, *ta.jump_log);
  CHECK(read_jump_log(bin) == *ta.jump_log);
}

TEST_CASE("empty system stays empty") {
  const Grid grid(5, 1.0, 10);
  RngStream rng(1, 1);
  const std::vector<double> obs{0.5, 1.0};
  const auto t = simulate_trajectory(UrnState(std::vector<std::uint64_t>(5, 0)),
                                     RateKernel::constant(5, 1.0), grid, obs, rng);
  CHECK(t.event_count == 0);
  CHECK(t.states.size() == 2);
}

TEST_CASE("two-urn Ehrenfest chain has stationary mean K/2") {
  const std::size_t k_molecules = 100;
  const Grid grid(2, 1000.0, 1000);
  std::vector<double> obs;
  for (int q = 1; q <= 10000; ++q) obs.push_back(0.1 * q);
  RngStream rng(4, 0);
  const auto t = simulate_trajectory(UrnState({k_molecules, 0}), RateKernel::constant(2, 1.0),
                                     grid, obs, rng);
  double avg = 0.0;
  for (std::size_t q = 1000; q < t.states.size(); ++q) avg += static_cast<double>(t.states[q].counts[0]);
  avg /= static_cast<double>(t.states.size() - 1000);
  CHECK(std::abs(avg - 50.0) < 2.5);
}

TEST_CASE("field observables") {
  const UrnState s({1, 2, 3, 4});
  CHECK(empirical_measure(s, TestFn(4, 1.0)) == doctest::Approx(2.5));
  CHECK(empirical_measure(UrnState(std::vector<std::uint64_t>(4, 0)), TestFn(4, 2.0)) == 0.0);
  const ScalingSequence sc(0.75);
  const std::vector<double> m{1.2, 1.8, 3.4, 3.6};
  const double a = sc.a(4);
  CHECK(fluctuation_field(s, m, sc, TestFn(4, 1.0)) == doctest::Approx(0.0));
  CHECK(fluctuation_field(s, m, sc, TestFn(std::vector<double>{1, 0, 0, 0})) ==
        doctest::Approx(-0.2 / a));

  TrajectorySnapshots traj;
  traj.initial = s;
  traj.jump_log = std::vector<JumpRecord>{{0.1, 0, 3}, {0.2, 2, 1}};
  const TestFn h(std::vector<double>{0.0, 1.0, 2.0, 3.0});
  CHECK(jump_quadratic_variation(traj, h, sc) == doctest::Approx((9.0 + 1.0) / (a * a)));
  CHECK(jump_quadratic_variation(traj, TestFn(4, 5.0), sc) == 0.0);
  traj.jump_log.reset();
  CHECK_THROWS(jump_quadratic_variation(traj, h, sc));
}

TEST_CASE("exact-time sampler means") {
  const std::size_t n = 50;
  const Grid grid(n, 1.0, 10);
  const auto phi = InitialProfile::sample(n, [](double x) { return x; });
  const auto m = mean_field_at(phi, build_generator(RateKernel::constant(n, 1.0), grid), 1.0);
  RngStream rng(8, 0);
  std::vector<double> totals;
  for (int r = 0; r < 2000; ++r) totals.push_back(static_cast<double>(sample_exact_at_time(m, rng).total));
  const auto s = stats::summarize(totals);
  CHECK(std::abs(s.mean - phi.total()) < 3.0 * s.se);
}

TEST_CASE("snapshot CSV") {
  TrajectorySnapshots t;
  t.times = {0.5};
  t.states = {UrnState({2, 0})};
  std::ostringstream os;
  write_snapshots_csv(os, t, 3, true);
  CHECK(os.str() == "replica,t,i,count\n3,0.5,1,2\n3,0.5,2,0\n");
}
