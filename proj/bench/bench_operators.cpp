// Serial reference operators against the optimized (factorized or threaded)
// paths, plus simulator throughput across thread counts.

#include <benchmark/benchmark.h>
#include <omp.h>

#include <cmath>
#include <vector>

#include "ehrenfest/kernel.hpp"
#include "ehrenfest/simulator.hpp"

using namespace ehrenfest;

namespace {

// A dense table kernel has no factorization, so the optimized path is the
// threaded double sum; the product kernel exercises the O(N * rank) path.
RateKernel make_kernel(std::size_t n, bool dense) {
  const auto x = [n](std::size_t i) { return static_cast<double>(i + 1) / static_cast<double>(n); };
  if (!dense) {
    std::vector<double> l(n), r(n);
    for (std::size_t i = 0; i < n; ++i) {
      l[i] = 1.0 + 0.5 * std::sin(2.0 * M_PI * x(i));
      r[i] = 1.0 + x(i);
    }
    return RateKernel::product(l, r);
  }
  std::vector<double> t(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) t[i * n + j] = 1.0 + std::abs(x(i) - x(j));
  return RateKernel::table(n, std::move(t));
}

TestFn make_f(std::size_t n) {
  return TestFn::sample(n, [](double x) { return std::cos(2.0 * M_PI * x); });
}

template <bool Serial>
void BM_P1(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto k = make_kernel(n, state.range(1) != 0);
  const auto f = make_f(n);
  for (auto _ : state) {
    if constexpr (Serial) benchmark::DoNotOptimize(serial::apply_P1(k, f));
    else benchmark::DoNotOptimize(apply_P1(k, f));
  }
}

template <bool Serial>
void BM_B(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto k = make_kernel(n, state.range(1) != 0);
  const auto f = make_f(n);
  for (auto _ : state) {
    if constexpr (Serial) benchmark::DoNotOptimize(serial::apply_B(k, f));
    else benchmark::DoNotOptimize(apply_B(k, f));
  }
}

template <bool Serial>
void BM_Kquad(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto k = make_kernel(n, state.range(1) != 0);
  const auto f = make_f(n);
  for (auto _ : state) {
    if constexpr (Serial) benchmark::DoNotOptimize(serial::apply_Kquad(k, f));
    else benchmark::DoNotOptimize(apply_Kquad(k, f));
  }
}

template <bool Serial>
void BM_adjoint(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto k = make_kernel(n, state.range(1) != 0);
  const std::vector<double> rho(n, 1.0);
  std::vector<double> out(n);
  for (auto _ : state) {
    if constexpr (Serial) serial::apply_adjoint(k, rho, out);
    else apply_adjoint(k, rho, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Serial>
void BM_carre(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto k = make_kernel(n, state.range(1) != 0);
  const auto f = make_f(n);
  const std::vector<double> rho(n, 1.0);
  for (auto _ : state) {
    if constexpr (Serial) benchmark::DoNotOptimize(serial::carre_bracket(f.span(), f.span(), k, rho));
    else benchmark::DoNotOptimize(carre_bracket(f.span(), f.span(), k, rho));
  }
}

// Independent replicas of one trajectory each, split over `threads`.
void BM_simulate_replicas(benchmark::State& state) {
  const std::size_t n = 1000, replicas = 64;
  const int threads = static_cast<int>(state.range(0));
  const auto k = RateKernel::constant(n, 1.0);
  const Simulator sim(k, Grid(n, 1.0, 1));
  const InitialProfile phi(std::vector<double>(n, 1.0));
  const std::vector<double> obs{1.0};
  std::uint64_t seed = 1;
  for (auto _ : state) {
    double acc = 0.0;
#pragma omp parallel for num_threads(threads) schedule(dynamic) reduction(+ : acc)
    for (std::size_t r = 0; r < replicas; ++r) {
      RngStream rng(seed, r);
      acc += static_cast<double>(sim.run(sample_initial(phi, rng), obs, rng).states[0].counts[0]);
    }
    benchmark::DoNotOptimize(acc);
    ++seed;
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * replicas));
}

void operator_args(benchmark::internal::Benchmark* b) {
  for (long n : {256, 1024, 4096}) {
    b->Args({n, 0});
    b->Args({n, 1});
  }
  b->ArgNames({"n", "dense"});
}

}  // namespace

BENCHMARK(BM_P1<true>)->Name("P1/serial")->Apply(operator_args);
BENCHMARK(BM_P1<false>)->Name("P1/parallel")->Apply(operator_args);
BENCHMARK(BM_B<true>)->Name("B/serial")->Apply(operator_args);
BENCHMARK(BM_B<false>)->Name("B/parallel")->Apply(operator_args);
BENCHMARK(BM_Kquad<true>)->Name("Kquad/serial")->Apply(operator_args);
BENCHMARK(BM_Kquad<false>)->Name("Kquad/parallel")->Apply(operator_args);
BENCHMARK(BM_adjoint<true>)->Name("adjoint/serial")->Apply(operator_args);
BENCHMARK(BM_adjoint<false>)->Name("adjoint/parallel")->Apply(operator_args);
BENCHMARK(BM_carre<true>)->Name("carre/serial")->Apply(operator_args);
BENCHMARK(BM_carre<false>)->Name("carre/parallel")->Apply(operator_args);
BENCHMARK(BM_simulate_replicas)
    ->ArgName("threads")
    ->Arg(1)
    ->Arg(omp_get_num_procs())
    ->Unit(benchmark::kMillisecond)
    ->UseRealTime();

BENCHMARK_MAIN();
