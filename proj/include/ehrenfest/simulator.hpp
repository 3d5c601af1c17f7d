#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "ehrenfest/alias_table.hpp"
#include "ehrenfest/fenwick_tree.hpp"
#include "ehrenfest/grid.hpp"
#include "ehrenfest/kernel.hpp"
#include "ehrenfest/rng.hpp"

namespace ehrenfest {

struct UrnState {
  std::vector<std::uint64_t> counts;
  std::uint64_t total = 0;

  UrnState() = default;
  explicit UrnState(std::vector<std::uint64_t> c);

  std::size_t size() const { return counts.size(); }
  void move(std::size_t src, std::size_t dst) {
    --counts[src];
    ++counts[dst];
  }
  // Recomputes the sum and compares it with the cached total.
  bool consistent() const;
};

struct JumpRecord {
  double time;
  std::uint32_t source;
  std::uint32_t destination;

  bool operator==(const JumpRecord&) const = default;
};

struct TrajectorySnapshots {
  UrnState initial;
  std::vector<double> times;
  std::vector<UrnState> states;
  std::uint64_t event_count = 0;
  double t_end = 0.0;
  std::optional<std::vector<JumpRecord>> jump_log;
};

// a_N = N^alpha with 1/2 < alpha < 1, so that sqrt(N) << a_N << N.
class ScalingSequence {
 public:
  explicit ScalingSequence(double alpha = 0.75);
  double alpha() const { return alpha_; }
  double a(std::size_t n) const { return std::pow(static_cast<double>(n), alpha_); }

 private:
  double alpha_;
};

// Samples the destination j != i of a molecule leaving urn i, with
// probability proportional to lambda(i, j).
//
//   rank-one kernels:   one alias table over the right factor; j == i is
//                       rejected and redrawn
//   nonnegative sums:   pick a separable term by its row weight, then its
//                       right factor, again rejecting j == i
//   anything else:      one alias table per row (N^2 memory, guarded)
class DestinationSampler {
 public:
  static constexpr std::size_t kMaxDenseEntries = std::size_t{1} << 26;

  DestinationSampler() = default;
  explicit DestinationSampler(const RateKernel& kernel);

  std::size_t sample(std::size_t i, RngStream& rng) const;

 private:
  enum class Mode { rank_one, mixture, rows };
  Mode mode_ = Mode::rank_one;
  std::vector<AliasTable> right_;
  // Mixture mode: per-row weights u_r(i) * sum_j v_r(j), flattened [i * rank + r].
  std::vector<double> term_weight_;
  std::size_t rank_ = 1;
  std::vector<AliasTable> rows_;
  std::size_t n_ = 0;
};

// Accept-every-proposal policy: the untilted chain.
struct PlainDynamics {
  double bound() const { return 1.0; }
  bool accept(double, std::size_t, std::size_t, RngStream&) const { return true; }
};

// Observers are notified after each executed jump.
struct NullObserver {
  void on_jump(double, std::size_t, std::size_t) {}
};

// Exact event-driven simulator of the urn chain.
//
// Holds the per-kernel precomputation (exit rates, destination sampler),
// which is immutable and shared by all replicas.
class Simulator {
 public:
  Simulator(const RateKernel& kernel, const Grid& grid);

  const RateKernel& kernel() const { return kernel_; }
  const Grid& grid() const { return grid_; }
  const std::vector<double>& exit_rates() const { return exit_rates_; }

  TrajectorySnapshots run(const UrnState& state, std::span<const double> obs_times,
                          RngStream& rng, bool record_jumps = false) const {
    NullObserver obs;
    return run_with(state, obs_times, rng, record_jumps, PlainDynamics{}, obs);
  }

  // Simulates on [0, t_max] with proposals at rate bound() times the
  // original rates, each accepted with probability policy.accept(...).
  template <class Policy, class Observer>
  TrajectorySnapshots run_with(const UrnState& state, std::span<const double> obs_times,
                               RngStream& rng, bool record_jumps, const Policy& policy,
                               Observer& observer) const;

 private:
  void validate(const UrnState& state, std::span<const double> obs_times) const;

  RateKernel kernel_;
  Grid grid_;
  std::vector<double> exit_rates_;
  DestinationSampler sampler_;
};

template <class Policy, class Observer>
TrajectorySnapshots Simulator::run_with(const UrnState& state, std::span<const double> obs_times,
                                        RngStream& rng, bool record_jumps, const Policy& policy,
                                        Observer& observer) const {
  validate(state, obs_times);
  const std::size_t n = state.size();
  const double t_end = grid_.t_max;
  TrajectorySnapshots out;
  out.initial = state;
  out.t_end = t_end;
  out.times.assign(obs_times.begin(), obs_times.end());
  out.states.reserve(obs_times.size());
  if (record_jumps) out.jump_log.emplace();

  UrnState x = state;
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = static_cast<double>(x.counts[i]) * exit_rates_[i];
  FenwickTree tree(w);
  const double bound = policy.bound();
  std::size_t next_obs = 0;
  double t = 0.0;

  for (;;) {
    const double rate = tree.total();
    // An empty system (or one whose only mass sits where no rate leaves) is absorbing.
    const double t_next = rate > 0.0 ? t + rng.exponential() / (rate * bound) : INFINITY;
    while (next_obs < obs_times.size() && obs_times[next_obs] < t_next) {
      out.states.push_back(x);
      ++next_obs;
    }
    if (t_next > t_end) break;
    t = t_next;
    const std::size_t src = tree.find(rng.uniform() * rate);
    const std::size_t dst = sampler_.sample(src, rng);
    if (!policy.accept(t, src, dst, rng)) continue;
    x.move(src, dst);
    tree.set(src, static_cast<double>(x.counts[src]) * exit_rates_[src]);
    tree.set(dst, static_cast<double>(x.counts[dst]) * exit_rates_[dst]);
    ++out.event_count;
    if (record_jumps) {
      out.jump_log->push_back(
          {t, static_cast<std::uint32_t>(src), static_cast<std::uint32_t>(dst)});
    }
    observer.on_jump(t, src, dst);
  }
  return out;
}

UrnState sample_initial(const InitialProfile& profile, RngStream& rng);
// Poisson(phi(i/N) + (a_N / N) f(i/N)) per urn; throws on a nonpositive mean.
UrnState sample_initial_perturbed(const InitialProfile& profile, const TestFn& f,
                                  const ScalingSequence& scaling, RngStream& rng);
TrajectorySnapshots simulate_trajectory(const UrnState& state, const RateKernel& kernel,
                                        const Grid& grid, std::span<const double> obs_times,
                                        RngStream& rng, bool record_jumps = false);
// Independent Poisson(m(t, i)) per urn: the exact law of X_t.
UrnState sample_exact_at_time(std::span<const double> meanfield_slice, RngStream& rng);

// (1/N) sum_i X(i) f(i/N).
double empirical_measure(const UrnState& state, const TestFn& f);
// (1/a_N) sum_i (X(i) - m(t, i)) f(i/N).
double fluctuation_field(const UrnState& state, std::span<const double> meanfield_slice,
                         const ScalingSequence& scaling, const TestFn& f);
// a_N^{-2} sum over jumps i -> j of (h(j/N) - h(i/N))^2.
double jump_quadratic_variation(const TrajectorySnapshots& traj, const TestFn& h,
                                const ScalingSequence& scaling);

// CSV rows "replica,t,i,count" (1-based i); the header is written when asked.
void write_snapshots_csv(std::ostream& out, const TrajectorySnapshots& traj,
                         std::uint64_t replica, bool header);
// Little-endian records: f64 time, u32 source, u32 destination (0-based urns).
void write_jump_log(std::ostream& out, std::span<const JumpRecord> log);
std::vector<JumpRecord> read_jump_log(std::istream& in);

}  // namespace ehrenfest
