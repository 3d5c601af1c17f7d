#include "ehrenfest/simulator.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

#include "ehrenfest/table_io.hpp"

namespace ehrenfest {

UrnState::UrnState(std::vector<std::uint64_t> c) : counts(std::move(c)) {
  total = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

bool UrnState::consistent() const {
  return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}) == total;
}

ScalingSequence::ScalingSequence(double alpha) : alpha_(alpha) {
  if (!(alpha > 0.5 && alpha < 1.0)) {
    throw std::invalid_argument("ScalingSequence: alpha must lie in (1/2, 1)");
  }
}

DestinationSampler::DestinationSampler(const RateKernel& kernel) : n_(kernel.size()) {
  if (kernel.rank_one()) {
    mode_ = Mode::rank_one;
    right_.emplace_back(kernel.right(0));
    return;
  }
  bool nonnegative = kernel.separable();
  for (std::size_t r = 0; nonnegative && r < kernel.rank(); ++r) {
    const auto u = kernel.left(r), v = kernel.right(r);
    nonnegative = std::all_of(u.begin(), u.end(), [](double x) { return x >= 0.0; }) &&
                  std::all_of(v.begin(), v.end(), [](double x) { return x >= 0.0; });
  }
  if (nonnegative) {
    mode_ = Mode::mixture;
    rank_ = kernel.rank();
    std::vector<double> mass(rank_, 0.0);
    for (std::size_t r = 0; r < rank_; ++r) {
      const auto v = kernel.right(r);
      mass[r] = std::accumulate(v.begin(), v.end(), 0.0);
      // Terms with an all-zero right factor never contribute; give them an
      // inert table and zero row weight.
      if (mass[r] > 0.0) {
        right_.emplace_back(v);
      } else {
        right_.emplace_back(std::vector<double>(n_, 1.0));
      }
    }
    term_weight_.resize(n_ * rank_);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t r = 0; r < rank_; ++r) {
        term_weight_[i * rank_ + r] = kernel.left(r)[i] * mass[r];
      }
    }
    return;
  }
  if (n_ * n_ > kMaxDenseEntries) {
    throw std::invalid_argument("DestinationSampler: per-row alias tables for N=" +
                                std::to_string(n_) + " exceed the memory guard");
  }
  mode_ = Mode::rows;
  rows_.reserve(n_);
  std::vector<double> row(n_);
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < n_; ++j) row[j] = j == i ? 0.0 : kernel(i, j);
    rows_.emplace_back(row);
  }
}

std::size_t DestinationSampler::sample(std::size_t i, RngStream& rng) const {
  switch (mode_) {
    case Mode::rank_one:
      for (;;) {
        const std::size_t j = right_[0].sample(rng);
        if (j != i) return j;
      }
    case Mode::mixture: {
      const double* w = term_weight_.data() + i * rank_;
      double total = 0.0;
      for (std::size_t r = 0; r < rank_; ++r) total += w[r];
      for (;;) {
        double u = rng.uniform() * total;
        std::size_t r = 0;
        while (r + 1 < rank_ && (u >= w[r] || w[r] == 0.0)) {
          u -= w[r];
          ++r;
        }
        const std::size_t j = right_[r].sample(rng);
        if (j != i) return j;
      }
    }
    case Mode::rows:
      return rows_[i].sample(rng);
  }
  return 0;
}

Simulator::Simulator(const RateKernel& kernel, const Grid& grid)
    : kernel_(kernel), grid_(grid), sampler_(kernel) {
  require_same_size(kernel.size(), grid.n_space, "Simulator");
  const std::size_t n = kernel.size();
  exit_rates_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    exit_rates_[i] = (kernel.row_sums()[i] - kernel.diagonal()[i]) / static_cast<double>(n);
  }
}

void Simulator::validate(const UrnState& state, std::span<const double> obs_times) const {
  require_same_size(state.size(), grid_.n_space, "simulate_trajectory");
  if (!state.consistent()) throw std::invalid_argument("simulate_trajectory: inconsistent total");
  for (std::size_t k = 0; k < obs_times.size(); ++k) {
    if (obs_times[k] < 0.0 || obs_times[k] > grid_.t_max) {
      throw std::invalid_argument("simulate_trajectory: observation time outside [0, T0]");
    }
    if (k > 0 && obs_times[k] < obs_times[k - 1]) {
      throw std::invalid_argument("simulate_trajectory: observation times not sorted");
    }
  }
}

UrnState sample_initial(const InitialProfile& profile, RngStream& rng) {
  std::vector<std::uint64_t> c(profile.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = rng.poisson(profile[i]);
  return UrnState(std::move(c));
}

UrnState sample_initial_perturbed(const InitialProfile& profile, const TestFn& f,
                                  const ScalingSequence& scaling, RngStream& rng) {
  require_same_size(profile.size(), f.size(), "sample_initial_perturbed");
  const std::size_t n = profile.size();
  const double shift = scaling.a(n) / static_cast<double>(n);
  std::vector<double> mean(n);
  for (std::size_t i = 0; i < n; ++i) {
    mean[i] = profile[i] + shift * f[i];
    if (!(mean[i] > 0.0)) {
      throw std::invalid_argument("sample_initial_perturbed: mean at urn " + std::to_string(i + 1) +
                                  " is " + format_roundtrip(mean[i]) + ", not positive");
    }
  }
  std::vector<std::uint64_t> c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = rng.poisson(mean[i]);
  return UrnState(std::move(c));
}

TrajectorySnapshots simulate_trajectory(const UrnState& state, const RateKernel& kernel,
                                        const Grid& grid, std::span<const double> obs_times,
                                        RngStream& rng, bool record_jumps) {
  return Simulator(kernel, grid).run(state, obs_times, rng, record_jumps);
}

UrnState sample_exact_at_time(std::span<const double> meanfield_slice, RngStream& rng) {
  std::vector<std::uint64_t> c(meanfield_slice.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = rng.poisson(meanfield_slice[i]);
  return UrnState(std::move(c));
}

double empirical_measure(const UrnState& state, const TestFn& f) {
  require_same_size(state.size(), f.size(), "empirical_measure");
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += static_cast<double>(state.counts[i]) * f[i];
  return s / static_cast<double>(f.size());
}

double fluctuation_field(const UrnState& state, std::span<const double> meanfield_slice,
                         const ScalingSequence& scaling, const TestFn& f) {
  require_same_size(state.size(), f.size(), "fluctuation_field");
  require_same_size(meanfield_slice.size(), f.size(), "fluctuation_field");
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    s += (static_cast<double>(state.counts[i]) - meanfield_slice[i]) * f[i];
  }
  return s / scaling.a(f.size());
}

double jump_quadratic_variation(const TrajectorySnapshots& traj, const TestFn& h,
                                const ScalingSequence& scaling) {
  if (!traj.jump_log) throw std::invalid_argument("jump_quadratic_variation: no jump log");
  require_same_size(traj.initial.size(), h.size(), "jump_quadratic_variation");
  double s = 0.0;
  for (const auto& j : *traj.jump_log) {
    const double d = h[j.destination] - h[j.source];
    s += d * d;
  }
  const double a = scaling.a(h.size());
  return s / (a * a);
}

void write_snapshots_csv(std::ostream& out, const TrajectorySnapshots& traj,
                         std::uint64_t replica, bool header) {
  if (header) out << "replica,t,i,count\n";
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    const std::string t = format_csv(traj.times[k]);
    for (std::size_t i = 0; i < traj.states[k].size(); ++i) {
      out << replica << ',' << t << ',' << (i + 1) << ',' << traj.states[k].counts[i] << '\n';
    }
  }
}

namespace {

template <class T>
void put_le(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
bool get_le(std::istream& in, T& v) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) return false;
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  std::memcpy(&v, buf, sizeof(T));
  return true;
}

}  // namespace

void write_jump_log(std::ostream& out, std::span<const JumpRecord> log) {
  for (const auto& j : log) {
    put_le(out, j.time);
    put_le(out, j.source);
    put_le(out, j.destination);
  }
}

std::vector<JumpRecord> read_jump_log(std::istream& in) {
  std::vector<JumpRecord> out;
  JumpRecord j{};
  while (get_le(in, j.time)) {
    if (!get_le(in, j.source) || !get_le(in, j.destination)) {
      throw std::runtime_error("read_jump_log: truncated record");
    }
    out.push_back(j);
  }
  return out;
}

}  // namespace ehrenfest
