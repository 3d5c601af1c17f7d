#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace ehrenfest {

// Reproducible random stream keyed by (master_seed, replica_id, substream).
//
// The engine is std::mt19937_64, whose output sequence is fixed by the
// standard. Every variate below is derived from raw engine words by our own
// code, never through std:: distributions, whose algorithms differ between
// standard libraries. The same key therefore reproduces the same draws on
// every platform.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t replica_id, std::uint64_t substream = 0)
      : master_seed_(master_seed), replica_id_(replica_id) {
    std::seed_seq seq{static_cast<std::uint32_t>(master_seed),
                      static_cast<std::uint32_t>(master_seed >> 32),
                      static_cast<std::uint32_t>(replica_id),
                      static_cast<std::uint32_t>(replica_id >> 32),
                      static_cast<std::uint32_t>(substream),
                      static_cast<std::uint32_t>(substream >> 32), 0x45687266u};
    engine_.seed(seq);
  }

  std::uint64_t master_seed() const { return master_seed_; }
  std::uint64_t replica_id() const { return replica_id_; }
  std::uint64_t draws() const { return counter_; }

  std::uint64_t next_u64() {
    ++counter_;
    return engine_();
  }
  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  // Uniform on (0, 1].
  double uniform_pos() { return 1.0 - uniform(); }
  double exponential() { return -std::log(uniform_pos()); }
  // Uniform integer in [0, n), by Lemire's multiply-shift with rejection.
  std::uint64_t below(std::uint64_t n) {
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      const std::uint64_t thresh = (0 - n) % n;
      while (lo < thresh) {
        m = static_cast<unsigned __int128>(next_u64()) * n;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }
  double normal() {
    // Marsaglia polar method; the spare is discarded to keep the stream stateless.
    for (;;) {
      const double u = 2.0 * uniform() - 1.0;
      const double v = 2.0 * uniform() - 1.0;
      const double s = u * u + v * v;
      if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
    }
  }
  std::uint64_t poisson(double mean);

 private:
  std::mt19937_64 engine_;
  std::uint64_t master_seed_ = 0;
  std::uint64_t replica_id_ = 0;
  std::uint64_t counter_ = 0;
};

// Inversion by sequential search for small means, PTRS transformed rejection
// (Hormann 1993) otherwise.
inline std::uint64_t RngStream::poisson(double mean) {
  if (!(mean > 0.0)) return 0;
  if (mean < 10.0) {
    const double enlam = std::exp(-mean);
    std::uint64_t x = 0;
    double prod = 1.0;
    for (;;) {
      prod *= uniform();
      if (prod <= enlam) return x;
      ++x;
    }
  }
  const double slam = std::sqrt(mean);
  const double loglam = std::log(mean);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double invalpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    const double u = uniform() - 0.5;
    const double v = uniform();
    const double us = 0.5 - std::fabs(u);
    const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(k);
    if (k < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(invalpha) - std::log(a / (us * us) + b) <=
        -mean + k * loglam - std::lgamma(k + 1.0)) {
      return static_cast<std::uint64_t>(k);
    }
  }
}

}  // namespace ehrenfest
