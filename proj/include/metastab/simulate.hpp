#pragma once

#include <cstdint>
#include <vector>

#include "metastab/chain.hpp"
#include "metastab/metastability.hpp"

namespace metastab {

/// SplitMix64 stream keyed by (seed, stream index); the draw sequence does not
/// depend on the platform or on how paths are split across workers.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream);
  std::uint64_t next();
  /// Uniform on (0, 1].
  double uniform();

 private:
  std::uint64_t state_;
};

/// Worker count from METASTAB_THREADS, else the hardware concurrency.
std::size_t worker_count();

struct SimConfig {
  std::uint64_t seed = 0;
  std::size_t paths = 1;
  double horizon = 1.0;
  /// 0 means worker_count().
  std::size_t threads = 0;
};

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
};

nlohmann::json to_json(const Estimate& e);

/// One path on [0, horizon] driven by `rng`.
Trajectory gillespie_path(const Chain& chain, Index init, double horizon, Rng& rng);

/// Paths 0..paths-1, path k driven by Rng(seed, k). Throws InvalidArgument.
std::vector<Trajectory> gillespie(const Chain& chain, Index init, const SimConfig& config);

struct FddEstimate {
  std::vector<double> times;
  /// Label tuples in lexicographic order over labels 0..n, as in FddReport.
  std::vector<Estimate> law;
  std::size_t paths = 0;
};

nlohmann::json to_json(const FddEstimate& f);

/// Label frequencies at the given times. Throws TimesBeyondHorizon.
FddEstimate empirical_fdd(const std::vector<Trajectory>& paths, const Partition& p,
                          const std::vector<double>& times);

/// Same estimate without storing paths; horizon is the last time.
FddEstimate simulate_fdd(const Chain& chain, const Partition& p, Index init,
                         const std::vector<double>& times, const SimConfig& config);

struct ExitLaw {
  std::size_t well = 0;
  /// Exit times measured on the trace clock (time spent in the wells).
  std::vector<double> trace_times;
  /// The same exits on the original clock.
  std::vector<double> wall_times;
  Estimate mean_trace_time;
  Estimate mean_wall_time;
  std::size_t censored = 0;
  /// sup_u |F_n(u) - (1 - e^{-u})| for the exit times divided by their mean.
  double exponential_distance = 0.0;
  /// 1.36 / sqrt(n).
  double ks_critical = 0.0;
};

nlohmann::json to_json(const ExitLaw& e);

/// Time until the trace on the wells first sits in another well. Paths must
/// start in `well`. Throws InvalidArgument, NoExitsObserved.
ExitLaw empirical_exit_law(const std::vector<Trajectory>& paths, const Partition& p,
                           std::size_t well);

/// Fraction of [0, horizon] spent in `set` for one path, with a batch-means
/// standard error over 20 batches.
Estimate occupation_fraction(const Trajectory& path, const StateSet& set);

}  // namespace metastab
