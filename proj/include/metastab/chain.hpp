#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "metastab/error.hpp"

namespace metastab {

using Index = std::size_t;

/// Sorted, duplicate-free list of state indices.
using StateSet = std::vector<Index>;

StateSet make_state_set(std::vector<Index> indices);
StateSet complement(const StateSet& set, std::size_t n);
StateSet set_union(const StateSet& a, const StateSet& b);
bool contains(const StateSet& set, Index i);
std::vector<char> indicator_mask(const StateSet& set, std::size_t n);

struct RateEntry {
  Index from = 0;
  Index to = 0;
  double rate = 0.0;
};

/// Finite continuous-time Markov chain with sparse off-diagonal rates.
///
/// Rates stored in the row structure are the effective rates, i.e. the
/// supplied rates multiplied by the time scale. The supplied entries are kept
/// verbatim so serialization round-trips exactly. Immutable after
/// construction.
class Chain {
 public:
  struct Row {
    std::span<const Index> targets;
    std::span<const double> rates;
  };

  std::size_t size() const noexcept { return keys_.size(); }
  const std::string& key(Index i) const { return keys_.at(i); }
  const std::vector<std::string>& keys() const noexcept { return keys_; }
  std::optional<Index> find(std::string_view key) const;

  Row row(Index i) const;
  double rate(Index from, Index to) const;
  double holding(Index i) const { return holding_.at(i); }
  std::span<const double> holding() const noexcept { return holding_; }
  double max_holding() const noexcept { return max_holding_; }
  double time_scale() const noexcept { return time_scale_; }
  bool irreducible() const noexcept { return irreducible_; }
  std::size_t num_transitions() const noexcept { return targets_.size(); }

  /// Entries exactly as passed to build_chain (sorted by (from, to)).
  const std::vector<RateEntry>& supplied_entries() const noexcept {
    return supplied_;
  }

  /// Effective (time-scaled) rates as a flat entry list.
  std::vector<RateEntry> effective_entries() const;

 private:
  friend Chain build_chain(std::vector<std::string>, std::vector<RateEntry>,
                           double);

  std::vector<std::string> keys_;
  std::unordered_map<std::string, Index> index_;
  std::vector<std::size_t> row_start_;
  std::vector<Index> targets_;
  std::vector<double> rates_;
  std::vector<double> holding_;
  std::vector<RateEntry> supplied_;
  double max_holding_ = 0.0;
  double time_scale_ = 1.0;
  bool irreducible_ = false;
};

/// Builds a chain; zero-valued entries are accepted and dropped.
/// Throws NegativeRate, DuplicateEntry, EmptyStateSet, InvalidArgument.
Chain build_chain(std::vector<std::string> states,
                  std::vector<RateEntry> rate_entries, double time_scale = 1.0);

/// States named "0", "1", ..., "n-1".
std::vector<std::string> numbered_states(std::size_t n);

/// Probability (or sub-probability) vector over the states of a chain.
class Measure {
 public:
  Measure() = default;

  static Measure from_weights(std::vector<double> weights, bool normalize = true);
  /// Exponentiates after subtracting the maximum, then normalizes.
  static Measure from_log_weights(std::vector<double> log_weights);
  static Measure dirac(std::size_t n, Index at);
  static Measure uniform(std::size_t n);

  std::size_t size() const noexcept { return weights_.size(); }
  double operator[](Index i) const { return weights_[i]; }
  std::span<const double> weights() const noexcept { return weights_; }
  const std::optional<std::vector<double>>& log_weights() const noexcept {
    return log_weights_;
  }
  bool normalized() const noexcept { return normalized_; }

  double mass(const StateSet& set) const;
  double total() const;

  /// Measure conditioned to `set`, still indexed over the full state space.
  Measure conditioned(const StateSet& set) const;
  /// Measure conditioned to `set`, indexed by position inside `set`.
  Measure restricted(const StateSet& set) const;

 private:
  std::vector<double> weights_;
  std::optional<std::vector<double>> log_weights_;
  bool normalized_ = false;
};

struct Sojourn {
  Index state = 0;
  double entry = 0.0;
  double exit = 0.0;
};

/// Piecewise-constant path; records are contiguous in time.
struct Trajectory {
  std::vector<Sojourn> records;
  double horizon = 0.0;

  double duration() const;
  /// State occupied at time t (right-continuous); t must lie in the path.
  Index state_at(double t) const;
  /// Throws InvalidArgument when the record invariants do not hold.
  void validate() const;
};

// Linear algebra on a chain ------------------------------------------------

/// Unique stationary distribution by direct sparse factorization.
/// Throws Reducible.
Measure stationary(const Chain& chain);

/// Largest |mu^T Q| entry.
double stationarity_residual(const Chain& chain, std::span<const double> mu);

/// Detailed balance check, relative to max(mu_i R_ij, mu_j R_ji).
bool is_reversible(const Chain& chain, std::span<const double> mu,
                   double rel_tol = 1e-9);

/// Guard on the uniformization rate-time product.
inline constexpr double kMaxUniformizationSteps = 1e8;
/// Poisson tail mass dropped by uniformization.
inline constexpr double kUniformizationTail = 1e-14;

/// Distribution of the chain at time t started from `init`.
/// Throws NonconvergentSeries when t * max_holding exceeds the step guard.
Measure transient_distribution(const Chain& chain, const Measure& init,
                               double t);

/// Forward action v -> v P_t on an arbitrary (sub-probability) row vector.
/// States with `absorbing[i] != 0` have their outgoing rates removed.
std::vector<double> evolve_forward(const Chain& chain, std::span<const double> v,
                                   double t,
                                   std::span<const char> absorbing = {});

/// Backward action f -> P_t f on a function of the state.
std::vector<double> evolve_backward(const Chain& chain,
                                    std::span<const double> f, double t,
                                    std::span<const char> absorbing = {});

/// f -> integral over [0,t] of P_s f ds, via the integrated Poisson series.
std::vector<double> integrate_backward(const Chain& chain,
                                       std::span<const double> f, double t);

/// P_eta[H_target <= t] for every eta (equal to 1 on target).
std::vector<double> hitting_probability_by(const Chain& chain,
                                           const StateSet& target, double t);

double tv_distance(const Measure& mu, const Measure& nu);
double tv_distance(std::span<const double> mu, std::span<const double> nu);

/// Expected time spent in A during [0,t] started from `init`.
double occupation_time(const Chain& chain, const Measure& init,
                       const StateSet& set, double t);

// Serialization ------------------------------------------------------------

nlohmann::json to_json(const Chain& chain);
Chain chain_from_json(const nlohmann::json& doc);

std::string trajectory_to_csv(const Trajectory& path, const Chain& chain);
Trajectory trajectory_from_csv(std::string_view csv, const Chain& chain);

}  // namespace metastab
