#pragma once

#include <optional>
#include <string>
#include <vector>

#include "metastab/chain.hpp"

namespace metastab {

/// Wells E^1..E^n, the separating set Delta and optional bottoms B^x.
class Partition {
 public:
  Partition() = default;
  /// Throws EmptySubset, Overlap, InvalidArgument.
  Partition(std::size_t num_states, std::vector<StateSet> wells,
            std::optional<std::vector<StateSet>> bottoms = std::nullopt);

  std::size_t num_states() const noexcept { return labels_.size(); }
  std::size_t num_wells() const noexcept { return wells_.size(); }
  /// Well x for x in 1..n.
  const StateSet& well(std::size_t x) const { return wells_.at(x - 1); }
  const std::vector<StateSet>& wells() const noexcept { return wells_; }
  const StateSet& delta() const noexcept { return delta_; }
  const StateSet& wells_union() const noexcept { return union_; }
  bool has_bottoms() const noexcept { return bottoms_.has_value(); }
  /// Throws NoBottoms.
  const StateSet& bottom(std::size_t x) const;

  /// Label of a state, 0 on Delta.
  int phi(Index state) const { return labels_.at(state); }
  /// Label of a state off Delta. Throws PsiOnDelta.
  int psi(Index state) const;

 private:
  std::vector<StateSet> wells_;
  std::optional<std::vector<StateSet>> bottoms_;
  StateSet delta_;
  StateSet union_;
  std::vector<int> labels_;
};

nlohmann::json to_json(const Partition& p);
Partition partition_from_json(const nlohmann::json& doc);

/// Label path of a trajectory (label 0 on Delta, repeated labels merged).
Trajectory project_phi(const Trajectory& path, const Partition& p);
/// Same, but Delta is not allowed on the path. Throws PsiOnDelta.
Trajectory project_psi(const Trajectory& path, const Partition& p);

// Condition checks ------------------------------------------------------------

struct ConditionReport {
  std::string id;
  nlohmann::json params = nlohmann::json::object();
  nlohmann::json values = nlohmann::json::object();
  /// Headline scalar used for verdicts and sweeps.
  double value = 0.0;
  std::vector<std::pair<double, double>> sweep;  // (N, value)
  std::string verdict = "pass";
  std::vector<std::string> notes;
};

nlohmann::json to_json(const ConditionReport& r);

/// Known condition ids, in the order reported by the CLI.
const std::vector<std::string>& condition_ids();

struct CheckOptions {
  double t = 1.0;          // H2 time horizon
  double delta = 0.1;      // C03 and M1 time
  double epsilon = 0.01;   // M2 and TMIX3 time scale
  double tol = 0.1;        // pass threshold for single-point verdicts
  double c0 = 10.0;        // B09 bound
  bool full_max = false;   // exhaustive maximum over starting states
  /// Wells up to this size are maximized exhaustively regardless of full_max.
  std::size_t exhaustive_limit = 2000;
};

CheckOptions check_options_from_json(const nlohmann::json& params);

/// Occupation of Delta during [0,t], maximized over starting states in wells.
ConditionReport check_H2(const Chain& chain, const Partition& p, const CheckOptions& o);
/// sup over s in [2 delta, 3 delta] of P_eta[xi(s) in Delta], maximized over wells.
ConditionReport check_C03(const Chain& chain, const Partition& p, const CheckOptions& o);
/// max over wells and eta in the well of mu(Delta)/mu(eta).
ConditionReport check_L08(const Chain& chain, const Partition& p, const CheckOptions& o);
/// Tail of the hitting time of the bottom for the trace on each well.
ConditionReport check_M1(const Chain& chain, const Partition& p, const CheckOptions& o);
/// Capacity criterion for reaching the bottom.
ConditionReport check_CAPEST(const Chain& chain, const Partition& p, const CheckOptions& o);
/// Trace mixing criterion for reaching the bottom.
ConditionReport check_TMIX2(const Chain& chain, const Partition& p, const CheckOptions& o);
/// Escape to Delta from the bottoms before 2 epsilon (M2a) and the reflected
/// total variation at epsilon (M2b).
std::vector<ConditionReport> check_M2(const Chain& chain, const Partition& p,
                                      const CheckOptions& o);
/// mu(Delta)/mu(E^y) (B09A), the well-mass spread (B09) and the trace mixing
/// scale ratio (TMIX3).
std::vector<ConditionReport> check_measure_ratios(const Chain& chain, const Partition& p,
                                                  const CheckOptions& o);

/// Dispatch by id. Throws InvalidArgument for an unknown id.
ConditionReport run_check(const std::string& id, const Chain& chain, const Partition& p,
                          const CheckOptions& o);

/// Attaches per-N values and the trend verdict.
void apply_sweep_verdict(ConditionReport& r, const CheckOptions& o);

// Limit chain and convergence ----------------------------------------------------

struct LimitChain {
  Chain chain;  // states "1".."n"
  /// Rates from the capacity route, [x][y] with zero diagonal.
  std::vector<std::vector<double>> capacity_rates;
  double max_relative_gap = 0.0;
};

nlohmann::json to_json(const LimitChain& l);

/// Mean-rate reduction of the trace on the union of the wells.
LimitChain estimate_limit_chain(const Chain& chain, const Partition& p);

struct FddReport {
  std::vector<double> times;
  int init_label = 0;
  /// Joint label laws indexed by label tuples in lexicographic order,
  /// labels 0..n.
  std::vector<double> chain_law;
  std::vector<double> limit_law;
  double max_abs_difference = 0.0;
  /// P[X_N(t_i) = 0] for each time.
  std::vector<double> delta_mass;
};

nlohmann::json to_json(const FddReport& r);

/// Exact joint law of the labels at up to three times versus the limit chain.
FddReport fdd_compare(const Chain& chain, const Partition& p, const Chain& limit,
                      const std::vector<double>& times, Index init_state);

/// Largest state space product handled by state_convergence.
inline constexpr std::size_t kMaxProductStates = 4'000'000;

struct StateConvergence {
  std::vector<double> times;
  double tv = 0.0;
};

/// Total variation between the law of (xi(t_1),...,xi(t_k)) and the limit
/// mixture of conditioned measures, k <= 2. Throws ProductTooLarge.
StateConvergence state_convergence(const Chain& chain, const Partition& p, const Chain& limit,
                                   const std::vector<double>& times, Index init_state);

}  // namespace metastab
