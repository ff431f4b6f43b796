#pragma once

#include "metastab/chain.hpp"

namespace metastab {

struct HittingProfile {
  Index source = 0;
  StateSet target;
  /// Law of the hitting position, indexed by position inside `target`.
  std::vector<double> absorb_probs;
  double mean_time = 0.0;
};

/// Harmonic measure and mean hitting time of `target` from `source`.
/// Throws Reducible, TargetIsWholeSpace, EmptySubset.
HittingProfile hitting_profile(const Chain& chain, Index source, const StateSet& target);

/// E_eta[H_target] for every state (zero on the target).
std::vector<double> mean_hitting_times(const Chain& chain, const StateSet& target);

/// Trace process on A. The result has time scale 1 and carries the effective
/// rates of the input. With `verify`, the stationary measure of the trace is
/// checked against the conditioned stationary measure (Internal on failure).
Chain trace_chain(const Chain& chain, const StateSet& a, bool verify = true);

/// Chain restricted to A with jumps out of A deleted.
/// Throws EmptySubset, ReducibleReflection.
Chain reflected_chain(const Chain& chain, const StateSet& a);

/// Largest stationarity residual of the conditioned stationary measure under
/// the reflected generator, relative to its largest holding rate. Zero for
/// reversible chains.
double reflection_defect(const Chain& chain, const StateSet& a);

/// Gamma-enlargement on E followed by copies E*; copy of state i is n + i and
/// is keyed key(i) + "*". Throws NonpositiveGamma, Reducible.
Chain enlarge_chain(const Chain& chain, double gamma);

/// Index of the copy of `state` inside the enlarged chain.
inline Index copy_of(const Chain& original, Index state) { return original.size() + state; }

/// Path with the sojourns outside A removed and time re-glued; repeated
/// states are merged. The result starts at the original start time.
Trajectory trace_surgery(const Trajectory& path, const StateSet& a);

}  // namespace metastab
