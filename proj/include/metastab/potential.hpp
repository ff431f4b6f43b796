#pragma once

#include <string>

#include "metastab/chain.hpp"

namespace metastab {

struct CapacityResult {
  double value = 0.0;
  /// Equilibrium potential P_eta[H_A < H_B]: 1 on A, 0 on B.
  std::vector<double> potential;
  /// Equilibrium measure on A, indexed by position inside A.
  std::vector<double> equilibrium_measure;
  /// Dirichlet form of the potential and Thomson value of the harmonic
  /// current. Both equal `value` for reversible chains; NaN otherwise.
  double dirichlet_upper = 0.0;
  double thomson_lower = 0.0;
  bool reversible = false;
};

nlohmann::json to_json(const CapacityResult& r);

/// Cap(A,B) from escape probabilities. Throws Overlap, EmptySubset, Reducible.
CapacityResult capacity(const Chain& chain, const StateSet& a, const StateSet& b);
CapacityResult capacity(const Chain& chain, const Measure& mu, const StateSet& a,
                        const StateSet& b);

/// Cap({eta}, B) = mu(eta) / G_B(eta, eta). One sparse solve.
double point_capacity(const Chain& chain, const Measure& mu, Index eta, const StateSet& b);

/// Cap({eta}, B) for each eta in `etas`, sharing one factorization.
std::vector<double> point_capacities(const Chain& chain, const Measure& mu,
                                     const StateSet& etas, const StateSet& b);

/// Dirichlet form 1/2 sum mu(x) R(x,y) (f(y) - f(x))^2.
double dirichlet_form(const Chain& chain, const Measure& mu, std::span<const double> f);

/// Dirichlet form of a test function equal to 1 on A and 0 on B.
/// Throws NotReversible, BoundaryViolation.
double dirichlet_bound(const Chain& chain, const StateSet& a, const StateSet& b,
                       std::span<const double> test_function);

struct FlowEdge {
  Index from = 0;
  Index to = 0;
  double value = 0.0;  // flux from -> to
};
using Flow = std::vector<FlowEdge>;

/// Harmonic current from A to B divided by the capacity.
Flow harmonic_unit_flow(const Chain& chain, const StateSet& a, const StateSet& b);

/// 1 / sum phi^2 / (mu R) for a unit flow from A to B.
/// Throws NotAFlow, NotReversible.
double thomson_bound(const Chain& chain, const StateSet& a, const StateSet& b,
                     const Flow& unit_flow);

struct SpectralResult {
  double gap = 0.0;
  double relaxation_time = 0.0;
  double mixing_time = -1.0;  // negative when not computed
  bool reversible = true;
  std::string method;
  std::string warning;
};

nlohmann::json to_json(const SpectralResult& r);

/// States above which the gap is found by shift-invert subspace iteration.
inline constexpr std::size_t kDenseSpectralLimit = 2000;

/// Smallest nonzero eigenvalue of -Q in L2(mu). Non-reversible chains use the
/// additive symmetrization and are flagged. Throws Reducible.
SpectralResult spectral_gap(const Chain& chain, bool with_mixing = false);
SpectralResult spectral_gap(const Chain& chain, const Measure& mu, bool with_mixing = false);

inline constexpr double kMixingThreshold = 0.18393972058572117;  // 1/(2e)

struct MixingResult {
  double time = 0.0;
  int evaluations = 0;
  std::string warning;
};

/// max over starting states of the total variation distance to mu at time t.
double worst_tv(const Chain& chain, const Measure& mu, double t);

/// Smallest t with worst_tv(t) <= threshold, by doubling then bisection.
MixingResult mixing_time(const Chain& chain, double threshold = kMixingThreshold);
MixingResult mixing_time(const Chain& chain, const Measure& mu,
                         double threshold = kMixingThreshold);

/// States outside A reachable from A in one jump.
StateSet exterior_boundary(const Chain& chain, const StateSet& a);

struct HittingBound {
  /// min(1, e b Cap(eta,A) / mu(eta))
  double bound = 0.0;
  /// e b / (2 mu(eta)) sum over the exterior boundary of mu(xi) R(xi, A)
  double boundary_bound_halved = 0.0;
  /// e b / mu(eta) * Cap(A^c, A), which dominates `bound`
  double boundary_bound = 0.0;
  double point_capacity = 0.0;
};

/// Upper bounds on P_eta[H_A <= b]. Throws EtaInA.
HittingBound hitting_prob_bound(const Chain& chain, const Measure& mu, Index eta,
                                const StateSet& a, double b);

struct DeltaBoundTerms {
  double exit_term = 0.0;        // P_eta[H_{well^c} <= T]
  double reflected_tv = 0.0;     // TV(delta_eta S^R(T), mu^well)
  double measure_ratio = 0.0;    // mu(delta) / mu(well)
  double bound = 0.0;
  double exact = 0.0;            // P_eta[xi(s) in delta]
};

nlohmann::json to_json(const DeltaBoundTerms& t);

/// Three-term bound on the probability of sitting in `delta` at time s for
/// a chain started in a well. Requires 0 < T < s and eta in well.
DeltaBoundTerms delta_occupation_bound(const Chain& chain, const Measure& mu, Index eta,
                                       const StateSet& well, const StateSet& delta,
                                       double T, double s);

}  // namespace metastab
