#include "metastab/potential.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "detail/sparse.hpp"
#include "metastab/reductions.hpp"

namespace metastab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_nonempty(const StateSet& s, const char* what, std::size_t n) {
  if (s.empty()) fail(ErrorCode::EmptySubset, std::string(what) + " is empty");
  if (s.back() >= n) fail(ErrorCode::InvalidArgument, std::string(what) + " has an unknown state");
}

void require_disjoint(const StateSet& a, const StateSet& b) {
  StateSet common;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
  if (!common.empty())
    fail(ErrorCode::Overlap, "sets overlap at state " + std::to_string(common.front()));
}

}  // namespace

nlohmann::json to_json(const CapacityResult& r) {
  nlohmann::json j{{"value", r.value},
                   {"reversible", r.reversible},
                   {"potential", r.potential},
                   {"equilibrium_measure", r.equilibrium_measure}};
  if (r.reversible) {
    j["dirichlet_upper"] = r.dirichlet_upper;
    j["thomson_lower"] = r.thomson_lower;
  } else {
    j["dirichlet_upper"] = nullptr;
    j["thomson_lower"] = nullptr;
  }
  return j;
}

CapacityResult capacity(const Chain& chain, const StateSet& a, const StateSet& b) {
  return capacity(chain, stationary(chain), a, b);
}

CapacityResult capacity(const Chain& chain, const Measure& mu, const StateSet& a,
                        const StateSet& b) {
  const std::size_t n = chain.size();
  require_nonempty(a, "first set", n);
  require_nonempty(b, "second set", n);
  require_disjoint(a, b);
  if (!chain.irreducible()) fail(ErrorCode::Reducible, "capacity requires an irreducible chain");
  if (mu.size() != n) fail(ErrorCode::SupportMismatch, "measure does not match the chain");

  CapacityResult r;
  r.potential.assign(n, 0.0);
  for (Index i : a) r.potential[i] = 1.0;
  const auto interior = complement(set_union(a, b), n);
  if (!interior.empty()) {
    const auto amask = indicator_mask(a, n);
    detail::Vector rhs(static_cast<Eigen::Index>(interior.size()));
    for (Index k = 0; k < interior.size(); ++k) {
      double s = 0.0;
      const auto row = chain.row(interior[k]);
      for (std::size_t m = 0; m < row.targets.size(); ++m)
        if (amask[row.targets[m]]) s += row.rates[m];
      rhs[static_cast<Eigen::Index>(k)] = s;
    }
    detail::DirichletSolver solver(chain, interior);
    const detail::Vector v = solver.solve(rhs);
    for (Index k = 0; k < interior.size(); ++k)
      r.potential[interior[k]] = std::clamp(v[static_cast<Eigen::Index>(k)], 0.0, 1.0);
  }

  r.equilibrium_measure.assign(a.size(), 0.0);
  for (Index k = 0; k < a.size(); ++k) {
    const auto row = chain.row(a[k]);
    double esc = 0.0;
    for (std::size_t m = 0; m < row.targets.size(); ++m)
      esc += row.rates[m] * (1.0 - r.potential[row.targets[m]]);
    r.equilibrium_measure[k] = mu[a[k]] * esc;
    r.value += r.equilibrium_measure[k];
  }
  if (r.value > 0.0)
    for (double& e : r.equilibrium_measure) e /= r.value;

  r.reversible = is_reversible(chain, mu.weights());
  if (r.reversible) {
    r.dirichlet_upper = dirichlet_form(chain, mu, r.potential);
    // Thomson value of the harmonic current phi = c dV / Cap.
    r.thomson_lower = r.value * r.value / r.dirichlet_upper;
  } else {
    r.dirichlet_upper = kNaN;
    r.thomson_lower = kNaN;
  }
  return r;
}

double point_capacity(const Chain& chain, const Measure& mu, Index eta, const StateSet& b) {
  require_nonempty(b, "target set", chain.size());
  if (contains(b, eta)) fail(ErrorCode::EtaInA, "state lies inside the target set");
  const auto interior = complement(b, chain.size());
  detail::DirichletSolver solver(chain, interior);
  const auto pos = detail::positions(interior, chain.size());
  detail::Vector e = detail::Vector::Zero(static_cast<Eigen::Index>(interior.size()));
  const auto k = static_cast<Eigen::Index>(pos[eta]);
  e[k] = 1.0;
  const detail::Vector g = solver.solve(e);
  return mu[eta] / g[k];
}

std::vector<double> point_capacities(const Chain& chain, const Measure& mu,
                                     const StateSet& etas, const StateSet& b) {
  require_nonempty(b, "target set", chain.size());
  for (Index eta : etas)
    if (contains(b, eta)) fail(ErrorCode::EtaInA, "state lies inside the target set");
  std::vector<double> out;
  if (etas.empty()) return out;
  const auto interior = complement(b, chain.size());
  detail::DirichletSolver solver(chain, interior);
  const auto pos = detail::positions(interior, chain.size());
  const auto m = static_cast<Eigen::Index>(interior.size());
  out.reserve(etas.size());
  for (std::size_t c0 = 0; c0 < etas.size(); c0 += 64) {
    const std::size_t w = std::min<std::size_t>(64, etas.size() - c0);
    Eigen::MatrixXd e = Eigen::MatrixXd::Zero(m, static_cast<Eigen::Index>(w));
    for (std::size_t k = 0; k < w; ++k)
      e(static_cast<Eigen::Index>(pos[etas[c0 + k]]), static_cast<Eigen::Index>(k)) = 1.0;
    const Eigen::MatrixXd g = solver.solve(e);
    for (std::size_t k = 0; k < w; ++k) {
      const Index eta = etas[c0 + k];
      out.push_back(mu[eta] / g(static_cast<Eigen::Index>(pos[eta]), static_cast<Eigen::Index>(k)));
    }
  }
  return out;
}

double dirichlet_form(const Chain& chain, const Measure& mu, std::span<const double> f) {
  if (f.size() != chain.size()) fail(ErrorCode::SupportMismatch, "function length mismatch");
  double d = 0.0;
  for (Index i = 0; i < chain.size(); ++i) {
    const auto row = chain.row(i);
    double s = 0.0;
    for (std::size_t m = 0; m < row.targets.size(); ++m) {
      const double df = f[row.targets[m]] - f[i];
      s += row.rates[m] * df * df;
    }
    d += mu[i] * s;
  }
  return 0.5 * d;
}

double dirichlet_bound(const Chain& chain, const StateSet& a, const StateSet& b,
                       std::span<const double> test_function) {
  const auto mu = stationary(chain);
  if (!is_reversible(chain, mu.weights()))
    fail(ErrorCode::NotReversible, "the Dirichlet principle requires a reversible chain");
  if (test_function.size() != chain.size())
    fail(ErrorCode::SupportMismatch, "test function length mismatch");
  for (Index i : a)
    if (std::abs(test_function[i] - 1.0) > 1e-12)
      fail(ErrorCode::BoundaryViolation, "test function is not 1 on the first set");
  for (Index i : b)
    if (std::abs(test_function[i]) > 1e-12)
      fail(ErrorCode::BoundaryViolation, "test function is not 0 on the second set");
  return dirichlet_form(chain, mu, test_function);
}

Flow harmonic_unit_flow(const Chain& chain, const StateSet& a, const StateSet& b) {
  const auto mu = stationary(chain);
  if (!is_reversible(chain, mu.weights()))
    fail(ErrorCode::NotReversible, "harmonic flows are built for reversible chains");
  const auto cap = capacity(chain, mu, a, b);
  Flow flow;
  for (Index i = 0; i < chain.size(); ++i) {
    const auto row = chain.row(i);
    for (std::size_t m = 0; m < row.targets.size(); ++m) {
      const Index j = row.targets[m];
      if (j < i) continue;
      const double c = mu[i] * row.rates[m];
      flow.push_back({i, j, c * (cap.potential[i] - cap.potential[j]) / cap.value});
    }
  }
  return flow;
}

double thomson_bound(const Chain& chain, const StateSet& a, const StateSet& b,
                     const Flow& unit_flow) {
  const std::size_t n = chain.size();
  require_nonempty(a, "first set", n);
  require_nonempty(b, "second set", n);
  require_disjoint(a, b);
  const auto mu = stationary(chain);
  if (!is_reversible(chain, mu.weights()))
    fail(ErrorCode::NotReversible, "the Thomson principle requires a reversible chain");

  std::map<std::pair<Index, Index>, double> net;
  for (const auto& e : unit_flow) {
    if (e.from >= n || e.to >= n || e.from == e.to)
      fail(ErrorCode::NotAFlow, "flow edge with invalid endpoints");
    if (e.value == 0.0) continue;
    if (chain.rate(e.from, e.to) <= 0.0)
      fail(ErrorCode::NotAFlow, "flow uses a pair that is not an edge of the chain");
    if (e.from < e.to) net[{e.from, e.to}] += e.value;
    else net[{e.to, e.from}] -= e.value;
  }
  std::vector<double> div(n, 0.0);
  double energy = 0.0;
  for (const auto& [ij, v] : net) {
    div[ij.first] += v;
    div[ij.second] -= v;
    energy += v * v / (mu[ij.first] * chain.rate(ij.first, ij.second));
  }
  const auto amask = indicator_mask(a, n), bmask = indicator_mask(b, n);
  double out_of_a = 0.0;
  for (Index i = 0; i < n; ++i) {
    if (amask[i]) out_of_a += div[i];
    else if (!bmask[i] && std::abs(div[i]) > 1e-10)
      fail(ErrorCode::NotAFlow, "flow has divergence " + std::to_string(div[i]) +
                                    " at state " + std::to_string(i));
  }
  if (std::abs(out_of_a - 1.0) > 1e-10)
    fail(ErrorCode::NotAFlow, "flow does not carry unit flux out of the first set");
  return 1.0 / energy;
}

StateSet exterior_boundary(const Chain& chain, const StateSet& a) {
  const auto mask = indicator_mask(a, chain.size());
  std::vector<Index> out;
  for (Index i : a)
    for (Index j : chain.row(i).targets)
      if (!mask[j]) out.push_back(j);
  return make_state_set(std::move(out));
}

HittingBound hitting_prob_bound(const Chain& chain, const Measure& mu, Index eta,
                                const StateSet& a, double b) {
  if (contains(a, eta)) fail(ErrorCode::EtaInA, "starting state lies in the target set");
  if (!(b > 0.0)) fail(ErrorCode::InvalidArgument, "time bound must be positive");
  HittingBound h;
  h.point_capacity = point_capacity(chain, mu, eta, a);
  const double e = std::exp(1.0);
  h.bound = std::min(1.0, e * b * h.point_capacity / mu[eta]);

  const auto amask = indicator_mask(a, chain.size());
  auto rate_into_a = [&](Index x) {
    const auto row = chain.row(x);
    double s = 0.0;
    for (std::size_t m = 0; m < row.targets.size(); ++m)
      if (amask[row.targets[m]]) s += row.rates[m];
    return s;
  };
  double flux = 0.0;
  for (Index x : exterior_boundary(chain, a)) flux += mu[x] * rate_into_a(x);
  double into_a = 0.0;
  for (Index x = 0; x < chain.size(); ++x)
    if (!amask[x]) into_a += mu[x] * rate_into_a(x);
  h.boundary_bound_halved = e * b / (2.0 * mu[eta]) * flux;
  h.boundary_bound = e * b / mu[eta] * into_a;
  return h;
}

nlohmann::json to_json(const DeltaBoundTerms& t) {
  return {{"exit_term", t.exit_term}, {"reflected_tv", t.reflected_tv},
          {"measure_ratio", t.measure_ratio}, {"bound", t.bound}, {"exact", t.exact}};
}

DeltaBoundTerms delta_occupation_bound(const Chain& chain, const Measure& mu, Index eta,
                                       const StateSet& well, const StateSet& delta,
                                       double T, double s) {
  if (!(T > 0.0) || !(s > T)) fail(ErrorCode::InvalidArgument, "require 0 < T < s");
  if (!contains(well, eta)) fail(ErrorCode::InvalidArgument, "starting state outside the well");
  const std::size_t n = chain.size();
  DeltaBoundTerms t;
  const auto outside = complement(well, n);
  if (!outside.empty()) t.exit_term = hitting_probability_by(chain, outside, T)[eta];

  const Chain reflected = reflected_chain(chain, well);
  const auto pos = detail::positions(well, n);
  const auto at_T = transient_distribution(reflected, Measure::dirac(well.size(), pos[eta]), T);
  t.reflected_tv = tv_distance(at_T, mu.restricted(well));
  t.measure_ratio = mu.mass(delta) / mu.mass(well);
  t.bound = t.exit_term + t.reflected_tv + t.measure_ratio;
  if (!delta.empty()) t.exact = transient_distribution(chain, Measure::dirac(n, eta), s).mass(delta);
  return t;
}

}  // namespace metastab
