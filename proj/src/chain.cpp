#include "metastab/chain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "detail/poisson.hpp"
#include "detail/sparse.hpp"

namespace metastab {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NegativeRate: return "NegativeRate";
    case ErrorCode::DuplicateEntry: return "DuplicateEntry";
    case ErrorCode::EmptyStateSet: return "EmptyStateSet";
    case ErrorCode::Reducible: return "Reducible";
    case ErrorCode::NonconvergentSeries: return "NonconvergentSeries";
    case ErrorCode::SupportMismatch: return "SupportMismatch";
    case ErrorCode::TargetIsWholeSpace: return "TargetIsWholeSpace";
    case ErrorCode::EmptySubset: return "EmptySubset";
    case ErrorCode::ReducibleReflection: return "ReducibleReflection";
    case ErrorCode::NonpositiveGamma: return "NonpositiveGamma";
    case ErrorCode::Overlap: return "Overlap";
    case ErrorCode::NotReversible: return "NotReversible";
    case ErrorCode::BoundaryViolation: return "BoundaryViolation";
    case ErrorCode::NotAFlow: return "NotAFlow";
    case ErrorCode::EtaInA: return "EtaInA";
    case ErrorCode::PsiOnDelta: return "PsiOnDelta";
    case ErrorCode::NoBottoms: return "NoBottoms";
    case ErrorCode::ProductTooLarge: return "ProductTooLarge";
    case ErrorCode::ParameterOutOfRange: return "ParameterOutOfRange";
    case ErrorCode::StateSpaceTooLarge: return "StateSpaceTooLarge";
    case ErrorCode::SaddleNotFound: return "SaddleNotFound";
    case ErrorCode::NonSmoothBoundary: return "NonSmoothBoundary";
    case ErrorCode::SpecParseError: return "SpecParseError";
    case ErrorCode::TimesBeyondHorizon: return "TimesBeyondHorizon";
    case ErrorCode::NoExitsObserved: return "NoExitsObserved";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::UnknownCondition: return "UnknownCondition";
    case ErrorCode::Internal: return "Internal";
  }
  return "Unknown";
}

// State sets -----------------------------------------------------------------

StateSet make_state_set(std::vector<Index> indices) {
  std::sort(indices.begin(), indices.end());
  indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
  return indices;
}

StateSet complement(const StateSet& set, std::size_t n) {
  StateSet out;
  out.reserve(n - std::min(n, set.size()));
  std::size_t k = 0;
  for (Index i = 0; i < n; ++i) {
    while (k < set.size() && set[k] < i) ++k;
    if (k < set.size() && set[k] == i) continue;
    out.push_back(i);
  }
  return out;
}

StateSet set_union(const StateSet& a, const StateSet& b) {
  StateSet out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

bool contains(const StateSet& set, Index i) {
  return std::binary_search(set.begin(), set.end(), i);
}

std::vector<char> indicator_mask(const StateSet& set, std::size_t n) {
  std::vector<char> mask(n, 0);
  for (Index i : set) mask.at(i) = 1;
  return mask;
}

// Chain ----------------------------------------------------------------------

std::optional<Index> Chain::find(std::string_view key) const {
  auto it = index_.find(std::string(key));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Chain::Row Chain::row(Index i) const {
  const std::size_t b = row_start_.at(i);
  const std::size_t e = row_start_.at(i + 1);
  return {std::span<const Index>(targets_).subspan(b, e - b),
          std::span<const double>(rates_).subspan(b, e - b)};
}

double Chain::rate(Index from, Index to) const {
  const auto r = row(from);
  auto it = std::lower_bound(r.targets.begin(), r.targets.end(), to);
  if (it == r.targets.end() || *it != to) return 0.0;
  return r.rates[static_cast<std::size_t>(it - r.targets.begin())];
}

std::vector<RateEntry> Chain::effective_entries() const {
  std::vector<RateEntry> out;
  out.reserve(targets_.size());
  for (Index i = 0; i < size(); ++i) {
    const auto r = row(i);
    for (std::size_t k = 0; k < r.targets.size(); ++k)
      out.push_back({i, r.targets[k], r.rates[k]});
  }
  return out;
}

namespace {

bool reaches_all(std::size_t n, const std::vector<std::vector<Index>>& adj) {
  std::vector<char> seen(n, 0);
  std::vector<Index> stack{0};
  seen[0] = 1;
  std::size_t count = 1;
  while (!stack.empty()) {
    const Index i = stack.back();
    stack.pop_back();
    for (Index j : adj[i]) {
      if (!seen[j]) {
        seen[j] = 1;
        ++count;
        stack.push_back(j);
      }
    }
  }
  return count == n;
}

}  // namespace

Chain build_chain(std::vector<std::string> states,
                  std::vector<RateEntry> rate_entries, double time_scale) {
  if (states.empty()) fail(ErrorCode::EmptyStateSet, "chain has no states");
  if (!(time_scale > 0.0) || !std::isfinite(time_scale))
    fail(ErrorCode::InvalidArgument, "time scale must be positive and finite");

  Chain c;
  const std::size_t n = states.size();
  c.keys_ = std::move(states);
  for (Index i = 0; i < n; ++i) {
    if (!c.index_.emplace(c.keys_[i], i).second)
      fail(ErrorCode::DuplicateEntry, "duplicate state descriptor '" + c.keys_[i] + "'");
  }

  for (const auto& e : rate_entries) {
    if (e.from >= n || e.to >= n)
      fail(ErrorCode::InvalidArgument, "rate entry refers to an unknown state");
    if (e.from == e.to)
      fail(ErrorCode::InvalidArgument, "diagonal rate entries are not allowed");
    if (!(e.rate >= 0.0) || !std::isfinite(e.rate))
      fail(ErrorCode::NegativeRate, "rate " + std::to_string(e.rate) + " from state " +
                                        std::to_string(e.from) + " to " +
                                        std::to_string(e.to) + " is negative or not finite");
  }
  std::sort(rate_entries.begin(), rate_entries.end(),
            [](const RateEntry& a, const RateEntry& b) {
              return a.from != b.from ? a.from < b.from : a.to < b.to;
            });
  for (std::size_t k = 1; k < rate_entries.size(); ++k) {
    if (rate_entries[k].from == rate_entries[k - 1].from &&
        rate_entries[k].to == rate_entries[k - 1].to)
      fail(ErrorCode::DuplicateEntry,
           "duplicate rate entry (" + std::to_string(rate_entries[k].from) + ", " +
               std::to_string(rate_entries[k].to) + ")");
  }

  c.time_scale_ = time_scale;
  c.row_start_.assign(n + 1, 0);
  c.holding_.assign(n, 0.0);
  std::vector<std::vector<Index>> fwd(n), bwd(n);
  for (const auto& e : rate_entries) {
    if (e.rate == 0.0) continue;
    const double r = e.rate * time_scale;
    c.targets_.push_back(e.to);
    c.rates_.push_back(r);
    c.row_start_[e.from + 1]++;
    fwd[e.from].push_back(e.to);
    bwd[e.to].push_back(e.from);
  }
  for (Index i = 0; i < n; ++i) c.row_start_[i + 1] += c.row_start_[i];
  for (Index i = 0; i < n; ++i) {
    const auto r = c.row(i);
    c.holding_[i] = std::accumulate(r.rates.begin(), r.rates.end(), 0.0);
  }
  c.max_holding_ = *std::max_element(c.holding_.begin(), c.holding_.end());
  c.irreducible_ = n == 1 || (reaches_all(n, fwd) && reaches_all(n, bwd));
  c.supplied_ = std::move(rate_entries);
  return c;
}

std::vector<std::string> numbered_states(std::size_t n) {
  std::vector<std::string> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = std::to_string(i);
  return s;
}

// Measure --------------------------------------------------------------------

Measure Measure::from_weights(std::vector<double> weights, bool normalize) {
  Measure m;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w))
      fail(ErrorCode::InvalidArgument, "measure weights must be finite and nonnegative");
  }
  if (normalize) {
    const double s = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (!(s > 0.0)) fail(ErrorCode::InvalidArgument, "measure has zero mass");
    for (double& w : weights) w /= s;
  }
  m.weights_ = std::move(weights);
  m.normalized_ = normalize;
  return m;
}

Measure Measure::from_log_weights(std::vector<double> log_weights) {
  if (log_weights.empty()) fail(ErrorCode::EmptyStateSet, "empty measure");
  const double top = *std::max_element(log_weights.begin(), log_weights.end());
  if (!std::isfinite(top)) fail(ErrorCode::InvalidArgument, "log weights must be finite");
  std::vector<double> w(log_weights.size());
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(log_weights[i] - top);
    s += w[i];
  }
  const double log_norm = top + std::log(s);
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] /= s;
    log_weights[i] -= log_norm;
  }
  Measure m;
  m.weights_ = std::move(w);
  m.log_weights_ = std::move(log_weights);
  m.normalized_ = true;
  return m;
}

Measure Measure::dirac(std::size_t n, Index at) {
  if (at >= n) fail(ErrorCode::InvalidArgument, "Dirac mass outside the state space");
  std::vector<double> w(n, 0.0);
  w[at] = 1.0;
  return from_weights(std::move(w), true);
}

Measure Measure::uniform(std::size_t n) {
  return from_weights(std::vector<double>(n, 1.0), true);
}

double Measure::mass(const StateSet& set) const {
  double s = 0.0;
  for (Index i : set) s += weights_.at(i);
  return s;
}

double Measure::total() const {
  return std::accumulate(weights_.begin(), weights_.end(), 0.0);
}

Measure Measure::conditioned(const StateSet& set) const {
  std::vector<double> w(size(), 0.0);
  for (Index i : set) w.at(i) = weights_.at(i);
  return from_weights(std::move(w), true);
}

Measure Measure::restricted(const StateSet& set) const {
  std::vector<double> w;
  w.reserve(set.size());
  for (Index i : set) w.push_back(weights_.at(i));
  return from_weights(std::move(w), true);
}

// Trajectory -----------------------------------------------------------------

double Trajectory::duration() const {
  return records.empty() ? 0.0 : records.back().exit - records.front().entry;
}

Index Trajectory::state_at(double t) const {
  if (records.empty()) fail(ErrorCode::InvalidArgument, "empty trajectory");
  auto it = std::upper_bound(records.begin(), records.end(), t,
                             [](double v, const Sojourn& s) { return v < s.entry; });
  if (it == records.begin())
    fail(ErrorCode::InvalidArgument, "time precedes the trajectory");
  --it;
  if (t > it->exit) fail(ErrorCode::TimesBeyondHorizon, "time beyond the trajectory");
  return it->state;
}

void Trajectory::validate() const {
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto& r = records[k];
    if (!(r.exit > r.entry))
      fail(ErrorCode::InvalidArgument, "sojourn " + std::to_string(k) + " has no duration");
    if (k > 0) {
      if (records[k - 1].exit != r.entry)
        fail(ErrorCode::InvalidArgument, "sojourn " + std::to_string(k) + " is not contiguous");
      if (records[k - 1].state == r.state)
        fail(ErrorCode::InvalidArgument, "sojourn " + std::to_string(k) + " repeats its state");
    }
  }
}

// Stationary distribution ------------------------------------------------------

namespace {

// Log weights from detailed balance along a spanning tree, or nothing when
// some edge violates it.
std::optional<std::vector<double>> detailed_balance_weights(const Chain& chain) {
  const std::size_t n = chain.size();
  std::vector<double> lw(n, 0.0);
  std::vector<char> seen(n, 0);
  std::vector<Index> stack{0};
  seen[0] = 1;
  while (!stack.empty()) {
    const Index i = stack.back();
    stack.pop_back();
    const auto row = chain.row(i);
    for (std::size_t k = 0; k < row.targets.size(); ++k) {
      const Index j = row.targets[k];
      if (seen[j]) continue;
      const double back = chain.rate(j, i);
      if (back <= 0.0) return std::nullopt;
      lw[j] = lw[i] + std::log(row.rates[k]) - std::log(back);
      seen[j] = 1;
      stack.push_back(j);
    }
  }
  for (Index i = 0; i < n; ++i) {
    const auto row = chain.row(i);
    for (std::size_t k = 0; k < row.targets.size(); ++k) {
      const Index j = row.targets[k];
      const double back = chain.rate(j, i);
      if (back <= 0.0) return std::nullopt;
      const double gap = lw[i] + std::log(row.rates[k]) - lw[j] - std::log(back);
      if (std::abs(gap) > 1e-10) return std::nullopt;
    }
  }
  return lw;
}

}  // namespace

Measure stationary(const Chain& chain) {
  const std::size_t n = chain.size();
  if (!chain.irreducible())
    fail(ErrorCode::Reducible, "chain is reducible: no unique stationary distribution");
  if (n == 1) return Measure::dirac(1, 0);
  if (auto lw = detailed_balance_weights(chain)) return Measure::from_log_weights(std::move(*lw));

  // Jump-chain form nu_i = mu_i lambda_i, pinned at one state: (I - P)^T restricted
  // to the other states is a nonsingular M-matrix.
  auto solve_pinned = [&](Index pin) {
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(chain.num_transitions() + n);
    auto pos = [&](Index i) { return static_cast<Eigen::Index>(i < pin ? i : i - 1); };
    detail::Vector b = detail::Vector::Zero(static_cast<Eigen::Index>(n - 1));
    for (Index i = 0; i < n; ++i) {
      if (i != pin) t.emplace_back(pos(i), pos(i), 1.0);
      const double inv = 1.0 / chain.holding(i);
      const auto row = chain.row(i);
      for (std::size_t k = 0; k < row.targets.size(); ++k) {
        const Index j = row.targets[k];
        if (j == pin) continue;
        if (i == pin) b[pos(j)] += row.rates[k] * inv;
        else t.emplace_back(pos(j), pos(i), -row.rates[k] * inv);
      }
    }
    detail::SparseMatrix a(static_cast<Eigen::Index>(n - 1), static_cast<Eigen::Index>(n - 1));
    a.setFromTriplets(t.begin(), t.end());
    a.makeCompressed();
    Eigen::SparseLU<detail::SparseMatrix, Eigen::COLAMDOrdering<int>> lu(a);
    if (lu.info() != Eigen::Success) fail(ErrorCode::Reducible, "stationary system is singular");
    detail::Vector x = lu.solve(b);
    for (int step = 0; step < 2; ++step) {
      const detail::Vector r = b - a * x;
      x += lu.solve(r);
    }
    std::vector<double> w(n);
    for (Index i = 0; i < n; ++i)
      w[i] = std::max(i == pin ? 1.0 : x[pos(i)], 0.0) / chain.holding(i);
    return w;
  };
  std::vector<double> w = solve_pinned(0);
  const auto top = static_cast<Index>(std::max_element(w.begin(), w.end()) - w.begin());
  if (top != 0) w = solve_pinned(top);
  return Measure::from_weights(std::move(w), true);
}

double stationarity_residual(const Chain& chain, std::span<const double> mu) {
  std::vector<double> r(chain.size(), 0.0);
  for (Index i = 0; i < chain.size(); ++i) {
    r[i] -= mu[i] * chain.holding(i);
    const auto row = chain.row(i);
    for (std::size_t k = 0; k < row.targets.size(); ++k)
      r[row.targets[k]] += mu[i] * row.rates[k];
  }
  double m = 0.0;
  for (double v : r) m = std::max(m, std::abs(v));
  return m;
}

bool is_reversible(const Chain& chain, std::span<const double> mu, double rel_tol) {
  for (Index i = 0; i < chain.size(); ++i) {
    const auto row = chain.row(i);
    for (std::size_t k = 0; k < row.targets.size(); ++k) {
      const Index j = row.targets[k];
      const double a = mu[i] * row.rates[k];
      const double b = mu[j] * chain.rate(j, i);
      if (std::abs(a - b) > rel_tol * std::max(a, b)) return false;
    }
  }
  return true;
}

// Uniformization -----------------------------------------------------------------

namespace {

struct UniformizedStep {
  const Chain& chain;
  std::span<const char> absorbing;
  double rate = 0.0;  // uniformization constant

  bool frozen(Index i) const { return !absorbing.empty() && absorbing[i]; }

  double effective_holding(Index i) const {
    return frozen(i) ? 0.0 : chain.holding(i);
  }

  // out = v P for a row vector v
  void forward(const std::vector<double>& v, std::vector<double>& out) const {
    const std::size_t n = chain.size();
    for (Index j = 0; j < n; ++j) out[j] = v[j] * (1.0 - effective_holding(j) / rate);
    for (Index i = 0; i < n; ++i) {
      if (frozen(i) || v[i] == 0.0) continue;
      const auto row = chain.row(i);
      const double s = v[i] / rate;
      for (std::size_t k = 0; k < row.targets.size(); ++k)
        out[row.targets[k]] += s * row.rates[k];
    }
  }

  // out = P f for a column vector f
  void backward(const std::vector<double>& f, std::vector<double>& out) const {
    const std::size_t n = chain.size();
    for (Index i = 0; i < n; ++i) {
      double acc = f[i] * (1.0 - effective_holding(i) / rate);
      if (!frozen(i)) {
        const auto row = chain.row(i);
        for (std::size_t k = 0; k < row.targets.size(); ++k)
          acc += row.rates[k] / rate * f[row.targets[k]];
      }
      out[i] = acc;
    }
  }
};

double uniformization_rate(const Chain& chain, std::span<const char> absorbing) {
  double r = 0.0;
  for (Index i = 0; i < chain.size(); ++i)
    if (absorbing.empty() || !absorbing[i]) r = std::max(r, chain.holding(i));
  return r;
}

void check_series(double rate, double t) {
  if (!(t >= 0.0) || !std::isfinite(t))
    fail(ErrorCode::InvalidArgument, "time must be finite and nonnegative");
  if (rate * t > kMaxUniformizationSteps) {
    std::ostringstream os;
    os << "uniformization needs about " << rate * t
       << " steps; split the time interval or rescale the chain";
    fail(ErrorCode::NonconvergentSeries, os.str());
  }
}

template <bool Forward>
std::vector<double> evolve(const Chain& chain, std::span<const double> v0, double t,
                           std::span<const char> absorbing) {
  if (v0.size() != chain.size())
    fail(ErrorCode::SupportMismatch, "vector length differs from the state count");
  if (!absorbing.empty() && absorbing.size() != chain.size())
    fail(ErrorCode::SupportMismatch, "absorbing mask length differs from the state count");
  const double rate = uniformization_rate(chain, absorbing);
  check_series(rate, t);
  std::vector<double> v(v0.begin(), v0.end());
  if (t == 0.0 || rate == 0.0) return v;

  const auto window = detail::poisson_window(rate * t, kUniformizationTail);
  UniformizedStep step{chain, absorbing, rate};
  std::vector<double> acc(chain.size(), 0.0), next(chain.size());
  double weight_sum = 0.0;
  for (std::size_t k = 0;; ++k) {
    const double w = window.weight(k);
    if (w > 0.0) {
      weight_sum += w;
      for (Index i = 0; i < v.size(); ++i) acc[i] += w * v[i];
    }
    if (k == window.right) break;
    if constexpr (Forward) step.forward(v, next);
    else step.backward(v, next);
    v.swap(next);
  }
  for (double& a : acc) a /= weight_sum;
  return acc;
}

}  // namespace

std::vector<double> evolve_forward(const Chain& chain, std::span<const double> v,
                                   double t, std::span<const char> absorbing) {
  return evolve<true>(chain, v, t, absorbing);
}

std::vector<double> evolve_backward(const Chain& chain, std::span<const double> f,
                                    double t, std::span<const char> absorbing) {
  return evolve<false>(chain, f, t, absorbing);
}

std::vector<double> integrate_backward(const Chain& chain, std::span<const double> f,
                                       double t) {
  if (f.size() != chain.size())
    fail(ErrorCode::SupportMismatch, "vector length differs from the state count");
  const double rate = chain.max_holding();
  check_series(rate, t);
  std::vector<double> acc(chain.size(), 0.0);
  if (t == 0.0) return acc;
  if (rate == 0.0) {
    for (Index i = 0; i < acc.size(); ++i) acc[i] = t * f[i];
    return acc;
  }
  // int_0^t Pois(rate s; k) ds = P[Pois(rate t) > k] / rate
  const auto window = detail::poisson_window(rate * t, kUniformizationTail);
  UniformizedStep step{chain, {}, rate};
  std::vector<double> v(f.begin(), f.end()), next(chain.size());
  double cdf = 0.0;
  for (std::size_t k = 0; k <= window.right; ++k) {
    cdf += window.weight(k);
    const double survival = std::max(0.0, 1.0 - cdf);
    if (survival == 0.0) break;
    for (Index i = 0; i < v.size(); ++i) acc[i] += survival * v[i];
    step.backward(v, next);
    v.swap(next);
  }
  for (double& a : acc) a /= rate;
  return acc;
}

std::vector<double> hitting_probability_by(const Chain& chain, const StateSet& target,
                                           double t) {
  const auto mask = indicator_mask(target, chain.size());
  std::vector<double> f(chain.size());
  for (Index i = 0; i < f.size(); ++i) f[i] = mask[i] ? 1.0 : 0.0;
  auto p = evolve_backward(chain, f, t, mask);
  for (Index i = 0; i < p.size(); ++i) p[i] = mask[i] ? 1.0 : std::clamp(p[i], 0.0, 1.0);
  return p;
}

Measure transient_distribution(const Chain& chain, const Measure& init, double t) {
  if (init.size() != chain.size())
    fail(ErrorCode::SupportMismatch, "initial measure is not supported on the chain");
  auto v = evolve_forward(chain, init.weights(), t);
  for (double& x : v) x = std::max(x, 0.0);
  return Measure::from_weights(std::move(v), true);
}

double tv_distance(std::span<const double> mu, std::span<const double> nu) {
  if (mu.size() != nu.size())
    fail(ErrorCode::SupportMismatch, "measures live on different state spaces");
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) s += std::abs(mu[i] - nu[i]);
  return std::min(1.0, 0.5 * s);
}

double tv_distance(const Measure& mu, const Measure& nu) {
  return tv_distance(mu.weights(), nu.weights());
}

double occupation_time(const Chain& chain, const Measure& init, const StateSet& set,
                       double t) {
  if (init.size() != chain.size())
    fail(ErrorCode::SupportMismatch, "initial measure is not supported on the chain");
  if (set.empty()) return 0.0;
  if (set.size() == chain.size()) return t * init.total();
  std::vector<double> f(chain.size(), 0.0);
  for (Index i : set) f.at(i) = 1.0;
  const auto g = integrate_backward(chain, f, t);
  double s = 0.0;
  for (Index i = 0; i < g.size(); ++i) s += init[i] * g[i];
  return s;
}

// Serialization -----------------------------------------------------------------

nlohmann::json to_json(const Chain& chain) {
  nlohmann::json rates = nlohmann::json::array();
  for (const auto& e : chain.supplied_entries())
    rates.push_back({e.from, e.to, e.rate});
  return {{"states", chain.keys()}, {"rates", std::move(rates)},
          {"time_scale", chain.time_scale()}};
}

Chain chain_from_json(const nlohmann::json& doc) {
  try {
    auto states = doc.at("states").get<std::vector<std::string>>();
    std::vector<RateEntry> entries;
    for (const auto& r : doc.at("rates")) {
      if (!r.is_array() || r.size() != 3)
        fail(ErrorCode::SpecParseError, "rate entries must be [from, to, rate]");
      entries.push_back({r[0].get<Index>(), r[1].get<Index>(), r[2].get<double>()});
    }
    const double theta = doc.value("time_scale", 1.0);
    return build_chain(std::move(states), std::move(entries), theta);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::SpecParseError, std::string("malformed chain document: ") + e.what());
  }
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c != '\r') {
      fields.back() += c;
    }
  }
  return fields;
}

}  // namespace

std::string trajectory_to_csv(const Trajectory& path, const Chain& chain) {
  std::string out = "entry_time,exit_time,state_key\n";
  char buf[64];
  for (const auto& r : path.records) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,", r.entry, r.exit);
    out += buf;
    out += csv_field(chain.key(r.state));
    out += '\n';
  }
  return out;
}

Trajectory trajectory_from_csv(std::string_view csv, const Chain& chain) {
  Trajectory path;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < csv.size()) {
    std::size_t end = csv.find('\n', pos);
    if (end == std::string_view::npos) end = csv.size();
    const auto line = csv.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty() || line_no == 1) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 3)
      fail(ErrorCode::SpecParseError, "line " + std::to_string(line_no) + ": expected 3 fields");
    const auto state = chain.find(f[2]);
    if (!state)
      fail(ErrorCode::SpecParseError,
           "line " + std::to_string(line_no) + ": unknown state '" + f[2] + "'");
    try {
      path.records.push_back({*state, std::stod(f[0]), std::stod(f[1])});
    } catch (const std::exception&) {
      fail(ErrorCode::SpecParseError, "line " + std::to_string(line_no) + ": bad time value");
    }
  }
  path.horizon = path.records.empty() ? 0.0 : path.records.back().exit;
  path.validate();
  return path;
}

}  // namespace metastab
