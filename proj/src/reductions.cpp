#include "metastab/reductions.hpp"

#include <algorithm>
#include <map>

#include "detail/sparse.hpp"

namespace metastab {

namespace {

void require_subset(const StateSet& a, std::size_t n, const char* what) {
  if (a.empty()) fail(ErrorCode::EmptySubset, std::string(what) + " is empty");
  if (!std::is_sorted(a.begin(), a.end()) ||
      std::adjacent_find(a.begin(), a.end()) != a.end())
    fail(ErrorCode::InvalidArgument, std::string(what) + " must be sorted and duplicate-free");
  if (a.back() >= n) fail(ErrorCode::InvalidArgument, std::string(what) + " has an unknown state");
}

constexpr Eigen::Index kChunk = 64;

}  // namespace

HittingProfile hitting_profile(const Chain& chain, Index source, const StateSet& target) {
  require_subset(target, chain.size(), "target set");
  if (target.size() == chain.size())
    fail(ErrorCode::TargetIsWholeSpace, "target set is the whole state space");
  if (source >= chain.size()) fail(ErrorCode::InvalidArgument, "unknown source state");

  HittingProfile h;
  h.source = source;
  h.target = target;
  h.absorb_probs.assign(target.size(), 0.0);
  if (contains(target, source)) {
    h.absorb_probs[static_cast<std::size_t>(
        std::lower_bound(target.begin(), target.end(), source) - target.begin())] = 1.0;
    return h;
  }

  const auto interior = complement(target, chain.size());
  detail::DirichletSolver solver(chain, interior);
  const auto ipos = detail::positions(interior, chain.size());
  const auto tpos = detail::positions(target, chain.size());
  detail::Vector e = detail::Vector::Zero(static_cast<Eigen::Index>(interior.size()));
  e[static_cast<Eigen::Index>(ipos[source])] = 1.0;
  // Row of the Green function on the interior.
  const detail::Vector g = solver.solve_transposed(e);
  for (Index k = 0; k < interior.size(); ++k) {
    const double gk = g[static_cast<Eigen::Index>(k)];
    h.mean_time += gk;
    const auto row = chain.row(interior[k]);
    for (std::size_t m = 0; m < row.targets.size(); ++m) {
      const Index t = tpos[row.targets[m]];
      if (t != detail::npos) h.absorb_probs[t] += gk * row.rates[m];
    }
  }
  for (double& p : h.absorb_probs) p = std::max(p, 0.0);
  return h;
}

std::vector<double> mean_hitting_times(const Chain& chain, const StateSet& target) {
  require_subset(target, chain.size(), "target set");
  std::vector<double> out(chain.size(), 0.0);
  if (target.size() == chain.size()) return out;
  const auto interior = complement(target, chain.size());
  detail::DirichletSolver solver(chain, interior);
  const detail::Vector m =
      solver.solve(detail::Vector(detail::Vector::Ones(static_cast<Eigen::Index>(interior.size()))));
  for (Index k = 0; k < interior.size(); ++k)
    out[interior[k]] = m[static_cast<Eigen::Index>(k)];
  return out;
}

Chain trace_chain(const Chain& chain, const StateSet& a, bool verify) {
  const std::size_t n = chain.size();
  require_subset(a, n, "trace set");
  if (a.size() == n) return chain;
  if (!chain.irreducible()) fail(ErrorCode::Reducible, "trace requires an irreducible chain");

  const auto c = complement(a, n);
  const auto apos = detail::positions(a, n);
  const auto cpos = detail::positions(c, n);

  // Boundary states of A: exits into C and entrances from C.
  std::vector<Index> exits, entrances;
  {
    std::vector<char> entered(a.size(), 0);
    for (Index k = 0; k < a.size(); ++k) {
      const auto row = chain.row(a[k]);
      if (std::any_of(row.targets.begin(), row.targets.end(),
                      [&](Index j) { return cpos[j] != detail::npos; }))
        exits.push_back(k);
    }
    for (Index i : c)
      for (Index j : chain.row(i).targets)
        if (apos[j] != detail::npos) entered[apos[j]] = 1;
    for (Index k = 0; k < a.size(); ++k)
      if (entered[k]) entrances.push_back(k);
  }

  std::map<std::pair<Index, Index>, double> rates;
  for (Index k = 0; k < a.size(); ++k) {
    const auto row = chain.row(a[k]);
    for (std::size_t m = 0; m < row.targets.size(); ++m) {
      const Index j = apos[row.targets[m]];
      if (j != detail::npos) rates[{k, j}] += row.rates[m];
    }
  }

  if (!exits.empty() && !entrances.empty()) {
    detail::DirichletSolver solver(chain, c);
    const auto nc = static_cast<Eigen::Index>(c.size());
    // R_AC restricted to exits (rows) and R_CA restricted to entrances (cols).
    std::vector<Index> exit_pos(a.size(), detail::npos), entrance_pos(a.size(), detail::npos);
    for (Index k = 0; k < exits.size(); ++k) exit_pos[exits[k]] = k;
    for (Index k = 0; k < entrances.size(); ++k) entrance_pos[entrances[k]] = k;
    std::vector<Eigen::Triplet<double>> out_t, in_t;
    for (Index k : exits) {
      const auto row = chain.row(a[k]);
      for (std::size_t m = 0; m < row.targets.size(); ++m) {
        const Index j = cpos[row.targets[m]];
        if (j != detail::npos) out_t.emplace_back(exit_pos[k], j, row.rates[m]);
      }
    }
    for (Index r = 0; r < c.size(); ++r) {
      const auto row = chain.row(c[r]);
      for (std::size_t m = 0; m < row.targets.size(); ++m) {
        const Index j = apos[row.targets[m]];
        if (j != detail::npos) in_t.emplace_back(r, entrance_pos[j], row.rates[m]);
      }
    }
    detail::SparseMatrix r_out(static_cast<Eigen::Index>(exits.size()), nc);
    r_out.setFromTriplets(out_t.begin(), out_t.end());
    detail::SparseMatrix r_in(nc, static_cast<Eigen::Index>(entrances.size()));
    r_in.setFromTriplets(in_t.begin(), in_t.end());

    auto add = [&](Index exit_k, Index entrance_k, double v) {
      const Index from = exits[exit_k], to = entrances[entrance_k];
      if (from != to) rates[{from, to}] += v;
    };
    if (entrances.size() <= exits.size()) {
      for (Eigen::Index c0 = 0; c0 < r_in.cols(); c0 += kChunk) {
        const Eigen::Index w = std::min(kChunk, r_in.cols() - c0);
        const Eigen::MatrixXd rhs = Eigen::MatrixXd(r_in.middleCols(c0, w));
        const Eigen::MatrixXd x = solver.solve(rhs);
        const Eigen::MatrixXd contrib = r_out * x;
        for (Eigen::Index i = 0; i < contrib.rows(); ++i)
          for (Eigen::Index j = 0; j < w; ++j)
            if (contrib(i, j) != 0.0) add(i, c0 + j, contrib(i, j));
      }
    } else {
      const detail::SparseMatrix r_out_t = r_out.transpose();
      for (Eigen::Index c0 = 0; c0 < r_out_t.cols(); c0 += kChunk) {
        const Eigen::Index w = std::min(kChunk, r_out_t.cols() - c0);
        const Eigen::MatrixXd rhs = Eigen::MatrixXd(r_out_t.middleCols(c0, w));
        const Eigen::MatrixXd y = solver.solve_transposed(rhs);
        const Eigen::MatrixXd contrib = (y.transpose() * r_in).eval();
        for (Eigen::Index i = 0; i < w; ++i)
          for (Eigen::Index j = 0; j < contrib.cols(); ++j)
            if (contrib(i, j) != 0.0) add(c0 + i, j, contrib(i, j));
      }
    }
  }

  std::vector<std::string> keys;
  keys.reserve(a.size());
  for (Index i : a) keys.push_back(chain.key(i));
  std::vector<RateEntry> entries;
  entries.reserve(rates.size());
  for (const auto& [ij, r] : rates)
    if (r > 0.0) entries.push_back({ij.first, ij.second, r});
  Chain trace = build_chain(std::move(keys), std::move(entries));

  if (verify) {
    const auto mu = stationary(chain).restricted(a);
    const double res = stationarity_residual(trace, mu.weights());
    if (res > 1e-9 * std::max(trace.max_holding(), 1e-300))
      fail(ErrorCode::Internal, "trace chain fails the conditioned stationarity check");
  }
  return trace;
}

Chain reflected_chain(const Chain& chain, const StateSet& a) {
  require_subset(a, chain.size(), "reflection set");
  if (a.size() == chain.size()) return chain;
  const auto pos = detail::positions(a, chain.size());
  std::vector<RateEntry> entries;
  for (const auto& e : chain.supplied_entries()) {
    if (pos[e.from] != detail::npos && pos[e.to] != detail::npos && e.rate > 0.0)
      entries.push_back({pos[e.from], pos[e.to], e.rate});
  }
  std::vector<std::string> keys;
  keys.reserve(a.size());
  for (Index i : a) keys.push_back(chain.key(i));
  Chain r = build_chain(std::move(keys), std::move(entries), chain.time_scale());
  if (!r.irreducible())
    fail(ErrorCode::ReducibleReflection,
         "chain reflected in a set of " + std::to_string(a.size()) +
             " states is not irreducible");
  return r;
}

double reflection_defect(const Chain& chain, const StateSet& a) {
  const Chain r = reflected_chain(chain, a);
  const auto mu = stationary(chain).restricted(a);
  return stationarity_residual(r, mu.weights()) / std::max(r.max_holding(), 1e-300);
}

Chain enlarge_chain(const Chain& chain, double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma))
    fail(ErrorCode::NonpositiveGamma, "enlargement rate must be positive");
  if (!chain.irreducible()) fail(ErrorCode::Reducible, "enlargement requires an irreducible chain");
  const std::size_t n = chain.size();
  std::vector<std::string> keys = chain.keys();
  for (Index i = 0; i < n; ++i) keys.push_back(chain.key(i) + "*");
  std::vector<RateEntry> entries = chain.effective_entries();
  for (Index i = 0; i < n; ++i) {
    entries.push_back({i, n + i, gamma});
    entries.push_back({n + i, i, gamma});
  }
  return build_chain(std::move(keys), std::move(entries));
}

Trajectory trace_surgery(const Trajectory& path, const StateSet& a) {
  Trajectory out;
  double clock = path.records.empty() ? 0.0 : path.records.front().entry;
  for (const auto& r : path.records) {
    if (!contains(a, r.state)) continue;
    const double d = r.exit - r.entry;
    if (d <= 0.0) continue;
    if (!out.records.empty() && out.records.back().state == r.state) {
      out.records.back().exit += d;
    } else {
      out.records.push_back({r.state, clock, clock + d});
    }
    clock += d;
  }
  out.horizon = clock;
  return out;
}

}  // namespace metastab
