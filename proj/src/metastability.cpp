#include "metastab/metastability.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "metastab/potential.hpp"
#include "metastab/reductions.hpp"

namespace metastab {

// Partition ------------------------------------------------------------------

Partition::Partition(std::size_t num_states, std::vector<StateSet> wells,
                     std::optional<std::vector<StateSet>> bottoms)
    : bottoms_(std::move(bottoms)) {
  if (wells.size() < 2) fail(ErrorCode::InvalidArgument, "a partition needs at least two wells");
  labels_.assign(num_states, 0);
  for (std::size_t x = 0; x < wells.size(); ++x) {
    StateSet w = make_state_set(std::move(wells[x]));
    if (w.empty()) fail(ErrorCode::EmptySubset, "well " + std::to_string(x + 1) + " is empty");
    if (w.back() >= num_states)
      fail(ErrorCode::InvalidArgument, "well " + std::to_string(x + 1) + " has an unknown state");
    for (Index i : w) {
      if (labels_[i] != 0)
        fail(ErrorCode::Overlap, "state " + std::to_string(i) + " lies in wells " +
                                     std::to_string(labels_[i]) + " and " + std::to_string(x + 1));
      labels_[i] = static_cast<int>(x + 1);
    }
    wells_.push_back(std::move(w));
  }
  for (Index i = 0; i < num_states; ++i) (labels_[i] == 0 ? delta_ : union_).push_back(i);
  if (bottoms_) {
    if (bottoms_->size() != wells_.size())
      fail(ErrorCode::InvalidArgument, "one bottom set per well is required");
    for (std::size_t x = 0; x < wells_.size(); ++x) {
      auto& b = (*bottoms_)[x];
      b = make_state_set(std::move(b));
      if (b.empty()) fail(ErrorCode::EmptySubset, "bottom " + std::to_string(x + 1) + " is empty");
      for (Index i : b)
        if (i >= num_states || labels_[i] != static_cast<int>(x + 1))
          fail(ErrorCode::InvalidArgument,
               "bottom " + std::to_string(x + 1) + " is not contained in its well");
    }
  }
}

const StateSet& Partition::bottom(std::size_t x) const {
  if (!bottoms_) fail(ErrorCode::NoBottoms, "partition has no bottom sets");
  return bottoms_->at(x - 1);
}

int Partition::psi(Index state) const {
  const int l = phi(state);
  if (l == 0) fail(ErrorCode::PsiOnDelta, "state " + std::to_string(state) + " lies in Delta");
  return l;
}

nlohmann::json to_json(const Partition& p) {
  nlohmann::json j{{"num_states", p.num_states()}, {"wells", p.wells()}};
  if (p.has_bottoms()) {
    nlohmann::json b = nlohmann::json::array();
    for (std::size_t x = 1; x <= p.num_wells(); ++x) b.push_back(p.bottom(x));
    j["bottoms"] = std::move(b);
  }
  return j;
}

Partition partition_from_json(const nlohmann::json& doc) {
  try {
    const auto n = doc.at("num_states").get<std::size_t>();
    auto wells = doc.at("wells").get<std::vector<StateSet>>();
    std::optional<std::vector<StateSet>> bottoms;
    if (doc.contains("bottoms") && !doc["bottoms"].is_null())
      bottoms = doc["bottoms"].get<std::vector<StateSet>>();
    return Partition(n, std::move(wells), std::move(bottoms));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::SpecParseError, std::string("malformed partition document: ") + e.what());
  }
}

namespace {

Trajectory project(const Trajectory& path, const Partition& p, bool psi) {
  Trajectory out;
  out.horizon = path.horizon;
  for (const auto& r : path.records) {
    const int l = psi ? p.psi(r.state) : p.phi(r.state);
    const auto label = static_cast<Index>(l);
    if (!out.records.empty() && out.records.back().state == label) {
      out.records.back().exit = r.exit;
    } else {
      out.records.push_back({label, r.entry, r.exit});
    }
  }
  return out;
}

}  // namespace

Trajectory project_phi(const Trajectory& path, const Partition& p) { return project(path, p, false); }
Trajectory project_psi(const Trajectory& path, const Partition& p) { return project(path, p, true); }

// Reports --------------------------------------------------------------------

nlohmann::json to_json(const ConditionReport& r) {
  nlohmann::json sweep = nlohmann::json::array();
  for (const auto& [n, v] : r.sweep) sweep.push_back({{"N", n}, {"value", v}});
  return {{"id", r.id},         {"params", r.params}, {"values", r.values},
          {"sweep", sweep},     {"verdict", r.verdict}, {"notes", r.notes}};
}

const std::vector<std::string>& condition_ids() {
  static const std::vector<std::string> ids{"H2",  "C03",   "M1",  "M2a", "M2b",  "B09A",
                                            "B09", "L08", "CAPEST", "TMIX2", "TMIX3"};
  return ids;
}

CheckOptions check_options_from_json(const nlohmann::json& params) {
  CheckOptions o;
  if (params.is_null()) return o;
  if (!params.is_object()) fail(ErrorCode::InvalidArgument, "check parameters must be an object");
  try {
    o.t = params.value("t", o.t);
    o.delta = params.value("delta", o.delta);
    o.epsilon = params.value("epsilon", o.epsilon);
    o.tol = params.value("tol", o.tol);
    o.c0 = params.value("c0", o.c0);
    o.full_max = params.value("full_max", o.full_max);
    o.exhaustive_limit = params.value("exhaustive_limit", o.exhaustive_limit);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("bad check parameter: ") + e.what());
  }
  if (!(o.t > 0) || !(o.delta > 0) || !(o.epsilon > 0))
    fail(ErrorCode::InvalidArgument, "times t, delta and epsilon must be positive");
  return o;
}

namespace {

struct Builder {
  ConditionReport r;
  bool warned = false;

  explicit Builder(std::string id) { r.id = std::move(id); }
  void warn(const std::string& msg) {
    warned = true;
    r.notes.push_back("warning: " + msg);
  }
  ConditionReport finish(double value, double threshold) {
    r.value = value;
    r.values["value"] = value;
    if (!std::isfinite(value) || value > threshold) r.verdict = "fail";
    else r.verdict = warned ? "warn" : "pass";
    return std::move(r);
  }
};

// States over which the maxima are taken.
StateSet start_states(const Chain& chain, const Partition& p, std::size_t x,
                      const CheckOptions& o, Builder& b) {
  const StateSet& w = p.well(x);
  if (o.full_max || w.size() <= o.exhaustive_limit) return w;
  const auto mask = indicator_mask(w, chain.size());
  StateSet s;
  for (Index i : w)
    for (Index j : chain.row(i).targets)
      if (!mask[j]) {
        s.push_back(i);
        break;
      }
  if (p.has_bottoms())
    for (Index i : p.bottom(x)) s.push_back(i);
  if (s.empty()) s.push_back(w.front());
  b.r.notes.push_back("maximum over well boundary states and bottoms only");
  return make_state_set(std::move(s));
}

double max_over(const std::vector<double>& v, const StateSet& s, Index* arg = nullptr) {
  double m = -std::numeric_limits<double>::infinity();
  for (Index i : s)
    if (v[i] > m) {
      m = v[i];
      if (arg) *arg = i;
    }
  return m;
}

std::vector<double> indicator(const StateSet& s, std::size_t n) {
  std::vector<double> f(n, 0.0);
  for (Index i : s) f[i] = 1.0;
  return f;
}

// Per-well quantities shared by M1, CAPEST, TMIX2 and TMIX3.
struct WellTrace {
  Chain trace;
  Measure mu_x;  // conditioned, indexed inside the well
  StateSet bottom;  // positions inside the well
  double bottom_mass = 0.0;  // mu^x(B^x)
  double tmix = -1.0;

  double mixing() {
    if (tmix < 0.0) tmix = mixing_time(trace, mu_x).time;
    return tmix;
  }
};

WellTrace well_trace(const Chain& chain, const Measure& mu, const Partition& p, std::size_t x) {
  const auto& w = p.well(x);
  WellTrace t{trace_chain(chain, w, false), mu.restricted(w), {}, 0.0, -1.0};
  for (Index b : p.bottom(x))
    t.bottom.push_back(static_cast<Index>(std::lower_bound(w.begin(), w.end(), b) - w.begin()));
  t.bottom_mass = t.mu_x.mass(t.bottom);
  return t;
}

double tmix2_value(WellTrace& t, bool with_log) {
  const double mb = t.bottom_mass;
  if (mb >= 1.0) return 0.0;
  return t.mixing() / mb * (with_log ? 1.0 + std::log(1.0 / mb) : 1.0);
}

}  // namespace

ConditionReport check_H2(const Chain& chain, const Partition& p, const CheckOptions& o) {
  Builder b("H2");
  b.r.params = {{"t", o.t}, {"full_max", o.full_max}};
  if (p.delta().empty()) {
    b.r.notes.push_back("Delta is empty");
    return b.finish(0.0, o.tol);
  }
  const auto occ = integrate_backward(chain, indicator(p.delta(), chain.size()), o.t);
  double worst = 0.0;
  Index arg = p.wells_union().front();
  for (std::size_t x = 1; x <= p.num_wells(); ++x) {
    Index a = 0;
    const double m = max_over(occ, start_states(chain, p, x, o, b), &a);
    if (m > worst) worst = m, arg = a;
  }
  b.r.values["argmax_state"] = chain.key(arg);
  return b.finish(worst, o.tol);
}

ConditionReport check_C03(const Chain& chain, const Partition& p, const CheckOptions& o) {
  Builder b("C03");
  constexpr int kGrid = 32;
  b.r.params = {{"delta", o.delta}, {"grid_points", kGrid}, {"full_max", o.full_max}};
  b.r.values["grid"] = {2 * o.delta, 3 * o.delta};
  if (p.delta().empty()) {
    b.r.notes.push_back("Delta is empty");
    return b.finish(0.0, o.tol);
  }
  StateSet starts;
  for (std::size_t x = 1; x <= p.num_wells(); ++x) {
    const auto s = start_states(chain, p, x, o, b);
    starts.insert(starts.end(), s.begin(), s.end());
  }
  starts = make_state_set(std::move(starts));
  auto v = evolve_backward(chain, indicator(p.delta(), chain.size()), 2 * o.delta);
  double worst = max_over(v, starts);
  double worst_s = 2 * o.delta;
  const double h = o.delta / (kGrid - 1);
  for (int k = 1; k < kGrid; ++k) {
    v = evolve_backward(chain, v, h);
    const double m = max_over(v, starts);
    if (m > worst) worst = m, worst_s = 2 * o.delta + k * h;
  }
  b.r.values["argmax_time"] = worst_s;
  const auto mu = stationary(chain);
  double l08 = 0.0;
  for (Index i : p.wells_union()) l08 = std::max(l08, mu.mass(p.delta()) / mu[i]);
  b.r.values["measure_ratio_bound"] = l08;
  return b.finish(worst, o.tol);
}

ConditionReport check_L08(const Chain& chain, const Partition& p, const CheckOptions& o) {
  Builder b("L08");
  const auto mu = stationary(chain);
  const double md = mu.mass(p.delta());
  double worst = 0.0;
  nlohmann::json per_well = nlohmann::json::array();
  for (std::size_t x = 1; x <= p.num_wells(); ++x) {
    double smallest = 1.0;
    for (Index i : p.well(x)) smallest = std::min(smallest, mu[i]);
    per_well.push_back(md / smallest);
    worst = std::max(worst, md / smallest);
  }
  b.r.values["per_well"] = per_well;
  return b.finish(worst, o.tol);
}

ConditionReport check_M1(const Chain& chain, const Partition& p, const CheckOptions& o) {
  Builder b("M1");
  b.r.params = {{"delta", o.delta}};
  if (!p.has_bottoms()) fail(ErrorCode::NoBottoms, "condition M1 needs bottom sets");
  const auto mu = stationary(chain);
  double worst = 0.0, iterated = 0.0, markov = 0.0, capest = 0.0, tmix2 = 0.0;
  const bool reversible = is_reversible(chain, mu.weights());
  nlohmann::json per_well = nlohmann::json::array();
  for (std::size_t x = 1; x <= p.num_wells(); ++x) {
    auto t = well_trace(chain, mu, p, x);
    const auto& w = p.well(x);
    double tail = 0.0, mean = 0.0;
    if (t.bottom.size() < w.size()) {
      const auto hit = hitting_probability_by(t.trace, t.bottom, o.delta);
      for (double h : hit) tail = std::max(tail, 1.0 - h);
      for (double m : mean_hitting_times(t.trace, t.bottom)) mean = std::max(mean, m);
    }
    const double mb = t.bottom_mass;
    const double theta = (1.0 + std::log(1.0 / mb)) * t.mixing();
    double it = 0.0;
    if (t.bottom.size() < w.size())
      it = theta > 0.0 ? std::pow(1.0 - mb / 2.0, std::floor(o.delta / theta)) : 0.0;
    StateSet rest;
    for (Index i : w)
      if (!contains(p.bottom(x), i)) rest.push_back(i);
    double cx = 0.0;
    if (!rest.empty()) {
      const auto caps = point_capacities(chain, mu, rest, p.bottom(x));
      cx = mu.mass(rest) / *std::min_element(caps.begin(), caps.end());
    }
    const double tx = tmix2_value(t, !reversible);
    per_well.push_back({{"tail", tail}, {"iterated_bound", it}, {"mean_hitting_time", mean},
                        {"capacity_ratio", cx}, {"trace_mixing_ratio", tx},
                        {"trace_mixing_time", t.mixing()}});
    worst = std::max(worst, tail);
    iterated = std::max(iterated, it);
    markov = std::max(markov, mean / o.delta);
    capest = std::max(capest, cx);
    tmix2 = std::max(tmix2, tx);
  }
  b.r.values["per_well"] = per_well;
  b.r.values["iterated_bound"] = iterated;
  b.r.values["markov_bound"] = markov;
  b.r.values["capacity_ratio"] = capest;
  b.r.values["trace_mixing_ratio"] = tmix2;
  if (worst > iterated * (1 + 1e-9) + 1e-12)
    b.warn("exact tail exceeds the iterated mixing bound");
  return b.finish(worst, o.tol);
}

ConditionReport check_CAPEST(const Chain& chain, const Partition& p, const CheckOptions& o) {
  Builder b("CAPEST");
  if (!p.has_bottoms()) fail(ErrorCode::NoBottoms, "capacity criterion needs bottom sets");
  const auto mu = stationary(chain);
  double worst = 0.0;
  nlohmann::json per_well = nlohmann::json::array();
  for (std::size_t x = 1; x <= p.num_wells(); ++x) {
    StateSet rest;
    for (Index i : p.well(x))
      if (!contains(p.bottom(x), i)) rest.push_back(i);
    double cx = 0.0;
    if (!rest.empty()) {
      const auto caps = point_capacities(chain, mu, rest, p.bottom(x));
      cx = mu.mass(rest) / *std::min_element(caps.begin(), caps.end());
    }
    per_well.push_back(cx);
    worst = std::max(worst, cx);
  }
  b.r.values["per_well"] = per_well;
  return b.finish(worst, o.tol);
}

ConditionReport check_TMIX2(const Chain& chain, const Partition& p, const CheckOptions& o) {
  Builder b("TMIX2");
  if (!p.has_bottoms()) fail(ErrorCode::NoBottoms, "trace mixing criterion needs bottom sets");
  const auto mu = stationary(chain);
  const bool reversible = is_reversible(chain, mu.weights());
  double worst = 0.0, no_log = 0.0;
  nlohmann::json per_well = nlohmann::json::array();
  for (std::size_t x = 1; x <= p.num_wells(); ++x) {
    auto t = well_trace(chain, mu, p, x);
    const double v = tmix2_value(t, true);
    per_well.push_back({{"trace_mixing_time", t.mixing()}, {"bottom_mass", t.bottom_mass},
                        {"value", v}});
    worst = std::max(worst, v);
    no_log = std::max(no_log, tmix2_value(t, false));
  }
  b.r.values["per_well"] = per_well;
  b.r.values["without_log"] = no_log;
  b.r.values["reversible"] = reversible;
  return b.finish(worst, o.tol);
}

std::vector<ConditionReport> check_M2(const Chain& chain, const Partition& p,
                                      const CheckOptions& o) {
  if (!p.has_bottoms()) fail(ErrorCode::NoBottoms, "condition M2 needs bottom sets");
  Builder a("M2a"), b("M2b");
  a.r.params = b.r.params = {{"epsilon", o.epsilon}};
  const auto mu = stationary(chain);
  const bool reversible = is_reversible(chain, mu.weights());

  double escape = 0.0;
  if (!p.delta().empty()) {
    const auto hit = hitting_probability_by(chain, p.delta(), 2 * o.epsilon);
    for (std::size_t x = 1; x <= p.num_wells(); ++x) escape = std::max(escape, max_over(hit, p.bottom(x)));
  }

  double tv = 0.0, shortcut = 0.0;
  nlohmann::json gaps = nlohmann::json::array();
  for (std::size_t x = 1; x <= p.num_wells(); ++x) {
    const auto& w = p.well(x);
    const Chain r = reflected_chain(chain, w);
    const auto mu_x = mu.restricted(w);
    if (!reversible) {
      const double defect = stationarity_residual(r, mu_x.weights()) / std::max(r.max_holding(), 1e-300);
      if (defect > 1e-9)
        b.warn("conditioned measure is not stationary for the reflected chain in well " +
               std::to_string(x));
    }
    double gap = std::numeric_limits<double>::infinity();
    if (reversible && w.size() > 1) gap = spectral_gap(r, mu_x).gap;
    gaps.push_back(std::isfinite(gap) ? nlohmann::json(gap) : nlohmann::json(nullptr));
    for (Index eta : p.bottom(x)) {
      const auto k = static_cast<Index>(std::lower_bound(w.begin(), w.end(), eta) - w.begin());
      const auto law = transient_distribution(r, Measure::dirac(w.size(), k), o.epsilon);
      tv = std::max(tv, tv_distance(law, mu_x));
      if (reversible)
        shortcut = std::max(shortcut, w.size() > 1 ? std::exp(-gap * o.epsilon) / std::sqrt(mu_x[k]) : 0.0);
    }
  }
  b.r.values["reflected_gaps"] = gaps;
  if (reversible) b.r.values["spectral_bound"] = shortcut;
  else b.r.notes.push_back("chain is not reversible; spectral bound not reported");
  return {a.finish(escape, o.tol), b.finish(tv, o.tol)};
}

std::vector<ConditionReport> check_measure_ratios(const Chain& chain, const Partition& p,
                                                  const CheckOptions& o) {
  const auto mu = stationary(chain);
  Builder a("B09A"), b("B09");
  const double md = mu.mass(p.delta());
  double ratio = 0.0, lo = 1.0, hi = 0.0;
  nlohmann::json masses = nlohmann::json::array();
  for (std::size_t x = 1; x <= p.num_wells(); ++x) {
    const double m = mu.mass(p.well(x));
    masses.push_back(m);
    ratio = std::max(ratio, md / m);
    lo = std::min(lo, m);
    hi = std::max(hi, m);
  }
  a.r.values["delta_mass"] = md;
  a.r.values["well_masses"] = masses;
  b.r.values["well_masses"] = masses;
  b.r.params = {{"c0", o.c0}};
  std::vector<ConditionReport> out{a.finish(ratio, o.tol), b.finish(hi / lo, o.c0)};
  if (p.has_bottoms()) {
    Builder c("TMIX3");
    c.r.params = {{"epsilon", o.epsilon}};
    double worst = 0.0;
    for (std::size_t x = 1; x <= p.num_wells(); ++x) {
      auto t = well_trace(chain, mu, p, x);
      worst = std::max(worst, tmix2_value(t, true) / o.epsilon);
    }
    out.push_back(c.finish(worst, o.tol));
  }
  return out;
}

ConditionReport run_check(const std::string& id, const Chain& chain, const Partition& p,
                          const CheckOptions& o) {
  if (p.num_states() != chain.size())
    fail(ErrorCode::SupportMismatch, "partition does not match the chain");
  if (id == "H2") return check_H2(chain, p, o);
  if (id == "C03") return check_C03(chain, p, o);
  if (id == "L08") return check_L08(chain, p, o);
  if (id == "M1") return check_M1(chain, p, o);
  if (id == "CAPEST") return check_CAPEST(chain, p, o);
  if (id == "TMIX2") return check_TMIX2(chain, p, o);
  if (id == "M2a" || id == "M2b") {
    auto r = check_M2(chain, p, o);
    return id == "M2a" ? r[0] : r[1];
  }
  if (id == "B09A" || id == "B09") {
    auto r = check_measure_ratios(chain, p, o);
    return id == "B09A" ? r[0] : r[1];
  }
  if (id == "TMIX3") {
    if (!p.has_bottoms()) fail(ErrorCode::NoBottoms, "TMIX3 needs bottom sets");
    return check_measure_ratios(chain, p, o)[2];
  }
  fail(ErrorCode::UnknownCondition, "unknown condition id '" + id + "'");
}

void apply_sweep_verdict(ConditionReport& r, const CheckOptions& o) {
  if (r.sweep.empty()) return;
  r.value = r.sweep.back().second;
  if (r.id == "B09") {
    const bool ok = std::all_of(r.sweep.begin(), r.sweep.end(),
                                [&](const auto& s) { return s.second <= o.c0; });
    r.verdict = ok ? "pass" : "fail";
    return;
  }
  bool decreasing = r.sweep.size() >= 3;
  for (std::size_t k = 1; k < r.sweep.size(); ++k) {
    const double a = r.sweep[k - 1].second, b = r.sweep[k].second;
    if (!(b < a) || std::abs(a - b) <= 1e-12 * std::max(std::abs(a), std::abs(b)))
      decreasing = false;
  }
  const bool all_zero = std::all_of(r.sweep.begin(), r.sweep.end(),
                                    [](const auto& s) { return s.second == 0.0; });
  if (decreasing) r.verdict = "trend-pass";
  else if (all_zero) r.verdict = "pass";
  else r.verdict = "fail";
  if (r.sweep.size() < 3) r.notes.push_back("trend verdicts need at least three values of N");
}

// Limit chain ------------------------------------------------------------------

nlohmann::json to_json(const LimitChain& l) {
  return {{"chain", to_json(l.chain)},
          {"capacity_rates", l.capacity_rates},
          {"max_relative_gap", l.max_relative_gap}};
}

LimitChain estimate_limit_chain(const Chain& chain, const Partition& p) {
  const std::size_t n = p.num_wells();
  const auto mu = stationary(chain);
  const auto& w = p.wells_union();
  const Chain trace = trace_chain(chain, w, false);
  std::vector<int> label(w.size());
  for (Index k = 0; k < w.size(); ++k) label[k] = p.phi(w[k]);

  std::vector<std::vector<double>> flux(n, std::vector<double>(n, 0.0));
  for (Index k = 0; k < w.size(); ++k) {
    const auto row = trace.row(k);
    const auto x = static_cast<std::size_t>(label[k] - 1);
    for (std::size_t m = 0; m < row.targets.size(); ++m) {
      const auto y = static_cast<std::size_t>(label[row.targets[m]] - 1);
      if (y != x) flux[x][y] += mu[w[k]] * row.rates[m];
    }
  }
  std::vector<RateEntry> entries;
  for (std::size_t x = 0; x < n; ++x) {
    const double mx = mu.mass(p.well(x + 1));
    for (std::size_t y = 0; y < n; ++y)
      if (x != y && flux[x][y] > 0.0) entries.push_back({x, y, flux[x][y] / mx});
  }
  std::vector<std::string> names;
  for (std::size_t x = 1; x <= n; ++x) names.push_back(std::to_string(x));
  LimitChain l{build_chain(names, entries), {}, 0.0};

  // Capacity route: (Cap(x, rest) + Cap(y, rest) - Cap(x u y, rest)) / (2 mu(E^x)).
  auto others = [&](std::vector<std::size_t> skip) {
    StateSet s;
    for (std::size_t z = 1; z <= n; ++z)
      if (std::find(skip.begin(), skip.end(), z) == skip.end())
        s.insert(s.end(), p.well(z).begin(), p.well(z).end());
    return make_state_set(std::move(s));
  };
  std::vector<double> single(n + 1);
  for (std::size_t x = 1; x <= n; ++x) single[x] = capacity(chain, mu, p.well(x), others({x})).value;
  l.capacity_rates.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t x = 1; x <= n; ++x)
    for (std::size_t y = 1; y <= n; ++y) {
      if (x == y) continue;
      const auto rest = others({x, y});
      const double pair =
          rest.empty() ? 0.0 : capacity(chain, mu, set_union(p.well(x), p.well(y)), rest).value;
      const double cr = (single[x] + single[y] - pair) / (2.0 * mu.mass(p.well(x)));
      l.capacity_rates[x - 1][y - 1] = cr;
      const double mr = l.chain.rate(x - 1, y - 1);
      if (mr > 0.0) l.max_relative_gap = std::max(l.max_relative_gap, std::abs(mr - cr) / mr);
    }
  return l;
}

// Convergence --------------------------------------------------------------------

namespace {

void check_times(const std::vector<double>& times, std::size_t max_k) {
  if (times.empty() || times.size() > max_k)
    fail(ErrorCode::InvalidArgument, "between 1 and " + std::to_string(max_k) + " times are supported");
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (!(times[k] >= 0.0)) fail(ErrorCode::InvalidArgument, "times must be nonnegative");
    if (k > 0 && !(times[k] > times[k - 1]))
      fail(ErrorCode::InvalidArgument, "times must be strictly increasing");
  }
}

int init_label(const Partition& p, Index init) {
  if (init >= p.num_states()) fail(ErrorCode::InvalidArgument, "unknown initial state");
  const int x = p.phi(init);
  if (x == 0) fail(ErrorCode::InvalidArgument, "initial state must lie in a well");
  return x;
}

// Joint law of labels at the given times for the limit chain.
std::vector<double> limit_joint(const Chain& limit, int x, const std::vector<double>& times,
                                std::size_t labels) {
  std::vector<double> law;
  std::vector<double> start(limit.size(), 0.0);
  start[static_cast<Index>(x - 1)] = 1.0;
  std::function<void(std::vector<double>, std::size_t, double)> rec =
      [&](std::vector<double> v, std::size_t k, double prev) {
        v = evolve_forward(limit, v, times[k] - prev);
        for (std::size_t y = 0; y < labels; ++y) {
          std::vector<double> part(limit.size(), 0.0);
          if (y > 0) part[y - 1] = v[y - 1];
          if (k + 1 == times.size()) {
            law.push_back(y > 0 ? std::max(v[y - 1], 0.0) : 0.0);
          } else {
            rec(std::move(part), k + 1, times[k]);
          }
        }
      };
  rec(start, 0, 0.0);
  return law;
}

}  // namespace

nlohmann::json to_json(const FddReport& r) {
  return {{"times", r.times},           {"init_label", r.init_label},
          {"chain_law", r.chain_law},   {"limit_law", r.limit_law},
          {"max_abs_difference", r.max_abs_difference}, {"delta_mass", r.delta_mass}};
}

FddReport fdd_compare(const Chain& chain, const Partition& p, const Chain& limit,
                      const std::vector<double>& times, Index init_state) {
  check_times(times, 3);
  if (limit.size() != p.num_wells())
    fail(ErrorCode::SupportMismatch, "limit chain must have one state per well");
  if (p.num_states() != chain.size())
    fail(ErrorCode::SupportMismatch, "partition does not match the chain");
  FddReport r;
  r.times = times;
  r.init_label = init_label(p, init_state);
  const std::size_t labels = p.num_wells() + 1;
  const std::size_t n = chain.size();

  std::vector<double> start(n, 0.0);
  start[init_state] = 1.0;
  r.delta_mass.assign(times.size(), 0.0);
  std::function<void(std::vector<double>, std::size_t, double)> rec =
      [&](std::vector<double> v, std::size_t k, double prev) {
        v = evolve_forward(chain, v, times[k] - prev);
        for (std::size_t y = 0; y < labels; ++y) {
          std::vector<double> part(n, 0.0);
          double mass = 0.0;
          const StateSet& set = y == 0 ? p.delta() : p.well(y);
          for (Index i : set) {
            part[i] = std::max(v[i], 0.0);
            mass += part[i];
          }
          if (y == 0) r.delta_mass[k] += mass;
          if (k + 1 == times.size()) r.chain_law.push_back(mass);
          else rec(std::move(part), k + 1, times[k]);
        }
      };
  rec(start, 0, 0.0);
  r.limit_law = limit_joint(limit, r.init_label, times, labels);
  for (std::size_t k = 0; k < r.chain_law.size(); ++k)
    r.max_abs_difference = std::max(r.max_abs_difference, std::abs(r.chain_law[k] - r.limit_law[k]));
  return r;
}

StateConvergence state_convergence(const Chain& chain, const Partition& p, const Chain& limit,
                                   const std::vector<double>& times, Index init_state) {
  check_times(times, 2);
  if (limit.size() != p.num_wells())
    fail(ErrorCode::SupportMismatch, "limit chain must have one state per well");
  const std::size_t n = chain.size();
  if (times.size() == 2 && n * n > kMaxProductStates)
    fail(ErrorCode::ProductTooLarge,
         "joint law on " + std::to_string(n) + "^2 states is too large; use Monte Carlo estimates");
  const int x = init_label(p, init_state);
  const auto mu = stationary(chain);
  std::vector<std::vector<double>> cond(p.num_wells() + 1);
  for (std::size_t y = 1; y <= p.num_wells(); ++y) {
    cond[y].assign(n, 0.0);
    const double m = mu.mass(p.well(y));
    for (Index i : p.well(y)) cond[y][i] = mu[i] / m;
  }
  const std::size_t labels = p.num_wells() + 1;
  const auto lim = limit_joint(limit, x, times, labels);

  std::vector<double> start(n, 0.0);
  start[init_state] = 1.0;
  const auto p1 = evolve_forward(chain, start, times[0]);
  StateConvergence out{times, 0.0};
  if (times.size() == 1) {
    double s = 0.0;
    for (Index a = 0; a < n; ++a) {
      const int ya = p.phi(a);
      const double m = ya > 0 ? lim[static_cast<std::size_t>(ya)] * cond[static_cast<std::size_t>(ya)][a] : 0.0;
      s += std::abs(p1[a] - m);
    }
    out.tv = std::min(1.0, 0.5 * s);
    return out;
  }
  const double gap = times[1] - times[0];
  double s = 0.0;
  std::vector<double> row(n, 0.0);
  for (Index a = 0; a < n; ++a) {
    const int ya = p.phi(a);
    std::vector<double> pa;
    if (p1[a] > 0.0) {
      std::fill(row.begin(), row.end(), 0.0);
      row[a] = 1.0;
      pa = evolve_forward(chain, row, gap);
    }
    for (Index b = 0; b < n; ++b) {
      const double joint = p1[a] > 0.0 ? std::max(p1[a], 0.0) * pa[b] : 0.0;
      const int yb = p.phi(b);
      double m = 0.0;
      if (ya > 0 && yb > 0)
        m = lim[static_cast<std::size_t>(ya) * labels + static_cast<std::size_t>(yb)] *
            cond[static_cast<std::size_t>(ya)][a] * cond[static_cast<std::size_t>(yb)][b];
      s += std::abs(joint - m);
    }
  }
  out.tv = std::min(1.0, 0.5 * s);
  return out;
}

}  // namespace metastab
