#include "metastab/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "metastab/reductions.hpp"

namespace metastab {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

std::uint64_t mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Runs body(k) for k in [0, count) over the given number of workers.
template <class Body>
void parallel_for(std::size_t count, std::size_t threads, Body body) {
  if (threads == 0) threads = worker_count();
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t k = 0; k < count; ++k) body(k);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t k = w; k < count; k += threads) body(k);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void check_config(const Chain& chain, Index init, const SimConfig& c) {
  if (init >= chain.size()) fail(ErrorCode::InvalidArgument, "unknown initial state");
  if (c.paths < 1) fail(ErrorCode::InvalidArgument, "at least one path is required");
  if (!(c.horizon > 0.0) || !std::isfinite(c.horizon))
    fail(ErrorCode::InvalidArgument, "horizon must be positive");
}

Index jump(const Chain& chain, Index at, Rng& rng) {
  const auto row = chain.row(at);
  double u = rng.uniform() * chain.holding(at);
  for (std::size_t k = 0; k < row.targets.size(); ++k) {
    u -= row.rates[k];
    if (u <= 0.0) return row.targets[k];
  }
  return row.targets.back();
}

std::size_t label_tuple(const std::vector<Index>& states, const Partition& p) {
  const std::size_t labels = p.num_wells() + 1;
  std::size_t t = 0;
  for (Index s : states) t = t * labels + static_cast<std::size_t>(p.phi(s));
  return t;
}

void check_times(const std::vector<double>& times) {
  if (times.empty()) fail(ErrorCode::InvalidArgument, "at least one time is required");
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (!(times[k] >= 0.0)) fail(ErrorCode::InvalidArgument, "times must be nonnegative");
    if (k > 0 && !(times[k] > times[k - 1])) fail(ErrorCode::InvalidArgument, "times must increase");
  }
}

FddEstimate tally(const std::vector<std::size_t>& tuples, const Partition& p,
                  const std::vector<double>& times) {
  std::size_t cells = 1;
  for (std::size_t k = 0; k < times.size(); ++k) cells *= p.num_wells() + 1;
  std::vector<std::size_t> counts(cells, 0);
  for (std::size_t t : tuples) ++counts[t];
  FddEstimate f;
  f.times = times;
  f.paths = tuples.size();
  const double n = static_cast<double>(tuples.size());
  for (std::size_t c : counts) {
    const double v = static_cast<double>(c) / n;
    f.law.push_back({v, std::sqrt(v * (1.0 - v) / n), tuples.size()});
  }
  return f;
}

Estimate mean_estimate(const std::vector<double>& v) {
  Estimate e;
  e.n = v.size();
  if (v.empty()) return e;
  double s = 0.0;
  for (double x : v) s += x;
  e.value = s / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - e.value) * (x - e.value);
    e.std_error = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  }
  return e;
}

}  // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t stream) : state_(mix(seed ^ mix(stream + kGolden))) {}

std::uint64_t Rng::next() {
  state_ += kGolden;
  return mix(state_);
}

double Rng::uniform() { return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53; }

std::size_t worker_count() {
  if (const char* env = std::getenv("METASTAB_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

nlohmann::json to_json(const Estimate& e) {
  return {{"value", e.value}, {"std_error", e.std_error}, {"n", e.n}};
}

Trajectory gillespie_path(const Chain& chain, Index init, double horizon, Rng& rng) {
  Trajectory path;
  path.horizon = horizon;
  Index at = init;
  double t = 0.0;
  while (true) {
    const double rate = chain.holding(at);
    const double stay = rate > 0.0 ? -std::log(rng.uniform()) / rate : horizon;
    if (t + stay >= horizon) {
      path.records.push_back({at, t, horizon});
      break;
    }
    path.records.push_back({at, t, t + stay});
    t += stay;
    at = jump(chain, at, rng);
  }
  return path;
}

std::vector<Trajectory> gillespie(const Chain& chain, Index init, const SimConfig& config) {
  check_config(chain, init, config);
  std::vector<Trajectory> out(config.paths);
  parallel_for(config.paths, config.threads, [&](std::size_t k) {
    Rng rng(config.seed, k);
    out[k] = gillespie_path(chain, init, config.horizon, rng);
  });
  return out;
}

nlohmann::json to_json(const FddEstimate& f) {
  nlohmann::json law = nlohmann::json::array();
  for (const auto& e : f.law) law.push_back(to_json(e));
  return {{"times", f.times}, {"paths", f.paths}, {"law", law}};
}

FddEstimate empirical_fdd(const std::vector<Trajectory>& paths, const Partition& p,
                          const std::vector<double>& times) {
  check_times(times);
  if (paths.empty()) fail(ErrorCode::InvalidArgument, "no paths");
  std::vector<std::size_t> tuples;
  tuples.reserve(paths.size());
  std::vector<Index> states(times.size());
  for (const auto& path : paths) {
    if (times.back() > path.horizon)
      fail(ErrorCode::TimesBeyondHorizon, "time " + std::to_string(times.back()) +
                                              " lies beyond the path horizon " +
                                              std::to_string(path.horizon));
    for (std::size_t k = 0; k < times.size(); ++k) states[k] = path.state_at(times[k]);
    tuples.push_back(label_tuple(states, p));
  }
  return tally(tuples, p, times);
}

FddEstimate simulate_fdd(const Chain& chain, const Partition& p, Index init,
                         const std::vector<double>& times, const SimConfig& config) {
  check_times(times);
  if (p.num_states() != chain.size()) fail(ErrorCode::SupportMismatch, "partition does not match the chain");
  SimConfig c = config;
  c.horizon = std::max(times.back(), 1e-300);
  check_config(chain, init, c);
  std::vector<std::size_t> tuples(c.paths);
  parallel_for(c.paths, c.threads, [&](std::size_t k) {
    Rng rng(c.seed, k);
    std::vector<Index> states(times.size());
    Index at = init;
    double t = 0.0;
    std::size_t next = 0;
    while (next < times.size()) {
      const double rate = chain.holding(at);
      const double leave = rate > 0.0 ? t - std::log(rng.uniform()) / rate : times.back() + 1.0;
      while (next < times.size() && times[next] < leave) states[next++] = at;
      if (next == times.size()) break;
      t = leave;
      at = jump(chain, at, rng);
    }
    tuples[k] = label_tuple(states, p);
  });
  return tally(tuples, p, times);
}

nlohmann::json to_json(const ExitLaw& e) {
  return {{"well", e.well},
          {"exits", e.trace_times.size()},
          {"censored", e.censored},
          {"mean_trace_time", to_json(e.mean_trace_time)},
          {"mean_wall_time", to_json(e.mean_wall_time)},
          {"exponential_distance", e.exponential_distance},
          {"ks_critical", e.ks_critical}};
}

ExitLaw empirical_exit_law(const std::vector<Trajectory>& paths, const Partition& p,
                           std::size_t well) {
  if (well < 1 || well > p.num_wells()) fail(ErrorCode::InvalidArgument, "unknown well");
  ExitLaw e;
  e.well = well;
  for (const auto& path : paths) {
    if (path.records.empty() || p.phi(path.records.front().state) != static_cast<int>(well))
      fail(ErrorCode::InvalidArgument, "paths must start in well " + std::to_string(well));
    double trace = 0.0;
    bool exited = false;
    for (const auto& r : path.records) {
      const int l = p.phi(r.state);
      if (l == 0) continue;
      if (l != static_cast<int>(well)) {
        e.trace_times.push_back(trace);
        e.wall_times.push_back(r.entry);
        exited = true;
        break;
      }
      trace += r.exit - r.entry;
    }
    if (!exited) ++e.censored;
  }
  if (e.trace_times.empty())
    fail(ErrorCode::NoExitsObserved, "no path left well " + std::to_string(well) +
                                         " before its horizon; increase the horizon");
  e.mean_trace_time = mean_estimate(e.trace_times);
  e.mean_wall_time = mean_estimate(e.wall_times);
  std::vector<double> u = e.trace_times;
  for (double& x : u) x /= e.mean_trace_time.value;
  std::sort(u.begin(), u.end());
  const double n = static_cast<double>(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double f = 1.0 - std::exp(-u[k]);
    e.exponential_distance = std::max({e.exponential_distance, std::abs((k + 1) / n - f), std::abs(k / n - f)});
  }
  e.ks_critical = 1.36 / std::sqrt(n);
  return e;
}

Estimate occupation_fraction(const Trajectory& path, const StateSet& set) {
  const double h = path.horizon;
  if (!(h > 0.0)) fail(ErrorCode::InvalidArgument, "path has no duration");
  constexpr int kBatches = 20;
  std::vector<double> batch(kBatches, 0.0);
  const double width = h / kBatches;
  for (const auto& r : path.records) {
    if (!contains(set, r.state)) continue;
    const int first = std::min(kBatches - 1, static_cast<int>(r.entry / width));
    const int last = std::min(kBatches - 1, static_cast<int>(r.exit / width));
    for (int b = first; b <= last; ++b) {
      const double lo = std::max(r.entry, b * width);
      const double hi = b == kBatches - 1 ? r.exit : std::min(r.exit, (b + 1) * width);
      if (hi > lo) batch[static_cast<std::size_t>(b)] += hi - lo;
    }
  }
  for (double& v : batch) v /= width;
  return mean_estimate(batch);
}

}  // namespace metastab
