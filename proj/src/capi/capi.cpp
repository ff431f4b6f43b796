#include "metastab/metastab.h"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <limits>
#include <new>
#include <sstream>
#include <string>
#include <thread>

#include "metastab/metastability.hpp"
#include "metastab/models.hpp"
#include "metastab/potential.hpp"
#include "metastab/simulate.hpp"

#ifndef METASTAB_VERSION
#define METASTAB_VERSION "0.0.0"
#endif

struct ms_chain {
  metastab::Chain chain;
};

struct ms_partition {
  metastab::Partition partition;
};

namespace {

using nlohmann::json;
using namespace metastab;

thread_local std::string g_last_error;

template <class F>
ms_status guard(F&& body) {
  g_last_error.clear();
  try {
    body();
    return MS_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return static_cast<ms_status>(e.code());
  } catch (const json::exception& e) {
    g_last_error = std::string("malformed JSON: ") + e.what();
    return MS_INVALID_ARGUMENT;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return MS_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MS_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return MS_INTERNAL;
  }
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put(char** out, const json& j) {
  if (out) *out = dup(j.dump());
}

void need(const void* p, const char* what) {
  if (!p) fail(ErrorCode::InvalidArgument, std::string(what) + " is NULL");
}

json parse(const char* text, const char* what) {
  need(text, what);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::SpecParseError, std::string("invalid JSON in ") + what + ": " + e.what());
  }
}

Index resolve_state(const Chain& c, const json& v) {
  if (v.is_number_integer()) {
    const auto i = v.get<long long>();
    if (i < 0 || static_cast<std::size_t>(i) >= c.size())
      fail(ErrorCode::InvalidArgument, "state index " + std::to_string(i) + " out of range");
    return static_cast<Index>(i);
  }
  if (v.is_string()) {
    if (auto i = c.find(v.get<std::string>())) return *i;
    fail(ErrorCode::InvalidArgument, "unknown state '" + v.get<std::string>() + "'");
  }
  fail(ErrorCode::InvalidArgument, "states are named by key or index");
}

StateSet parse_set(const Chain& c, const char* text, const char* what) {
  const json j = parse(text, what);
  if (!j.is_array()) fail(ErrorCode::InvalidArgument, std::string(what) + " must be a JSON array");
  std::vector<Index> idx;
  for (const auto& v : j) idx.push_back(resolve_state(c, v));
  return make_state_set(std::move(idx));
}

std::vector<double> time_list(const double* times, std::size_t n) {
  if (n > 0) need(times, "times");
  return std::vector<double>(times, times + n);
}

Index default_init(const Partition& p) {
  if (p.num_wells() == 0) fail(ErrorCode::InvalidArgument, "partition has no wells");
  return p.has_bottoms() ? p.bottom(1).front() : p.well(1).front();
}

json mass_summary(const ModelInstance& m) {
  const auto mu = stationary(m.chain);
  const auto& p = m.partition;
  json wells = json::array(), bottoms = json::array();
  for (std::size_t x = 1; x <= p.num_wells(); ++x) {
    wells.push_back(mu.mass(p.well(x)));
    if (p.has_bottoms()) bottoms.push_back(mu.mass(p.bottom(x)));
  }
  json j{{"wells", wells}, {"delta", mu.mass(p.delta())}};
  if (p.has_bottoms()) j["bottoms"] = bottoms;
  return j;
}

std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

extern "C" {

const char* ms_version(void) { return METASTAB_VERSION; }

const char* ms_status_string(ms_status status) {
  if (status == MS_OK) return "Ok";
  return to_string(static_cast<ErrorCode>(status));
}

const char* ms_last_error(void) { return g_last_error.c_str(); }

void ms_string_free(char* s) { std::free(s); }

ms_status ms_chain_from_json(const char* text, ms_chain** out) {
  return guard([&] {
    need(out, "out");
    *out = nullptr;
    auto c = chain_from_json(parse(text, "chain"));
    *out = new ms_chain{std::move(c)};
  });
}

ms_status ms_chain_to_json(const ms_chain* chain, char** out) {
  return guard([&] {
    need(chain, "chain");
    need(out, "out");
    put(out, to_json(chain->chain));
  });
}

size_t ms_chain_num_states(const ms_chain* chain) { return chain ? chain->chain.size() : 0; }

void ms_chain_free(ms_chain* chain) { delete chain; }

ms_status ms_partition_from_json(const char* text, ms_partition** out) {
  return guard([&] {
    need(out, "out");
    *out = nullptr;
    auto p = partition_from_json(parse(text, "partition"));
    *out = new ms_partition{std::move(p)};
  });
}

ms_status ms_partition_to_json(const ms_partition* partition, char** out) {
  return guard([&] {
    need(partition, "partition");
    need(out, "out");
    put(out, to_json(partition->partition));
  });
}

void ms_partition_free(ms_partition* partition) { delete partition; }

ms_status ms_model_build(const char* spec_text, int n_override, ms_chain** chain,
                         ms_partition** partition, char** summary_json) {
  return guard([&] {
    need(spec_text, "spec");
    const auto spec = model_spec_from_json(parse_spec_text(spec_text));
    auto m = build_model(spec, n_override > 0 ? std::optional<int>(n_override) : std::nullopt);
    if (summary_json) {
      json s = to_json(m);
      s["masses"] = mass_summary(m);
      s["spec"] = to_json(spec);
      put(summary_json, s);
    }
    if (partition) *partition = new ms_partition{m.partition};
    if (chain) *chain = new ms_chain{std::move(m.chain)};
  });
}

ms_status ms_stationary(const ms_chain* chain, char** out_json) {
  return guard([&] {
    need(chain, "chain");
    const auto& c = chain->chain;
    const auto mu = stationary(c);
    std::vector<double> w(mu.weights().begin(), mu.weights().end());
    put(out_json, {{"states", c.keys()},
                   {"mu", w},
                   {"reversible", is_reversible(c, mu.weights())},
                   {"residual", stationarity_residual(c, mu.weights())}});
  });
}

ms_status ms_check(const ms_chain* chain, const ms_partition* partition,
                   const char* condition_id, const char* params_json, char** report_json) {
  return guard([&] {
    need(chain, "chain");
    need(partition, "partition");
    need(condition_id, "condition id");
    const json params = params_json ? parse(params_json, "parameters") : json();
    const auto o = check_options_from_json(params);
    put(report_json, to_json(run_check(condition_id, chain->chain, partition->partition, o)));
  });
}

ms_status ms_check_sweep(const char* spec_text, const char* condition_id, const int* ns,
                         size_t count, const char* params_json, char** report_json) {
  return guard([&] {
    need(spec_text, "spec");
    need(condition_id, "condition id");
    if (count == 0) fail(ErrorCode::InvalidArgument, "sweep needs at least one N");
    need(ns, "N list");
    const auto& ids = condition_ids();
    if (std::find(ids.begin(), ids.end(), condition_id) == ids.end())
      fail(ErrorCode::UnknownCondition, std::string("unknown condition id '") + condition_id + "'");
    const auto spec = model_spec_from_json(parse_spec_text(spec_text));
    const json params = params_json ? parse(params_json, "parameters") : json();
    const auto o = check_options_from_json(params);

    std::vector<ConditionReport> reports(count);
    std::vector<json> models(count);
    std::vector<std::exception_ptr> errors(count);
    const std::size_t workers = std::min<std::size_t>(worker_count(), count);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t k = w; k < count; k += workers) {
          try {
            const auto m = build_model(spec, ns[k]);
            models[k] = to_json(m);
            reports[k] = run_check(condition_id, m.chain, m.partition, o);
          } catch (...) {
            errors[k] = std::current_exception();
          }
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);

    ConditionReport r = reports.back();
    json per_n = json::array();
    r.sweep.clear();
    for (std::size_t k = 0; k < count; ++k) {
      r.sweep.emplace_back(ns[k], reports[k].value);
      per_n.push_back({{"N", ns[k]},
                       {"values", reports[k].values},
                       {"verdict", reports[k].verdict},
                       {"theta", models[k]["theta"]},
                       {"num_states", models[k]["num_states"]},
                       {"warnings", models[k]["warnings"]}});
    }
    r.values = {{"per_N", per_n}};
    r.params["family"] = spec.family;
    apply_sweep_verdict(r, o);
    put(report_json, to_json(r));
  });
}

ms_status ms_limit_chain(const ms_chain* chain, const ms_partition* partition, ms_chain** limit,
                         char** report_json) {
  return guard([&] {
    need(chain, "chain");
    need(partition, "partition");
    auto l = estimate_limit_chain(chain->chain, partition->partition);
    put(report_json, to_json(l));
    if (limit) *limit = new ms_chain{std::move(l.chain)};
  });
}

ms_status ms_converge(const ms_chain* chain, const ms_partition* partition, const ms_chain* limit,
                      const double* times, size_t num_times, const char* init_state,
                      char** report_json, char** csv) {
  return guard([&] {
    need(chain, "chain");
    need(partition, "partition");
    const auto& c = chain->chain;
    const auto& p = partition->partition;
    const auto ts = time_list(times, num_times);
    if (ts.empty()) fail(ErrorCode::InvalidArgument, "at least one time is required");
    json notes = json::array();
    std::optional<Chain> estimated;
    if (!limit) {
      estimated = estimate_limit_chain(c, p).chain;
      notes.push_back("limit chain estimated from the mean-rate reduction");
    }
    const Chain& lim = limit ? limit->chain : *estimated;
    const Index init = init_state ? resolve_state(c, json(init_state)) : default_init(p);
    const std::size_t labels = p.num_wells() + 1;

    json curve = json::array();
    std::ostringstream out;
    out << "t";
    for (std::size_t y = 0; y < labels; ++y) out << ",chain_" << y;
    for (std::size_t y = 1; y < labels; ++y) out << ",limit_" << y;
    out << ",tv\n";
    bool tv_skipped = false;
    for (double t : ts) {
      const auto f = fdd_compare(c, p, lim, {t}, init);
      double tv = std::numeric_limits<double>::quiet_NaN();
      try {
        tv = state_convergence(c, p, lim, {t}, init).tv;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::ProductTooLarge) throw;
        tv_skipped = true;
      }
      curve.push_back({{"t", t},
                       {"chain_law", f.chain_law},
                       {"limit_law", f.limit_law},
                       {"max_abs_difference", f.max_abs_difference},
                       {"tv", tv}});
      out << csv_number(t);
      for (std::size_t y = 0; y < labels; ++y) out << ',' << csv_number(f.chain_law[y]);
      for (std::size_t y = 1; y < labels; ++y) out << ',' << csv_number(f.limit_law[y]);
      out << ',' << csv_number(tv) << '\n';
    }
    if (tv_skipped) notes.push_back("state convergence skipped: state space too large");
    json report{{"init_state", c.key(init)},
                {"times", ts},
                {"curve", curve},
                {"limit_chain", to_json(lim)},
                {"notes", notes}};
    if (ts.size() > 1 && ts.size() <= 3) report["joint"] = to_json(fdd_compare(c, p, lim, ts, init));
    put(report_json, report);
    if (csv) *csv = dup(out.str());
  });
}

ms_status ms_spectral(const ms_chain* chain, int with_mixing, char** out_json) {
  return guard([&] {
    need(chain, "chain");
    put(out_json, to_json(spectral_gap(chain->chain, with_mixing != 0)));
  });
}

ms_status ms_capacity(const ms_chain* chain, const char* set_a_json, const char* set_b_json,
                      char** out_json) {
  return guard([&] {
    need(chain, "chain");
    const auto a = parse_set(chain->chain, set_a_json, "set A");
    const auto b = parse_set(chain->chain, set_b_json, "set B");
    put(out_json, to_json(capacity(chain->chain, a, b)));
  });
}

ms_status ms_simulate_fdd(const ms_chain* chain, const ms_partition* partition,
                          const char* init_state, const double* times, size_t num_times,
                          uint64_t seed, size_t paths, size_t threads, char** out_json) {
  return guard([&] {
    need(chain, "chain");
    need(partition, "partition");
    const auto& c = chain->chain;
    const Index init = init_state ? resolve_state(c, json(init_state))
                                  : default_init(partition->partition);
    SimConfig cfg;
    cfg.seed = seed;
    cfg.paths = paths;
    cfg.threads = threads;
    json j = to_json(simulate_fdd(c, partition->partition, init, time_list(times, num_times), cfg));
    j["seed"] = seed;
    j["init_state"] = c.key(init);
    put(out_json, j);
  });
}

}  // extern "C"
