#include <CLI11.hpp>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "metastab/metastab.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kFail = 2, kWarn = 3, kInternal = 4 };

struct ChainFree {
  void operator()(ms_chain* c) const { ms_chain_free(c); }
};
struct PartitionFree {
  void operator()(ms_partition* p) const { ms_partition_free(p); }
};
using ChainPtr = std::unique_ptr<ms_chain, ChainFree>;
using PartitionPtr = std::unique_ptr<ms_partition, PartitionFree>;

struct Failure {
  int exit_code;
  std::string message;
};

int exit_for_status(ms_status s) {
  switch (s) {
    case MS_INVALID_ARGUMENT:
    case MS_SPEC_PARSE_ERROR:
    case MS_UNKNOWN_CONDITION:
    case MS_IO_ERROR:
    case MS_PARAMETER_OUT_OF_RANGE:
    case MS_STATE_SPACE_TOO_LARGE:
    case MS_SUPPORT_MISMATCH:
      return kUsage;
    default:
      return kInternal;
  }
}

void check(ms_status s) {
  if (s != MS_OK)
    throw Failure{exit_for_status(s), std::string(ms_status_string(s)) + ": " + ms_last_error()};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  ms_string_free(s);
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{kUsage, "IoError: cannot read '" + path + "'"};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Failure{kUsage, "IoError: cannot write '" + path.string() + "'"};
  out << text;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string timestamp() {
  std::time_t t;
  if (const char* e = std::getenv("SOURCE_DATE_EPOCH")) t = static_cast<std::time_t>(std::strtoll(e, nullptr, 10));
  else t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Run inputs shared by the subcommands.
struct Options {
  std::string model;
  std::string partition;
  std::string limit;
  std::string check_id;
  std::string sweep;
  std::string times;
  std::string init;
  std::string out;
  std::string set_a;
  std::string set_b;
  std::uint64_t seed = 0;
  std::size_t paths = 10000;
  std::size_t threads = 0;
  int n = 0;
  double threshold = 0.1;
  double t = 1.0;
  double delta = 0.1;
  double epsilon = 0.01;
  double c0 = 10.0;
  bool full_max = false;
  bool mixing = false;
};

class Run {
 public:
  Run(std::string command, json parameters) : command_(std::move(command)), params_(std::move(parameters)) {}

  std::string input(const std::string& path) {
    std::string text = read_file(path);
    inputs_[path] = "fnv1a64:" + hex(fnv1a(text));
    return text;
  }

  void note(const std::string& s) { notes_.push_back(s); }

  json finish(json report) const {
    json m{{"command", command_},
           {"parameters", params_},
           {"version", ms_version()},
           {"inputs", inputs_},
           {"notes", notes_}};
    report["manifest"] = m;
    report["manifest"]["content_hash"] = "fnv1a64:" + hex(fnv1a(report.dump()));
    report["manifest"]["timestamp"] = timestamp();
    return report;
  }

 private:
  std::string command_;
  json params_;
  json inputs_ = json::object();
  json notes_ = json::array();
};

struct Loaded {
  ChainPtr chain;
  PartitionPtr partition;
  json summary;
  std::string spec_text;  // empty for chain artifacts
};

bool looks_like_chain(const std::string& text) {
  const auto j = json::parse(text, nullptr, false);
  return j.is_object() && j.contains("rates") && j.contains("states");
}

Loaded load(Run& run, const Options& o, bool need_partition, int n_override = 0) {
  if (o.model.empty()) throw Failure{kUsage, "--model is required"};
  Loaded l;
  const std::string text = run.input(o.model);
  ms_chain* c = nullptr;
  ms_partition* p = nullptr;
  if (looks_like_chain(text)) {
    check(ms_chain_from_json(text.c_str(), &c));
    l.chain.reset(c);
  } else {
    l.spec_text = text;
    char* summary = nullptr;
    check(ms_model_build(text.c_str(), n_override, &c, &p, &summary));
    l.chain.reset(c);
    l.partition.reset(p);
    l.summary = json::parse(take(summary));
  }
  if (!o.partition.empty()) {
    const std::string ptext = run.input(o.partition);
    check(ms_partition_from_json(ptext.c_str(), &p));
    l.partition.reset(p);
  }
  if (need_partition && !l.partition) throw Failure{kUsage, "a chain artifact needs --partition"};
  return l;
}

std::vector<double> parse_times(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Failure{kUsage, "invalid time '" + item + "' in --times"};
    }
  }
  if (out.empty()) throw Failure{kUsage, "--times needs at least one value"};
  return out;
}

std::vector<int> parse_sweep(const std::string& s) {
  if (s.rfind("N=", 0) != 0) throw Failure{kUsage, "--sweep expects N=v1,v2,..."};
  std::vector<int> out;
  std::stringstream ss(s.substr(2));
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size() || out.back() < 1) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Failure{kUsage, "invalid N '" + item + "' in --sweep"};
    }
  }
  if (out.empty()) throw Failure{kUsage, "--sweep needs at least one N"};
  return out;
}

void emit(const Options& o, const json& report) {
  const std::string text = report.dump(2) + "\n";
  if (o.out.empty()) std::cout << text;
  else write_file(o.out, text);
}

int verdict_exit(const std::string& v) {
  if (v == "fail") return kFail;
  if (v == "warn") return kWarn;
  return kOk;
}

json check_params(const Options& o) {
  return {{"t", o.t},         {"delta", o.delta}, {"epsilon", o.epsilon},
          {"tol", o.threshold}, {"c0", o.c0},     {"full_max", o.full_max}};
}

// Subcommands ---------------------------------------------------------------------

int cmd_model(const Options& o, Run& run) {
  auto l = load(run, o, false, o.n);
  if (l.spec_text.empty()) throw Failure{kUsage, "model needs a model spec, not a chain artifact"};
  const json summary = run.finish(l.summary);
  if (!o.out.empty()) {
    const fs::path dir(o.out);
    write_file(dir / "chain.json", take([&] {
                 char* s = nullptr;
                 check(ms_chain_to_json(l.chain.get(), &s));
                 return s;
               }()) + "\n");
    write_file(dir / "partition.json", take([&] {
                 char* s = nullptr;
                 check(ms_partition_to_json(l.partition.get(), &s));
                 return s;
               }()) + "\n");
    write_file(dir / "model.json", summary.dump(2) + "\n");
  }
  std::cout << summary.dump(2) << "\n";
  return kOk;
}

int cmd_check(const Options& o, Run& run) {
  const std::string params = check_params(o).dump();
  json report;
  if (!o.sweep.empty()) {
    if (o.model.empty()) throw Failure{kUsage, "--model is required"};
    const std::string text = run.input(o.model);
    if (looks_like_chain(text)) throw Failure{kUsage, "--sweep needs a model spec"};
    if (!o.partition.empty()) throw Failure{kUsage, "--sweep builds partitions per N; drop --partition"};
    const auto ns = parse_sweep(o.sweep);
    char* out = nullptr;
    check(ms_check_sweep(text.c_str(), o.check_id.c_str(), ns.data(), ns.size(), params.c_str(), &out));
    report = json::parse(take(out));
  } else {
    auto l = load(run, o, true, o.n);
    char* out = nullptr;
    check(ms_check(l.chain.get(), l.partition.get(), o.check_id.c_str(), params.c_str(), &out));
    report = json::parse(take(out));
  }
  emit(o, run.finish(report));
  return verdict_exit(report.value("verdict", "pass"));
}

json converge_one(const Options& o, Run& run, const Loaded& l, const ChainPtr& limit,
                  const std::vector<double>& times, std::string* csv) {
  char* out = nullptr;
  char* curve = nullptr;
  check(ms_converge(l.chain.get(), l.partition.get(), limit.get(), times.data(), times.size(),
                    o.init.empty() ? nullptr : o.init.c_str(), &out, &curve));
  *csv = take(curve);
  json r = json::parse(take(out));
  for (const auto& n : r["notes"]) run.note(n.get<std::string>());
  return r;
}

fs::path csv_path(const Options& o, const std::string& suffix) {
  fs::path p(o.out);
  p.replace_extension();
  return p.string() + suffix + ".csv";
}

int cmd_converge(const Options& o, Run& run) {
  const auto times = parse_times(o.times);
  ChainPtr limit;
  if (!o.limit.empty()) {
    const std::string text = run.input(o.limit);
    ms_chain* c = nullptr;
    check(ms_chain_from_json(text.c_str(), &c));
    limit.reset(c);
  }
  json report;
  if (!o.sweep.empty()) {
    const auto ns = parse_sweep(o.sweep);
    if (!o.partition.empty()) throw Failure{kUsage, "--sweep builds partitions per N; drop --partition"};
    json runs = json::array();
    for (int n : ns) {
      auto l = load(run, o, true, n);
      if (l.spec_text.empty()) throw Failure{kUsage, "--sweep needs a model spec"};
      std::string csv;
      json r = converge_one(o, run, l, limit, times, &csv);
      r["N"] = n;
      r["theta"] = l.summary["theta"];
      r.erase("limit_chain");
      if (!o.out.empty()) write_file(csv_path(o, "_N" + std::to_string(n)), csv);
      runs.push_back(r);
    }
    report = {{"sweep", runs}};
  } else {
    auto l = load(run, o, true, o.n);
    std::string csv;
    report = converge_one(o, run, l, limit, times, &csv);
    if (!o.out.empty()) write_file(csv_path(o, ""), csv);
    else std::cerr << csv;
  }
  emit(o, run.finish(report));
  return kOk;
}

int cmd_simulate(const Options& o, Run& run) {
  const auto times = parse_times(o.times);
  auto l = load(run, o, true, o.n);
  char* out = nullptr;
  check(ms_simulate_fdd(l.chain.get(), l.partition.get(), o.init.empty() ? nullptr : o.init.c_str(),
                        times.data(), times.size(), o.seed, o.paths, o.threads, &out));
  emit(o, run.finish(json::parse(take(out))));
  return kOk;
}

int cmd_spectral(const Options& o, Run& run) {
  auto l = load(run, o, false, o.n);
  char* out = nullptr;
  check(ms_spectral(l.chain.get(), o.mixing ? 1 : 0, &out));
  emit(o, run.finish(json::parse(take(out))));
  return kOk;
}

int cmd_capacity(const Options& o, Run& run) {
  auto l = load(run, o, false, o.n);
  char* out = nullptr;
  check(ms_capacity(l.chain.get(), o.set_a.c_str(), o.set_b.c_str(), &out));
  json r = json::parse(take(out));
  r["A"] = json::parse(o.set_a, nullptr, false);
  r["B"] = json::parse(o.set_b, nullptr, false);
  emit(o, run.finish(r));
  return kOk;
}

int cmd_stationary(const Options& o, Run& run) {
  auto l = load(run, o, false, o.n);
  char* out = nullptr;
  check(ms_stationary(l.chain.get(), &out));
  emit(o, run.finish(json::parse(take(out))));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical toolkit for metastable finite Markov chains"};
  app.set_version_flag("--version", std::string(ms_version()));
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  Options o;

  auto model_opt = [&](CLI::App* s, bool required) {
    auto* opt = s->add_option("--model", o.model, "model spec (TOML/JSON) or chain JSON");
    if (required) opt->required();
    s->add_option("--N", o.n, "override N of the model spec");
  };
  auto out_opt = [&](CLI::App* s) { s->add_option("--out", o.out, "output path"); };

  auto* model = app.add_subcommand("model", "build a model and write chain and partition");
  model_opt(model, true);
  out_opt(model);

  auto* chk = app.add_subcommand("check", "run a condition check");
  model_opt(chk, false);
  chk->add_option("--partition", o.partition, "partition JSON");
  chk->add_option("--check", o.check_id, "condition id")->required();
  chk->add_option("--sweep", o.sweep, "N=v1,v2,...");
  chk->add_option("--threshold", o.threshold, "pass threshold");
  chk->add_flag("--full-max", o.full_max, "maximize over all starting states");
  chk->add_option("--t", o.t, "time horizon of H2");
  chk->add_option("--delta", o.delta, "delta of C03 and M1");
  chk->add_option("--epsilon", o.epsilon, "epsilon of M2 and TMIX3");
  chk->add_option("--c0", o.c0, "bound of B09");
  out_opt(chk);

  auto* conv = app.add_subcommand("converge", "label laws against the limit chain");
  model_opt(conv, true);
  conv->add_option("--partition", o.partition, "partition JSON");
  conv->add_option("--limit", o.limit, "limit chain JSON");
  conv->add_option("--times", o.times, "t1,t2,...")->required();
  conv->add_option("--init", o.init, "initial state key");
  conv->add_option("--sweep", o.sweep, "N=v1,v2,...");
  out_opt(conv);

  auto* sim = app.add_subcommand("simulate", "Monte Carlo label laws");
  model_opt(sim, true);
  sim->add_option("--partition", o.partition, "partition JSON");
  sim->add_option("--times", o.times, "t1,t2,...")->required();
  sim->add_option("--init", o.init, "initial state key");
  sim->add_option("--seed", o.seed, "random seed");
  sim->add_option("--paths", o.paths, "number of paths");
  sim->add_option("--threads", o.threads, "worker count");
  out_opt(sim);

  auto* spec = app.add_subcommand("spectral", "spectral gap and relaxation time");
  model_opt(spec, true);
  spec->add_flag("--mixing", o.mixing, "also compute the mixing time");
  out_opt(spec);

  auto* cap = app.add_subcommand("capacity", "capacity between two sets");
  model_opt(cap, true);
  cap->add_option("--a", o.set_a, "JSON array of state keys or indices")->required();
  cap->add_option("--b", o.set_b, "JSON array of state keys or indices")->required();
  out_opt(cap);

  auto* stat = app.add_subcommand("stationary", "stationary distribution");
  model_opt(stat, true);
  out_opt(stat);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  CLI::App* cmd = app.get_subcommands().front();
  json params = json::object();
  for (const auto* opt : cmd->get_options()) {
    if (opt->get_name() == "--help") continue;
    const auto key = opt->get_lnames().front();
    if (opt->count() == 0) {
      if (!opt->get_default_str().empty()) params[key] = opt->get_default_str();
      continue;
    }
    const auto r = opt->results();
    params[key] = r.size() == 1 ? json(r.front()) : json(r);
  }
  Run run(cmd->get_name(), params);
  try {
    const std::string name = cmd->get_name();
    if (name == "model") return cmd_model(o, run);
    if (name == "check") return cmd_check(o, run);
    if (name == "converge") return cmd_converge(o, run);
    if (name == "simulate") return cmd_simulate(o, run);
    if (name == "spectral") return cmd_spectral(o, run);
    if (name == "capacity") return cmd_capacity(o, run);
    return cmd_stationary(o, run);
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << "\n";
    return f.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInternal;
  }
}
