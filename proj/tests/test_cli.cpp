#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Workdir {
  fs::path dir;
  Workdir() {
    dir = fs::temp_directory_path() / ("metastab_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workdir() { fs::remove_all(dir); }
  fs::path operator/(const std::string& f) const { return dir / f; }
};

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string read(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Runs the CLI inside `dir`; stdout and stderr go to files there.
int run(const Workdir& w, const std::string& args, const std::string& env = "") {
  const std::string cmd = "cd '" + w.dir.string() + "' && " + env + " '" METASTAB_CLI "' " + args +
                          " >stdout.txt 2>stderr.txt";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

const char* kZeroRange = "family = \"zero_range\"\n[parameters]\nL = 2\nN = 10\nalpha = 1.0\n";

json without_timestamp(json j) {
  j["manifest"].erase("timestamp");
  return j;
}

}  // namespace

TEST_CASE("model writes chain and partition artifacts") {
  Workdir w;
  write(w / "zr.toml", kZeroRange);
  CHECK(run(w, "model --model zr.toml --out art") == 0);
  const json chain = json::parse(read(w / "art/chain.json"));
  CHECK(chain["states"].size() == 11);
  const json part = json::parse(read(w / "art/partition.json"));
  CHECK(part["wells"].size() == 2);
  const json summary = json::parse(read(w / "stdout.txt"));
  CHECK(summary["num_states"] == 11);
  CHECK(summary["manifest"]["command"] == "model");
  CHECK(summary["manifest"]["inputs"].contains("zr.toml"));
}

TEST_CASE("input errors give usage exit codes") {
  Workdir w;
  write(w / "bad.toml", "family = \"zero_range\"\nN = 10\nL = [1,\n");
  CHECK(run(w, "model --model bad.toml") == 1);
  CHECK(read(w / "stderr.txt").find("SpecParseError: line 3") != std::string::npos);

  write(w / "big.toml", "family = \"zero_range\"\nL = 30\nN = 300\n");
  CHECK(run(w, "model --model big.toml") != 0);
  CHECK(read(w / "stderr.txt").find("StateSpaceTooLarge") != std::string::npos);

  write(w / "zr.toml", kZeroRange);
  CHECK(run(w, "check --model zr.toml --check NOPE") == 1);
  CHECK(run(w, "check --model zr.toml") == 1);
  CHECK(run(w, "frobnicate") == 1);
  CHECK(run(w, "check --model missing.toml --check H2") == 1);
}

TEST_CASE("check verdicts map to exit codes") {
  Workdir w;
  write(w / "chain.json",
        R"({"states": ["a","b"], "rates": [[0,1,1.0],[1,0,1.0]]})");
  write(w / "singletons.json", R"({"num_states": 2, "wells": [[0],[1]]})");
  CHECK(run(w, "check --model chain.json --partition singletons.json --check H2 --out r.json") == 0);
  const json r = json::parse(read(w / "r.json"));
  CHECK(r["verdict"] == "pass");
  CHECK(r["values"]["value"] == 0.0);
  CHECK(r["manifest"]["parameters"]["check"] == "H2");

  write(w / "zr.toml", kZeroRange);
  CHECK(run(w, "check --model zr.toml --check H2 --threshold 0.01") == 2);
  CHECK(run(w, "check --model chain.json --check H2") == 1);
}

TEST_CASE("sweep mode attaches a trend verdict") {
  Workdir w;
  write(w / "zr.toml", kZeroRange);
  CHECK(run(w, "check --model zr.toml --check H2 --sweep N=10,20,40 --out s.json") == 0);
  const json s = json::parse(read(w / "s.json"));
  REQUIRE(s["sweep"].size() == 3);
  CHECK(s["sweep"][2]["N"] == 40);
  CHECK(s["verdict"] == "trend-pass");
  CHECK(s["values"]["per_N"].size() == 3);
  CHECK(run(w, "check --model zr.toml --check H2 --sweep 10,20") == 1);
}

TEST_CASE("converge writes curves and notes the estimated limit") {
  Workdir w;
  write(w / "zr.toml", kZeroRange);
  CHECK(run(w, "converge --model zr.toml --times 0.5,1 --out c.json") == 0);
  const json c = json::parse(read(w / "c.json"));
  CHECK(c["manifest"]["notes"].size() == 1);
  const std::string csv = read(w / "c.csv");
  CHECK(csv.rfind("t,chain_0,chain_1,chain_2,limit_1,limit_2,tv\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

  // Self-test: the limit chain fed back as its own model.
  const json limit = c["limit_chain"];
  write(w / "limit.json", limit.dump());
  write(w / "labels.json", R"({"num_states": 2, "wells": [[0],[1]]})");
  CHECK(run(w, "converge --model limit.json --partition labels.json --limit limit.json --times 0.5,1,2 --out self.json") == 0);
  const json self = json::parse(read(w / "self.json"));
  CHECK(self["manifest"]["notes"].empty());
  for (const auto& row : self["curve"]) CHECK(row["tv"].get<double>() <= 1e-9);

  CHECK(run(w, "converge --model zr.toml --times 1 --sweep N=10,20,40 --out z.json") == 0);
  double prev = 1.0;
  for (int n : {10, 20, 40}) {
    std::istringstream in(read(w / ("z_N" + std::to_string(n) + ".csv")));
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    const double tv = std::stod(row.substr(row.rfind(',') + 1));
    CHECK(tv < prev);
    prev = tv;
  }
}

TEST_CASE("reports are reproducible") {
  Workdir w;
  write(w / "zr.toml", kZeroRange);
  CHECK(run(w, "simulate --model zr.toml --times 0.5,1 --seed 9 --paths 2000 --threads 1 --out a.json") == 0);
  const std::string first = read(w / "a.json");
  CHECK(run(w, "simulate --model zr.toml --times 0.5,1 --seed 9 --paths 2000 --threads 1 --out a.json") == 0);
  CHECK(without_timestamp(json::parse(first)) == without_timestamp(json::parse(read(w / "a.json"))));

  CHECK(run(w, "simulate --model zr.toml --times 0.5,1 --seed 9 --paths 2000 --out a.json", "SOURCE_DATE_EPOCH=0") == 0);
  const std::string pinned = read(w / "a.json");
  CHECK(run(w, "simulate --model zr.toml --times 0.5,1 --seed 9 --paths 2000 --out a.json", "SOURCE_DATE_EPOCH=0") == 0);
  CHECK(pinned == read(w / "a.json"));
  CHECK(json::parse(pinned)["manifest"]["timestamp"] == "1970-01-01T00:00:00Z");

  // Worker count does not change the estimate.
  const json law = json::parse(first)["law"];
  CHECK(run(w, "simulate --model zr.toml --times 0.5,1 --seed 9 --paths 2000 --threads 5 --out b.json") == 0);
  CHECK(json::parse(read(w / "b.json"))["law"] == law);
}

TEST_CASE("spectral, capacity and stationary subcommands") {
  Workdir w;
  write(w / "chain.json",
        R"({"states": ["a","b","c"], "rates": [[0,1,1.0],[1,0,4.0],[1,2,4.0],[2,1,1.0]]})");
  CHECK(run(w, "spectral --model chain.json --mixing --out s.json") == 0);
  CHECK(json::parse(read(w / "s.json"))["gap"].get<double>() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(run(w, "capacity --model chain.json --a '[\"a\"]' --b '[\"c\"]' --out k.json") == 0);
  CHECK(json::parse(read(w / "k.json"))["value"].get<double>() == doctest::Approx(2.0 / 9.0).epsilon(1e-12));
  CHECK(run(w, "stationary --model chain.json --out m.json") == 0);
  CHECK(json::parse(read(w / "m.json"))["mu"][2].get<double>() == doctest::Approx(4.0 / 9.0).epsilon(1e-12));
}
