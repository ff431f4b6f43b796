#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "metastab/metastability.hpp"
#include "metastab/models.hpp"
#include "metastab/reductions.hpp"
#include "support/oracles.hpp"

using namespace metastab;

namespace {

std::vector<int> parse_key(const std::string& k) {
  std::vector<int> v;
  std::stringstream ss(k);
  std::string part;
  while (std::getline(ss, part, ',')) v.push_back(std::stoi(part));
  return v;
}

std::vector<double> normalized(std::vector<double> logw) {
  double top = *std::max_element(logw.begin(), logw.end());
  double s = 0.0;
  for (double& x : logw) s += (x = std::exp(x - top));
  for (double& x : logw) x /= s;
  return logw;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Internal;
}

// Closed-form zero-range weights from the state keys.
std::vector<double> zero_range_oracle(const Chain& c, double alpha) {
  std::vector<double> lw;
  for (const auto& k : c.keys()) {
    double s = 0.0;
    for (int v : parse_key(k)) {
      double a = 1.0;
      for (int i = 1; i <= v; ++i) a *= std::pow(static_cast<double>(i) / std::max(i - 1, 1), i == 1 ? 0.0 : alpha);
      s -= std::log(a);
    }
    lw.push_back(s);
  }
  return normalized(lw);
}

std::vector<double> inclusion_oracle(const Chain& c, double d) {
  std::vector<double> lw;
  for (const auto& k : c.keys()) {
    double s = 0.0;
    for (int v : parse_key(k)) {
      // w(k) = prod_{i<k} (d+i)/(i+1)
      for (int i = 0; i < v; ++i) s += std::log((d + i) / (i + 1.0));
    }
    lw.push_back(s);
  }
  return normalized(lw);
}

bool detailed_balance(const Chain& c, const std::vector<double>& mu, double tol) {
  for (Index i = 0; i < c.size(); ++i) {
    const auto row = c.row(i);
    for (std::size_t m = 0; m < row.targets.size(); ++m) {
      const Index j = row.targets[m];
      const double a = mu[i] * row.rates[m], b = mu[j] * c.rate(j, i);
      if (std::abs(a - b) > tol * std::max(a, b)) return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("g sequence") {
  CHECK(zero_range_g(0, 2.0) == 0.0);
  CHECK(zero_range_g(1, 2.0) == 1.0);
  CHECK(zero_range_g(2, 2.0) == doctest::Approx(4.0));
  CHECK(zero_range_g(3, 2.0) == doctest::Approx(9.0 / 4.0));
  for (int n = 2; n < 200; ++n) CHECK(zero_range_g(n + 1, 2.0) < zero_range_g(n, 2.0));
  CHECK(zero_range_g(100000, 2.0) == doctest::Approx(1.0).epsilon(1e-4));
  // prod g(i) = a(n)
  double prod = 1.0;
  for (int i = 1; i <= 7; ++i) prod *= zero_range_g(i, 1.5);
  CHECK(prod == doctest::Approx(std::pow(7.0, 1.5)));
}

TEST_CASE("compositions are ranked in colex order") {
  const auto all = compositions(5, 3);
  CHECK(all.size() == 21);
  std::set<std::vector<int>> unique(all.begin(), all.end());
  CHECK(unique.size() == 21);
  for (std::size_t i = 0; i < all.size(); ++i) {
    CHECK(composition_rank(all[i]) == i);
    if (i > 0) {
      std::vector<int> a(all[i - 1].rbegin(), all[i - 1].rend()), b(all[i].rbegin(), all[i].rend());
      CHECK(a < b);
    }
  }
  const auto two = compositions(2, 2);
  CHECK(two == std::vector<std::vector<int>>{{2, 0}, {1, 1}, {0, 2}});
}

TEST_CASE("zero-range sizes and the alpha warning") {
  const auto m = zero_range(2, 3, 1.0, 0.5, 1);
  CHECK(m.chain.size() == 4);
  CHECK(!m.warnings.empty());
  const auto m2 = zero_range(2, 2 * 2 + 1, 1.0, 0.5, 2);
  CHECK(m2.chain.size() == 6);
}

TEST_CASE("zero-range L=2 N=2 stationary law via the generator") {
  // Rates g(eta_x) for each direction accumulated; same as the model rule.
  const auto space = compositions(2, 2);
  std::vector<RateEntry> e;
  for (Index i = 0; i < space.size(); ++i)
    for (int x = 0; x < 2; ++x)
      if (space[i][static_cast<std::size_t>(x)] > 0) {
        auto n = space[i];
        --n[static_cast<std::size_t>(x)];
        ++n[static_cast<std::size_t>(1 - x)];
        e.push_back({i, composition_rank(n), zero_range_g(space[i][static_cast<std::size_t>(x)], 1.0)});
      }
  const auto c = build_chain({"2,0", "1,1", "0,2"}, e);
  const auto mu = oracle::null_stationary(oracle::generator(c));
  CHECK(mu[0] == doctest::Approx(0.25));
  CHECK(mu[1] == doctest::Approx(0.5));
  CHECK(mu[2] == doctest::Approx(0.25));
}

TEST_CASE("zero-range stationary law matches the product formula") {
  for (auto [L, N, alpha, p] : std::vector<std::tuple<int, int, double, double>>{
           {2, 10, 1.0, 0.5}, {3, 7, 2.0, 0.5}, {3, 7, 2.0, 0.8}, {4, 5, 1.5, 1.0}}) {
    const auto m = zero_range(L, N, alpha, p, 1);
    const auto mu = stationary(m.chain);
    const auto ref = zero_range_oracle(m.chain, alpha);
    CHECK(tv_distance(mu.weights(), ref) < 1e-10);
    CHECK(tv_distance(Measure::from_log_weights(m.log_weights).weights(), ref) < 1e-12);
    const auto dense = oracle::null_stationary(oracle::generator(m.chain));
    CHECK(tv_distance(std::vector<double>(dense.data(), dense.data() + dense.size()), ref) < 1e-10);
    CHECK(is_reversible(m.chain, ref) == (p == 0.5));
    CHECK(m.theta == doctest::Approx(std::pow(N, 1.0 + alpha)));
  }
}

TEST_CASE("zero-range partition and guards") {
  const auto m = zero_range(3, 8, 2.0, 0.5, 2);
  CHECK(m.partition.num_wells() == 3);
  for (std::size_t x = 1; x <= 3; ++x) {
    for (Index i : m.partition.well(x)) CHECK(parse_key(m.chain.key(i))[x - 1] >= 6);
    REQUIRE(m.partition.bottom(x).size() == 1);
    CHECK(parse_key(m.chain.key(m.partition.bottom(x)[0]))[x - 1] == 8);
  }
  CHECK(code_of([] { zero_range(2, 10, 0.0, 0.5, 2); }) == ErrorCode::ParameterOutOfRange);
  CHECK(code_of([] { zero_range(2, 10, 2.0, 0.3, 2); }) == ErrorCode::ParameterOutOfRange);
  CHECK(code_of([] { zero_range(2, 10, 2.0, 0.5, 5); }) == ErrorCode::ParameterOutOfRange);
  CHECK(code_of([] { zero_range(30, 40, 2.0, 0.5, 2); }) == ErrorCode::StateSpaceTooLarge);
}

TEST_CASE("translation equivariance") {
  for (int fam = 0; fam < 2; ++fam) {
    const auto m = fam == 0 ? zero_range(3, 6, 2.0, 0.7, 1) : inclusion(3, 6, 0.3);
    const auto mu = stationary(m.chain);
    for (Index i = 0; i < m.chain.size(); ++i) {
      auto eta = parse_key(m.chain.key(i));
      std::rotate(eta.begin(), eta.begin() + 1, eta.end());
      const auto j = m.chain.find(composition_key(eta));
      REQUIRE(j.has_value());
      CHECK(mu[*j] == doctest::Approx(mu[i]).epsilon(1e-10));
    }
  }
}

TEST_CASE("inclusion process") {
  const auto one = inclusion(2, 1, 0.1);
  REQUIRE(one.chain.size() == 2);
  CHECK(one.chain.rate(0, 1) == doctest::Approx(2.0));
  CHECK(one.chain.rate(1, 0) == doctest::Approx(2.0));
  CHECK(one.partition.delta().empty());

  const auto m = inclusion(2, 20, 1.0 / std::pow(std::log(20.0), 2));
  const auto ref = inclusion_oracle(m.chain, m.parameters["d"].get<double>());
  CHECK(tv_distance(stationary(m.chain).weights(), ref) < 1e-10);
  CHECK(detailed_balance(m.chain, ref, 1e-12));
  CHECK(m.partition.well(1).size() == 1);
  CHECK(m.chain.holding(m.partition.well(1)[0]) == doctest::Approx(2.0 * 20));

  const auto m3 = inclusion(4, 5, 0.2);
  CHECK(tv_distance(stationary(m3.chain).weights(), inclusion_oracle(m3.chain, 0.2)) < 1e-10);
  CHECK(detailed_balance(m3.chain, inclusion_oracle(m3.chain, 0.2), 1e-12));
  CHECK(code_of([] { inclusion(2, 5, -1.0); }) == ErrorCode::ParameterOutOfRange);
}

TEST_CASE("inclusion bottom mass increases over N") {
  double prev = 0.0;
  for (int N : {10, 20, 40, 80}) {
    const auto m = inclusion(2, N, 1.0 / std::pow(std::log(N), 2));
    const auto mu = stationary(m.chain);
    const double v = mu[m.partition.well(1)[0]];
    CHECK(v > prev);
    CHECK(v < 0.5);
    prev = v;
  }
}

TEST_CASE("flat potential gives a uniform walk") {
  const auto pc = potential_walk_chain(builtin_potential("flat_2d"), 5);
  CHECK(pc.chain.size() == 81);
  for (const auto& e : pc.chain.supplied_entries()) CHECK(e.rate == 1.0);
  const auto mu = stationary(pc.chain);
  for (Index i = 0; i < pc.chain.size(); ++i) CHECK(mu[i] == doctest::Approx(1.0 / 81));
  CHECK(code_of([] { potential_walk(builtin_potential("flat_1d"), 10, 0.3); }) ==
        ErrorCode::NonSmoothBoundary);
}

TEST_CASE("one-dimensional double well") {
  const auto m = potential_walk(builtin_potential("double_well_1d"), 24, 0.5);
  CHECK(m.chain.size() == 77);
  std::vector<double> lw;
  for (const auto& k : m.chain.keys()) {
    const double x = parse_key(k)[0] / 24.0;
    lw.push_back(-24 * (x * x - 1) * (x * x - 1));
  }
  const auto ref = normalized(lw);
  CHECK(tv_distance(stationary(m.chain).weights(), ref) < 1e-10);
  CHECK(detailed_balance(m.chain, ref, 1e-12));
  CHECK(m.partition.num_wells() == 2);
  CHECK(m.chain.key(m.partition.bottom(1)[0]) == "-24");
  CHECK(m.chain.key(m.partition.bottom(2)[0]) == "24");
  const double hess = 2.0 / std::sqrt(8.0);
  CHECK(m.diagnostics["hessian_sum"].get<double>() == doctest::Approx(hess).epsilon(1e-6));
  CHECK(m.diagnostics["partition_relative_error"].get<double>() < 0.2);
  CHECK(m.theta == doctest::Approx(2 * M_PI * 24 * std::exp(24.0)));
  // Declared and detected minima agree.
  auto f = builtin_potential("double_well_1d");
  f.minima.clear();
  f.saddle.reset();
  const auto det = potential_walk(f, 24, 0.5);
  CHECK(det.partition.bottom(1) == m.partition.bottom(1));
  CHECK(det.diagnostics["H"].get<double>() == doctest::Approx(1.0));
}

TEST_CASE("double well partition error shrinks with N") {
  double prev = 1.0;
  for (int N : {12, 24, 48}) {
    const auto m = potential_walk(builtin_potential("double_well_1d"), N, 0.5);
    const double err = m.diagnostics["partition_relative_error"].get<double>();
    CHECK(err < prev);
    prev = err;
  }
}

TEST_CASE("two-dimensional double well and explicit values") {
  const auto m = potential_walk(builtin_potential("double_well_2d"), 6, 0.4);
  const auto mu = stationary(m.chain);
  std::vector<double> lw;
  for (const auto& k : m.chain.keys()) {
    const auto p = parse_key(k);
    const double x = p[0] / 6.0, y = p[1] / 6.0;
    lw.push_back(-6 * ((x * x - 1) * (x * x - 1) + y * y));
  }
  CHECK(tv_distance(mu.weights(), normalized(lw)) < 1e-10);

  PotentialField v;
  v.name = "grid";
  v.dim = 1;
  v.lower = {-1.6};
  v.upper = {1.6};
  for (int k = -9; k <= 9; ++k) {
    const double x = k / 6.0;
    v.values.push_back((x * x - 1) * (x * x - 1));
  }
  const auto g = potential_walk(v, 6, 0.5);
  CHECK(g.chain.key(g.partition.bottom(1)[0]) == "-6");
  CHECK(g.diagnostics["H"].get<double>() == doctest::Approx(1.0));
  v.values.pop_back();
  CHECK(code_of([&] { potential_walk(v, 6, 0.5); }) == ErrorCode::ParameterOutOfRange);
}

TEST_CASE("singular graph construction") {
  const int N = 8;
  const auto m = singular_graph(N, 2, 1, 2);
  CHECK(m.chain.size() == 4 * 81 - 4);
  // Explicit weights from the coordinate set.
  std::set<std::vector<int>> pts;
  for (const auto& k : m.chain.keys()) pts.insert(parse_key(k));
  std::vector<double> lw;
  for (const auto& k : m.chain.keys()) {
    const auto p = parse_key(k);
    int missing = 0;
    for (int j = 0; j < 2; ++j)
      for (int s : {1, -1}) {
        auto q = p;
        q[static_cast<std::size_t>(j)] += s;
        missing += pts.count(q) == 0;
      }
    const bool corner = (p == std::vector<int>{0, 0} || p == std::vector<int>{N, 0} ||
                         p == std::vector<int>{0, N} || p == std::vector<int>{N, N});
    lw.push_back(-(corner ? 1 : missing) * std::log(2.0));
  }
  const auto ref = normalized(lw);
  CHECK(tv_distance(stationary(m.chain).weights(), ref) < 1e-10);
  CHECK(detailed_balance(m.chain, ref, 1e-12));
  for (const auto& deg : m.diagnostics["corner_degrees"]) CHECK(deg.get<int>() == 4);
  CHECK(m.partition.num_wells() == 4);
  CHECK(m.theta_kind == "estimate");
  const auto gap = 1.0 / m.theta;
  CHECK(gap > 0.0);
  // Bottom sets are (N-2M+1)^2 central squares.
  for (std::size_t x = 1; x <= 4; ++x) CHECK(m.partition.bottom(x).size() == 25);
  // Delta: points within graph distance 1 of the corners: 4 corners, each with 4 neighbors.
  CHECK(m.partition.delta().size() == 20);
}

TEST_CASE("singular graph in three dimensions") {
  const auto m = singular_graph(4, 3, 1, 2, false);
  CHECK(m.chain.size() == 4 * 125 - 4);
  std::set<std::vector<int>> pts;
  for (const auto& k : m.chain.keys()) pts.insert(parse_key(k));
  std::vector<double> lw;
  std::size_t corners = 0;
  for (const auto& k : m.chain.keys()) {
    const auto p = parse_key(k);
    int missing = 0;
    for (int j = 0; j < 3; ++j)
      for (int s : {1, -1}) {
        auto q = p;
        q[static_cast<std::size_t>(j)] += s;
        missing += pts.count(q) == 0;
      }
    const bool corner = p[2] == 0 && ((p[0] == 0 || p[0] == 4) && (p[1] == 0 || p[1] == 4));
    corners += corner;
    lw.push_back(-(corner ? 2 : missing) * std::log(2.0));
  }
  CHECK(corners == 4);
  CHECK(tv_distance(stationary(m.chain).weights(), normalized(lw)) < 1e-10);
  CHECK(code_of([] { singular_graph(8, 1, 1, 2); }) == ErrorCode::ParameterOutOfRange);
  CHECK(code_of([] { singular_graph(8, 2, 4, 2); }) == ErrorCode::ParameterOutOfRange);
}

TEST_CASE("TOML subset parser") {
  const auto j = parse_toml(R"(# model
family = "zero_range"   # trailing comment
[parameters]
L = 2
N = 10
alpha = 1.0
p = 5e-1
flags = [true, false]
nested = [[0, 1],
          [2, 3]]
[parameters.extra]
name = 'lit\n'
"quoted key" = -3
inline = { a = 1, b = "x" }
)");
  CHECK(j["family"] == "zero_range");
  CHECK(j["parameters"]["N"] == 10);
  CHECK(j["parameters"]["p"].get<double>() == 0.5);
  CHECK(j["parameters"]["nested"][1][0] == 2);
  CHECK(j["parameters"]["extra"]["name"] == "lit\\n");
  CHECK(j["parameters"]["extra"]["quoted key"] == -3);
  CHECK(j["parameters"]["extra"]["inline"]["b"] == "x");

  auto line_of = [](const char* text) {
    try {
      parse_toml(text);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::SpecParseError);
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(line_of("a = 1\nb = \n") .find("line 2") != std::string::npos);
  CHECK(line_of("a = 1\n\nc = [1, 2\n") .find("line") != std::string::npos);
  CHECK(line_of("a = 1\na = 2\n").find("line 2") != std::string::npos);
  CHECK(line_of("x = \"open\n").find("line 1") != std::string::npos);
  CHECK(line_of("x = 12abc\n").find("line 1") != std::string::npos);
}

TEST_CASE("model specs") {
  const auto spec = model_spec_from_json(parse_spec_text("family = \"zero_range\"\nL = 2\nN = 10\nalpha = 1.0\n"));
  const auto m = build_model(spec);
  CHECK(m.chain.size() == 11);
  CHECK(m.parameters["ell"] == 2);
  CHECK(build_model(spec, 20).parameters["ell"] == 5);

  const auto js = model_spec_from_json(parse_spec_text(
      R"({"family": "inclusion", "parameters": {"N": 10}})"));
  CHECK(build_model(js).parameters["d"].get<double>() == doctest::Approx(1.0 / std::pow(std::log(10.0), 2)));
  CHECK(code_of([] { model_spec_from_json(nlohmann::json{{"family", "ising"}}); }) == ErrorCode::SpecParseError);
  CHECK(code_of([] { build_model(model_spec_from_json(nlohmann::json{{"family", "zero_range"}})); }) ==
        ErrorCode::SpecParseError);
  const auto big = model_spec_from_json(nlohmann::json{{"family", "zero_range"}, {"L", 40}, {"N", 60}});
  CHECK(code_of([&] { build_model(big); }) == ErrorCode::StateSpaceTooLarge);

  nlohmann::json over{{"family", "zero_range"}, {"N", 10}, {"alpha", 2.0},
                      {"partition", {{"num_states", 11}, {"wells", {{0}, {10}}}}}};
  const auto o = build_model(model_spec_from_json(over));
  CHECK(o.partition.well(2) == StateSet{10});
  CHECK(!o.partition.has_bottoms());

  const auto pw = build_model(model_spec_from_json(
      nlohmann::json{{"family", "potential_walk"}, {"N", 10}, {"potential", "double_well_1d"}}));
  CHECK(pw.chain.size() == 31);
}

TEST_CASE("trace on the wells keeps the conditioned measure for every family") {
  std::vector<ModelInstance> models;
  models.push_back(zero_range(2, 12, 2.0, 0.5, 3));
  models.push_back(zero_range(3, 6, 2.0, 0.7, 1));
  models.push_back(inclusion(2, 8, 0.2));
  models.push_back(inclusion(3, 4, 0.3));
  models.push_back(potential_walk(builtin_potential("double_well_1d"), 12, 0.5));
  models.push_back(potential_walk(builtin_potential("double_well_2d"), 6, 0.5));
  models.push_back(singular_graph(8, 2, 1, 2));
  for (const auto& m : models) {
    CAPTURE(m.family);
    const auto& p = m.partition;
    const auto mu = stationary(m.chain);
    const auto tr = trace_chain(m.chain, p.wells_union());
    const auto mt = stationary(tr);
    const auto cond = mu.restricted(p.wells_union());
    for (Index i = 0; i < tr.size(); ++i) CHECK(std::abs(mt[i] - cond[i]) <= 1e-9);

    const auto l = estimate_limit_chain(m.chain, p);
    const auto f = fdd_compare(m.chain, p, l.chain, {50.0 / m.chain.max_holding()}, p.wells_union().front());
    double total = 0.0;
    for (double v : f.chain_law) total += v;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}
