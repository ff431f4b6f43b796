#include <doctest.h>

#include <cmath>
#include <random>

#include "metastab/chain.hpp"
#include "support/oracles.hpp"

using namespace metastab;

namespace {

Chain two_state(double ab = 1.0, double ba = 1.0) {
  return build_chain({"a", "b"}, {{0, 1, ab}, {1, 0, ba}});
}

Chain cycle3() {
  return build_chain({"a", "b", "c"}, {{0, 1, 1.5}, {1, 2, 0.7}, {2, 0, 2.2}});
}

}  // namespace

TEST_CASE("build_chain holding rates") {
  auto c = two_state();
  CHECK(c.irreducible());
  CHECK(c.holding(0) == 1.0);
  CHECK(c.holding(1) == 1.0);

  auto cyc = cycle3();
  CHECK(cyc.irreducible());
  CHECK(cyc.holding(0) == 1.5);
  CHECK(cyc.holding(1) == 0.7);
  CHECK(cyc.holding(2) == 2.2);
}

TEST_CASE("build_chain validation") {
  auto code_of = [](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Internal;
  };
  CHECK(code_of([] { build_chain({"a", "b"}, {{0, 1, -0.5}, {1, 0, 1}}); }) ==
        ErrorCode::NegativeRate);
  CHECK(code_of([] { build_chain({"a", "b"}, {{0, 1, 1}, {0, 1, 2}}); }) ==
        ErrorCode::DuplicateEntry);
  CHECK(code_of([] { build_chain({}, {}); }) == ErrorCode::EmptyStateSet);
  CHECK(code_of([] { build_chain({"a", "a"}, {}); }) == ErrorCode::DuplicateEntry);
  CHECK(code_of([] { build_chain({"a", "b"}, {{0, 0, 1}}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("irreducibility flag matches strong connectivity") {
  auto one_way = build_chain({"a", "b", "c"}, {{0, 1, 1}, {1, 2, 1}});
  CHECK_FALSE(one_way.irreducible());
  auto zero_rate = build_chain({"a", "b"}, {{0, 1, 1}, {1, 0, 0}});
  CHECK_FALSE(zero_rate.irreducible());
  CHECK(zero_rate.num_transitions() == 1);
  CHECK_THROWS_AS(stationary(one_way), Error);
}

TEST_CASE("time scale multiplies rates") {
  auto c = build_chain({"a", "b"}, {{0, 1, 1.0}, {1, 0, 3.0}}, 10.0);
  CHECK(c.rate(0, 1) == 10.0);
  CHECK(c.holding(1) == 30.0);
  CHECK(c.supplied_entries()[1].rate == 3.0);
}

TEST_CASE("holding equals row sum on random chains") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    auto c = oracle::random_chain(9, rng);
    for (Index i = 0; i < c.size(); ++i) {
      double s = 0.0;
      for (double r : c.row(i).rates) s += r;
      CHECK(std::abs(c.holding(i) - s) <= 1e-12 * s);
    }
  }
}

TEST_CASE("stationary examples") {
  auto m = stationary(two_state());
  CHECK(m[0] == doctest::Approx(0.5).epsilon(1e-14));

  // zero-range L=2, N=2, alpha=1: states (2,0),(1,1),(0,2)
  auto zr = build_chain({"2,0", "1,1", "0,2"},
                        {{0, 1, 1.0}, {1, 0, 0.5}, {1, 2, 0.5}, {2, 1, 1.0}});
  auto ref = oracle::null_stationary(oracle::generator(zr));
  auto mz = stationary(zr);
  for (int i = 0; i < 3; ++i) CHECK(mz[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  CHECK(mz[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(mz[1] == doctest::Approx(0.5).epsilon(1e-12));

  auto bd = build_chain(numbered_states(3), {{0, 1, 2}, {1, 2, 2}, {1, 0, 1}, {2, 1, 1}});
  auto mb = stationary(bd);
  CHECK(mb[0] == doctest::Approx(1.0 / 7).epsilon(1e-12));
  CHECK(mb[1] == doctest::Approx(2.0 / 7).epsilon(1e-12));
  CHECK(mb[2] == doctest::Approx(4.0 / 7).epsilon(1e-12));
}

TEST_CASE("stationary matches oracles on random chains") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 30; ++rep) {
    auto c = oracle::random_chain(3 + rep % 10, rng, 0.3);
    auto mu = stationary(c);
    auto q = oracle::generator(c);
    auto ref = oracle::null_stationary(q);
    double total = 0.0;
    for (Index i = 0; i < c.size(); ++i) {
      CHECK(std::abs(mu[i] - ref[i]) < 1e-10);
      total += mu[i];
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
    CHECK(stationarity_residual(c, mu.weights()) <= 1e-10 * c.max_holding());
  }
}

TEST_CASE("transient distribution") {
  auto c = two_state();
  auto d = Measure::dirac(2, 0);
  auto same = transient_distribution(c, d, 0.0);
  CHECK(same[0] == 1.0);
  auto far = transient_distribution(c, d, 40.0);
  CHECK(std::abs(far[0] - 0.5) < 1e-10);

  auto cyc = cycle3();
  auto p = oracle::expm(oracle::generator(cyc) * 0.1);
  auto m = transient_distribution(cyc, Measure::dirac(3, 0), 0.1);
  for (int j = 0; j < 3; ++j) CHECK(std::abs(m[j] - p(0, j)) < 1e-9);
}

TEST_CASE("uniformization agrees with dense exponential on random chains") {
  std::mt19937_64 rng(17);
  for (int rep = 0; rep < 20; ++rep) {
    auto c = oracle::random_chain(2 + rep % 12, rng);
    const double t = 0.05 + 0.4 * rep;
    auto p = oracle::expm(oracle::generator(c) * t);
    std::vector<double> f(c.size());
    for (Index i = 0; i < c.size(); ++i) f[i] = std::sin(1.0 + i);
    auto back = evolve_backward(c, f, t);
    Eigen::VectorXd ref = p * oracle::to_vec(f);
    for (Index i = 0; i < c.size(); ++i) CHECK(std::abs(back[i] - ref[i]) < 1e-9);
    auto m = transient_distribution(c, Measure::uniform(c.size()), t);
    Eigen::RowVectorXd u = Eigen::RowVectorXd::Constant(c.size(), 1.0 / c.size());
    Eigen::RowVectorXd fwd = u * p;
    for (Index i = 0; i < c.size(); ++i) CHECK(std::abs(m[i] - fwd[i]) < 1e-9);
  }
}

TEST_CASE("Chapman-Kolmogorov and stationarity fixed point") {
  std::mt19937_64 rng(23);
  for (int rep = 0; rep < 15; ++rep) {
    auto c = oracle::random_chain(6, rng);
    auto init = Measure::dirac(c.size(), rep % c.size());
    const double s = 0.3 + 0.1 * rep, t = 0.7;
    auto direct = transient_distribution(c, init, s + t);
    auto two = transient_distribution(c, transient_distribution(c, init, s), t);
    CHECK(tv_distance(direct, two) < 1e-9);
    auto mu = stationary(c);
    for (double u : {0.1, 1.0, 10.0}) CHECK(tv_distance(transient_distribution(c, mu, u), mu) <= 1e-9);
  }
}

TEST_CASE("NonconvergentSeries guard") {
  auto c = build_chain({"a", "b"}, {{0, 1, 1e6}, {1, 0, 1e6}});
  try {
    transient_distribution(c, Measure::dirac(2, 0), 1e3);
    FAIL("expected NonconvergentSeries");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonconvergentSeries);
  }
}

TEST_CASE("absorbing evolution gives hitting probabilities") {
  auto c = two_state(2.0, 1.0);
  auto h = hitting_probability_by(c, {1}, 0.8);
  CHECK(h[1] == 1.0);
  CHECK(h[0] == doctest::Approx(1.0 - std::exp(-1.6)).epsilon(1e-12));
}

TEST_CASE("total variation") {
  CHECK(tv_distance(Measure::dirac(2, 0), Measure::dirac(2, 1)) == 1.0);
  auto mu = Measure::from_weights({0.7, 0.3});
  CHECK(tv_distance(mu, mu) == 0.0);
  CHECK(tv_distance(mu, Measure::uniform(2)) == doctest::Approx(0.2).epsilon(1e-14));
  CHECK_THROWS_AS(tv_distance(mu, Measure::uniform(3)), Error);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> a(6), b(6), c(6);
    for (int i = 0; i < 6; ++i) a[i] = u(rng), b[i] = u(rng), c[i] = u(rng);
    auto ma = Measure::from_weights(a), mb = Measure::from_weights(b), mc = Measure::from_weights(c);
    CHECK(tv_distance(ma, mb) == tv_distance(mb, ma));
    CHECK(tv_distance(ma, mc) <= tv_distance(ma, mb) + tv_distance(mb, mc) + 1e-15);
    double pos = 0.0;
    for (int i = 0; i < 6; ++i) pos += std::max(0.0, ma[i] - mb[i]);
    CHECK(std::abs(pos - tv_distance(ma, mb)) <= 1e-14);
  }
}

TEST_CASE("occupation time") {
  auto c = two_state();
  auto d = Measure::dirac(2, 0);
  CHECK(occupation_time(c, d, {0, 1}, 2.5) == 2.5);
  CHECK(occupation_time(c, d, {}, 2.5) == 0.0);
  for (double t : {0.01, 1.0, 7.0}) {
    const double exact = t / 2 - (1 - std::exp(-2 * t)) / 4;
    CHECK(std::abs(occupation_time(c, d, {1}, t) - exact) <= 1e-8 * t);
  }

  std::mt19937_64 rng(29);
  for (int rep = 0; rep < 6; ++rep) {
    auto rc = oracle::random_chain(5, rng);
    auto a = oracle::random_subset(5, 2, rng);
    auto init = Measure::dirac(5, rep % 5);
    const double t = 0.5 + rep;
    auto comp = complement(a, 5);
    const double x = occupation_time(rc, init, a, t);
    CHECK(std::abs(x + occupation_time(rc, init, comp, t) - t) <= 1e-8 * t);
    auto integrand = [&](double s) {
      auto m = transient_distribution(rc, init, s);
      return m.mass(a);
    };
    CHECK(std::abs(x - oracle::simpson(integrand, 0.0, t, 1e-11)) <= 1e-8 * t);
  }
}

TEST_CASE("measures") {
  auto m = Measure::from_log_weights({-1000.0, -1000.0 + std::log(3.0)});
  CHECK(m[0] == doctest::Approx(0.25));
  REQUIRE(m.log_weights());
  CHECK(std::exp((*m.log_weights())[1]) == doctest::Approx(0.75));
  auto cond = Measure::from_weights({1, 2, 3, 4}).conditioned({1, 3});
  CHECK(cond[1] == doctest::Approx(1.0 / 3));
  CHECK(cond[0] == 0.0);
  auto res = Measure::from_weights({1, 2, 3, 4}).restricted({1, 3});
  CHECK(res.size() == 2);
  CHECK(res[1] == doctest::Approx(2.0 / 3));
}

TEST_CASE("json and csv round trips") {
  auto c = build_chain({"x,1", "y\"2", "z"}, {{0, 1, 0.1}, {1, 2, 1.0 / 3}, {2, 0, 7e-9}}, 2.5);
  auto back = chain_from_json(nlohmann::json::parse(to_json(c).dump()));
  CHECK(back.keys() == c.keys());
  CHECK(back.time_scale() == 2.5);
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 3; ++j) CHECK(back.rate(i, j) == c.rate(i, j));

  Trajectory path;
  path.records = {{0, 0.0, 0.1}, {1, 0.1, 1.0 / 3}, {2, 1.0 / 3, 2.0}};
  path.horizon = 2.0;
  path.validate();
  auto csv = trajectory_to_csv(path, c);
  auto again = trajectory_from_csv(csv, c);
  REQUIRE(again.records.size() == 3);
  CHECK(again.records[1].exit == 1.0 / 3);
  CHECK(again.records[0].state == 0);
  CHECK(again.state_at(0.2) == 1);

  Trajectory bad;
  bad.records = {{0, 0.0, 1.0}, {0, 1.0, 2.0}};
  CHECK_THROWS_AS(bad.validate(), Error);
}
