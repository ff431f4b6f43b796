#include <doctest.h>

#include <cmath>
#include <random>

#include "metastab/potential.hpp"
#include "metastab/reductions.hpp"
#include "support/oracles.hpp"

using namespace metastab;

namespace {

Chain two_state(double ab, double ba) { return build_chain({"a", "b"}, {{0, 1, ab}, {1, 0, ba}}); }

Chain path_walk(std::size_t n, double rate = 1.0) {
  std::vector<RateEntry> e;
  for (Index i = 0; i + 1 < n; ++i) {
    e.push_back({i, i + 1, rate});
    e.push_back({i + 1, i, rate});
  }
  return build_chain(numbered_states(n), e);
}

double dense_gap_oracle(const Chain& c) {
  auto q = oracle::generator(c);
  Eigen::EigenSolver<Eigen::MatrixXd> es(-q);
  std::vector<double> re;
  for (int i = 0; i < es.eigenvalues().size(); ++i) re.push_back(es.eigenvalues()[i].real());
  std::sort(re.begin(), re.end());
  return re[1];
}

}  // namespace

TEST_CASE("two-state capacity") {
  auto r = capacity(two_state(1, 1), {0}, {1});
  CHECK(r.value == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(r.reversible);
  CHECK(r.dirichlet_upper == doctest::Approx(0.5));
  CHECK(r.thomson_lower == doctest::Approx(0.5));
  CHECK(r.equilibrium_measure[0] == doctest::Approx(1.0));
}

TEST_CASE("capacity against the Dirichlet form and symmetry") {
  std::mt19937_64 rng(61);
  for (int rep = 0; rep < 30; ++rep) {
    auto c = oracle::random_chain(8, rng, 0.4, true);
    auto a = oracle::random_subset(8, 2, rng);
    auto rest = complement(a, 8);
    StateSet b{rest[rep % rest.size()], rest[(rep + 3) % rest.size()]};
    b = make_state_set(b);
    auto ab = capacity(c, a, b);
    auto ba = capacity(c, b, a);
    CHECK(std::abs(ab.value - ba.value) <= 1e-11 * ab.value);
    CHECK(std::abs(ab.value - ab.dirichlet_upper) <= 1e-9 * ab.value);
    CHECK(ab.thomson_lower <= ab.value * (1 + 1e-9));
    CHECK(ab.value <= ab.dirichlet_upper * (1 + 1e-9));
    double s = 0.0;
    for (double e : ab.equilibrium_measure) s += e;
    CHECK(std::abs(s - 1.0) <= 1e-10);
    for (Index i : a) CHECK(ab.potential[i] == 1.0);
    for (Index i : b) CHECK(ab.potential[i] == 0.0);

    // monotonicity in the first set
    StateSet bigger = a;
    for (Index i : rest)
      if (!contains(b, i)) {
        bigger.push_back(i);
        break;
      }
    bigger = make_state_set(bigger);
    CHECK(capacity(c, bigger, b).value >= ab.value * (1 - 1e-12));
  }
}

TEST_CASE("capacity of non-reversible chains matches the hitting definition") {
  std::mt19937_64 rng(67);
  for (int rep = 0; rep < 15; ++rep) {
    auto c = oracle::random_chain(6, rng);
    auto mu = stationary(c);
    StateSet a{0}, b{3};
    auto r = capacity(c, mu, a, b);
    CHECK_FALSE(r.reversible);
    // mu(0) lambda(0) P_0[H_B < H_0^+] by one-step analysis on the jump chain
    auto interior = complement(StateSet{0, 3}, 6);
    double esc = 0.0;
    for (Index j : complement(a, 6)) {
      double v = 0.0;
      if (j != 3) {
        auto h = hitting_profile(c, j, {0, 3});
        v = h.absorb_probs[0];
      }
      esc += c.rate(0, j) * (1 - v);
    }
    CHECK(r.value == doctest::Approx(mu[0] * esc).epsilon(1e-10));
    CHECK(point_capacity(c, mu, 0, b) == doctest::Approx(r.value).epsilon(1e-10));
  }
}

TEST_CASE("Dirichlet and Thomson principles") {
  std::mt19937_64 rng(71);
  for (int rep = 0; rep < 15; ++rep) {
    auto c = oracle::random_chain(7, rng, 0.5, true);
    StateSet a{0, 1}, b{5, 6};
    auto cap = capacity(c, a, b);
    CHECK(dirichlet_bound(c, a, b, cap.potential) == doctest::Approx(cap.value).epsilon(1e-9));

    std::vector<double> cut(7, 0.0);
    for (Index i = 0; i <= 2 + rep % 3; ++i) cut[i] = 1.0;
    CHECK(dirichlet_bound(c, a, b, cut) >= cap.value * (1 - 1e-12));

    auto flow = harmonic_unit_flow(c, a, b);
    CHECK(thomson_bound(c, a, b, flow) == doctest::Approx(cap.value).epsilon(1e-9));

    Flow perturbed = flow;
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    // circulation around a triangle of edges keeps divergence zero
    bool found = false;
    for (Index x = 0; x < 7 && !found; ++x)
      for (Index y = x + 1; y < 7 && !found; ++y)
        for (Index z = y + 1; z < 7 && !found; ++z)
          if (c.rate(x, y) > 0 && c.rate(y, z) > 0 && c.rate(z, x) > 0) {
            const double eps = 0.05 + std::abs(u(rng));
            perturbed.push_back({x, y, eps});
            perturbed.push_back({y, z, eps});
            perturbed.push_back({z, x, eps});
            found = true;
          }
    if (found) CHECK(thomson_bound(c, a, b, perturbed) < cap.value);

    // unit flow along one path
    Flow path;
    std::vector<Index> parent(7, 99);
    std::vector<Index> queue{0};
    parent[0] = 0;
    for (std::size_t h = 0; h < queue.size(); ++h)
      for (Index j : c.row(queue[h]).targets)
        if (parent[j] == 99) parent[j] = queue[h], queue.push_back(j);
    Index cur = 5;
    std::vector<Index> back{cur};
    while (cur != 0) back.push_back(cur = parent[cur]);
    auto mu = stationary(c);
    double resistance = 0.0;
    for (std::size_t k = back.size() - 1; k > 0; --k) {
      path.push_back({back[k], back[k - 1], 1.0});
      resistance += 1.0 / (mu[back[k]] * c.rate(back[k], back[k - 1]));
    }
    bool passes_sets = false;
    for (std::size_t k = 1; k + 1 < back.size(); ++k)
      if (contains(a, back[k]) || contains(b, back[k])) passes_sets = true;
    if (!passes_sets) {
      const double th = thomson_bound(c, a, b, path);
      CHECK(th == doctest::Approx(1.0 / resistance));
      CHECK(th <= cap.value * (1 + 1e-12));
    }
  }
}

TEST_CASE("flow and test-function validation") {
  auto c = path_walk(4);
  CHECK_THROWS_AS(dirichlet_bound(c, {0}, {3}, std::vector<double>{0.5, 0.5, 0.5, 0.0}), Error);
  Flow bad{{0, 1, 1.0}, {1, 2, 0.5}, {2, 3, 1.0}};
  try {
    thomson_bound(c, {0}, {3}, bad);
    FAIL("expected NotAFlow");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotAFlow);
  }
  auto nr = build_chain({"a", "b", "c"}, {{0, 1, 1}, {1, 2, 1}, {2, 0, 1}});
  try {
    thomson_bound(nr, {0}, {2}, Flow{{0, 1, 1}, {1, 2, 1}});
    FAIL("expected NotReversible");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotReversible);
  }
  CHECK_THROWS_AS(capacity(c, {0, 1}, {1, 3}), Error);
}

TEST_CASE("spectral gap") {
  CHECK(spectral_gap(two_state(0.3, 1.7)).gap == doctest::Approx(2.0).epsilon(1e-12));
  std::mt19937_64 rng(73);
  for (int rep = 0; rep < 10; ++rep) {
    auto c = oracle::random_chain(9, rng, 0.4, true);
    auto r = spectral_gap(c);
    CHECK(r.reversible);
    CHECK(r.gap == doctest::Approx(dense_gap_oracle(c)).epsilon(1e-9));
  }
  auto nr = oracle::random_chain(6, rng);
  auto r = spectral_gap(nr);
  CHECK_FALSE(r.reversible);
  CHECK_FALSE(r.warning.empty());
  CHECK(r.gap > 0);
}

TEST_CASE("iterative gap on a long path") {
  const std::size_t n = 2500;
  auto c = path_walk(n);
  auto r = spectral_gap(c);
  const double exact = 2.0 - 2.0 * std::cos(M_PI / n);
  CHECK(r.method.find("subspace") != std::string::npos);
  CHECK(std::abs(r.gap - exact) <= 1e-8 * exact);
}

TEST_CASE("mixing time") {
  auto c = two_state(1, 1);
  auto m = mixing_time(c);
  CHECK(std::abs(m.time - 0.5) <= 1e-3 * 0.5);
  CHECK(mixing_time(c, 1.0).time == 0.0);
  CHECK(worst_tv(c, stationary(c), 0.3) == doctest::Approx(std::exp(-0.6) / 2).epsilon(1e-10));

  std::mt19937_64 rng(79);
  for (int rep = 0; rep < 8; ++rep) {
    auto rc = oracle::random_chain(7, rng, 0.4, true);
    auto mu = stationary(rc);
    auto t = mixing_time(rc, mu);
    CHECK(t.warning.empty());
    // spectral route agrees with direct uniformization at the answer
    CHECK(worst_tv(rc, mu, t.time) <= kMixingThreshold + 1e-9);
    CHECK(worst_tv(rc, mu, t.time * (1 - 2e-3)) > kMixingThreshold);
    auto gap = spectral_gap(rc, mu);
    double worst_log = 0.0;
    for (Index i = 0; i < rc.size(); ++i) worst_log = std::max(worst_log, std::log(1.0 / mu[i]));
    CHECK(t.time <= gap.relaxation_time * (1 + worst_log));
    for (double s : {0.1, 1.0, 3.0})
      for (Index x = 0; x < rc.size(); ++x) {
        std::vector<double> start(rc.size(), 0.0);
        start[x] = 1.0;
        auto p = evolve_forward(rc, start, s);
        CHECK(tv_distance(p, mu.weights()) <= std::exp(-gap.gap * s) / std::sqrt(mu[x]) + 1e-12);
      }
  }
  auto nr = oracle::random_chain(5, rng);
  auto mu = stationary(nr);
  auto t = mixing_time(nr, mu);
  CHECK(worst_tv(nr, mu, t.time) <= kMixingThreshold + 1e-9);
}

TEST_CASE("trace mixes no slower than the reflected bound") {
  std::mt19937_64 rng(83);
  for (int rep = 0; rep < 10; ++rep) {
    auto c = oracle::random_chain(9, rng, 0.5, true);
    auto a = oracle::random_subset(9, 5, rng);
    Chain reflected = c;
    try {
      reflected = reflected_chain(c, a);
    } catch (const Error&) {
      continue;
    }
    auto trace = trace_chain(c, a);
    auto mu_a = stationary(c).restricted(a);
    double worst_log = 0.0;
    for (Index i = 0; i < a.size(); ++i) worst_log = std::max(worst_log, std::log(1.0 / mu_a[i]));
    const double rhs = spectral_gap(reflected).relaxation_time * (1 + worst_log);
    CHECK(mixing_time(trace).time <= rhs);
  }
}

TEST_CASE("exponential clock inequality") {
  for (double theta : {0.1, 1.0, 5.0})
    for (double b : {0.01, 0.5, 3.0})
      for (double gamma : {0.2, 1.0, 10.0})
        CHECK(1 - std::exp(-theta * b) <= std::exp(gamma * b) * theta / (theta + gamma) + 1e-15);
}

TEST_CASE("hitting probability bounds") {
  std::mt19937_64 rng(89);
  std::uniform_real_distribution<double> ub(0.001, 3.0);
  for (int rep = 0; rep < 100; ++rep) {
    auto c = oracle::random_chain(6, rng, 0.4, rep % 2 == 0);
    auto mu = stationary(c);
    auto a = oracle::random_subset(6, 1 + rep % 3, rng);
    auto rest = complement(a, 6);
    const Index eta = rest[rep % rest.size()];
    const double b = ub(rng);
    auto h = hitting_prob_bound(c, mu, eta, a, b);
    const double exact = hitting_probability_by(c, a, b)[eta];
    CHECK(exact <= h.bound + 1e-12);
    CHECK(h.bound <= h.boundary_bound * (1 + 1e-12));
  }
  auto c = two_state(1, 1);
  auto mu = stationary(c);
  auto small = hitting_prob_bound(c, mu, 0, {1}, 1e-6);
  CHECK(small.bound / 1e-6 == doctest::Approx(std::exp(1.0) * 0.5 / 0.5));
  // the halved boundary form is half the dominating one
  CHECK(small.boundary_bound_halved == doctest::Approx(small.boundary_bound / 2));
  CHECK_THROWS_AS(hitting_prob_bound(c, mu, 1, {1}, 1.0), Error);
}

TEST_CASE("delta occupation bound") {
  std::mt19937_64 rng(97);
  int checked = 0;
  for (int rep = 0; rep < 100; ++rep) {
    auto c = oracle::random_chain(7, rng, 0.5, rep % 3 != 0);
    auto mu = stationary(c);
    StateSet well{0, 1, 2}, delta{3};
    DeltaBoundTerms t;
    try {
      t = delta_occupation_bound(c, mu, 1, well, delta, 0.3, 1.0 + rep * 0.05);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ReducibleReflection);
      continue;
    }
    ++checked;
    CHECK(t.exact <= t.bound + 1e-12);
  }
  CHECK(checked > 50);

  auto c = path_walk(3);
  auto mu = stationary(c);
  auto full = delta_occupation_bound(c, mu, 0, {0, 1, 2}, {}, 1.0, 2.0);
  CHECK(full.bound == doctest::Approx(full.reflected_tv));
  auto late = delta_occupation_bound(c, mu, 0, {0, 1, 2}, {}, 60.0, 61.0);
  CHECK(late.bound < 1e-6);
}
