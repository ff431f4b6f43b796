#include "metastab/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>
#include <queue>
#include <unordered_map>

#include <Eigen/Dense>

#include "metastab/potential.hpp"

namespace metastab {

namespace {

double log_sum_exp(const std::vector<double>& v) {
  const double top = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - top);
  return top + std::log(s);
}

double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  return std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0));
}

void out_of_range(const std::string& what) { fail(ErrorCode::ParameterOutOfRange, what); }

// Merges duplicate (from, to) pairs.
std::vector<RateEntry> merged(std::vector<RateEntry> e) {
  std::sort(e.begin(), e.end(), [](const RateEntry& a, const RateEntry& b) {
    return a.from != b.from ? a.from < b.from : a.to < b.to;
  });
  std::vector<RateEntry> out;
  for (const auto& r : e) {
    if (!out.empty() && out.back().from == r.from && out.back().to == r.to) out.back().rate += r.rate;
    else out.push_back(r);
  }
  return out;
}

void well_masses(ModelInstance& m) {
  const auto mu = Measure::from_log_weights(m.log_weights);
  nlohmann::json masses = nlohmann::json::array();
  for (const auto& w : m.partition.wells()) masses.push_back(mu.mass(w));
  m.diagnostics["well_masses"] = masses;
  m.diagnostics["delta_mass"] = mu.mass(m.partition.delta());
  m.diagnostics["log_Z"] = log_sum_exp(m.log_weights);
  m.diagnostics["num_states"] = m.chain.size();
}

}  // namespace

nlohmann::json to_json(const ModelInstance& m) {
  return {{"family", m.family},         {"parameters", m.parameters},
          {"theta", m.theta},           {"theta_kind", m.theta_kind},
          {"num_states", m.chain.size()}, {"num_wells", m.partition.num_wells()},
          {"diagnostics", m.diagnostics}, {"warnings", m.warnings}};
}

// Compositions -----------------------------------------------------------------

double zero_range_g(int n, double alpha) {
  if (n <= 0) return 0.0;
  if (n == 1) return 1.0;
  return std::pow(static_cast<double>(n) / (n - 1), alpha);
}

std::vector<std::vector<int>> compositions(int n, int parts) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(static_cast<std::size_t>(parts), 0);
  // Colex: the last coordinate varies slowest.
  std::function<void(int, int)> rec = [&](int pos, int left) {
    if (pos == 0) {
      cur[0] = left;
      out.push_back(cur);
      return;
    }
    for (int v = 0; v <= left; ++v) {
      cur[static_cast<std::size_t>(pos)] = v;
      rec(pos - 1, left - v);
    }
  };
  rec(parts - 1, n);
  return out;
}

std::size_t composition_rank(const std::vector<int>& eta) {
  int left = std::accumulate(eta.begin(), eta.end(), 0);
  double rank = 0.0;
  for (std::size_t j = eta.size() - 1; j >= 1; --j) {
    // compositions of (left - v) into j parts, for v < eta_j
    for (int v = 0; v < eta[j]; ++v) rank += binomial(left - v + static_cast<int>(j) - 1, static_cast<int>(j) - 1);
    left -= eta[j];
  }
  return static_cast<std::size_t>(std::llround(rank));
}

std::string composition_key(const std::vector<int>& eta) {
  std::string s;
  for (std::size_t i = 0; i < eta.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(eta[i]);
  }
  return s;
}

namespace {

struct ParticleSpace {
  std::vector<std::vector<int>> states;
  std::vector<std::string> keys;
};

ParticleSpace particle_space(int L, int N) {
  const double count = binomial(N + L - 1, L - 1);
  if (count > static_cast<double>(kMaxModelStates)) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", count);
    fail(ErrorCode::StateSpaceTooLarge, std::string("configuration space has ") + buf +
                                            " states, above the limit of " +
                                            std::to_string(kMaxModelStates));
  }
  ParticleSpace s;
  s.states = compositions(N, L);
  s.keys.reserve(s.states.size());
  for (const auto& e : s.states) s.keys.push_back(composition_key(e));
  return s;
}

Partition condensate_partition(const ParticleSpace& s, int L, int N, int ell) {
  std::vector<StateSet> wells(static_cast<std::size_t>(L)), bottoms(static_cast<std::size_t>(L));
  for (Index i = 0; i < s.states.size(); ++i)
    for (int x = 0; x < L; ++x) {
      const int v = s.states[i][static_cast<std::size_t>(x)];
      if (v >= N - ell) wells[static_cast<std::size_t>(x)].push_back(i);
      if (v == N) bottoms[static_cast<std::size_t>(x)].push_back(i);
    }
  return Partition(s.states.size(), std::move(wells), std::move(bottoms));
}

// Nearest-neighbor jumps on the torus; both neighbors coincide when L = 2.
template <class Rate>
std::vector<RateEntry> torus_jumps(const ParticleSpace& s, int L, Rate rate) {
  std::vector<RateEntry> e;
  std::vector<int> next;
  for (Index i = 0; i < s.states.size(); ++i) {
    const auto& eta = s.states[i];
    for (int x = 0; x < L; ++x) {
      if (eta[static_cast<std::size_t>(x)] == 0) continue;
      for (int step : {1, -1}) {
        const int y = ((x + step) % L + L) % L;
        const double r = rate(eta, x, y, step);
        if (r <= 0.0) continue;
        next = eta;
        --next[static_cast<std::size_t>(x)];
        ++next[static_cast<std::size_t>(y)];
        e.push_back({i, composition_rank(next), r});
      }
    }
  }
  return merged(std::move(e));
}

}  // namespace

ModelInstance zero_range(int L, int N, double alpha, double p, int ell) {
  if (L < 2) out_of_range("zero-range needs L >= 2");
  if (N < 1) out_of_range("zero-range needs N >= 1");
  if (!(alpha > 0.0)) out_of_range("zero-range needs alpha > 0");
  if (!(p >= 0.5 && p <= 1.0)) out_of_range("zero-range needs 1/2 <= p <= 1");
  if (ell < 1 || 2 * ell >= N) out_of_range("zero-range needs 1 <= ell < N/2");
  ModelInstance m;
  m.family = "zero_range";
  m.parameters = {{"L", L}, {"N", N}, {"alpha", alpha}, {"p", p}, {"ell", ell}};
  if (alpha <= 1.0) m.warnings.push_back("alpha <= 1 is outside the condensing regime alpha > 1");

  const auto space = particle_space(L, N);
  auto entries = torus_jumps(space, L, [&](const std::vector<int>& eta, int x, int, int step) {
    return zero_range_g(eta[static_cast<std::size_t>(x)], alpha) * (step == 1 ? p : 1.0 - p);
  });
  m.theta = std::pow(static_cast<double>(N), 1.0 + alpha);
  m.chain = build_chain(space.keys, std::move(entries), m.theta);
  m.log_weights.reserve(space.states.size());
  for (const auto& eta : space.states) {
    double lw = 0.0;
    for (int v : eta)
      if (v > 0) lw -= alpha * std::log(static_cast<double>(v));
    m.log_weights.push_back(lw);
  }
  m.partition = condensate_partition(space, L, N, ell);
  well_masses(m);
  return m;
}

ModelInstance inclusion(int L, int N, double d) {
  if (L < 2) out_of_range("inclusion needs L >= 2");
  if (N < 1) out_of_range("inclusion needs N >= 1");
  if (!(d > 0.0) || !std::isfinite(d)) out_of_range("inclusion needs d > 0");
  ModelInstance m;
  m.family = "inclusion";
  m.parameters = {{"L", L}, {"N", N}, {"d", d}};
  if (N > 1 && d * std::log(static_cast<double>(N)) >= 1.0)
    m.warnings.push_back("d log N is not small; outside the condensing regime");

  const auto space = particle_space(L, N);
  auto entries = torus_jumps(space, L, [&](const std::vector<int>& eta, int x, int y, int) {
    return eta[static_cast<std::size_t>(x)] * (d + eta[static_cast<std::size_t>(y)]);
  });
  m.theta = 1.0 / d;
  m.chain = build_chain(space.keys, std::move(entries), m.theta);
  const double lg_d = std::lgamma(d);
  for (const auto& eta : space.states) {
    double lw = 0.0;
    for (int k : eta) lw += std::lgamma(k + d) - std::lgamma(k + 1.0) - lg_d;
    m.log_weights.push_back(lw);
  }
  std::vector<StateSet> wells(static_cast<std::size_t>(L));
  for (Index i = 0; i < space.states.size(); ++i)
    for (int x = 0; x < L; ++x)
      if (space.states[i][static_cast<std::size_t>(x)] == N) wells[static_cast<std::size_t>(x)].push_back(i);
  auto bottoms = wells;
  m.partition = Partition(space.states.size(), std::move(wells), std::move(bottoms));
  well_masses(m);
  return m;
}

// Potential field ------------------------------------------------------------------

PotentialField builtin_potential(const std::string& name) {
  PotentialField f;
  f.name = name;
  auto dw = [](double x) { return (x * x - 1.0) * (x * x - 1.0); };
  if (name == "double_well_1d") {
    f.dim = 1;
    f.lower = {-1.6};
    f.upper = {1.6};
    f.f = [dw](const std::vector<double>& x) { return dw(x[0]); };
    f.minima = {{-1.0}, {1.0}};
    f.saddle = std::vector<double>{0.0};
  } else if (name == "double_well_2d") {
    f.dim = 2;
    f.lower = {-1.6, -1.0};
    f.upper = {1.6, 1.0};
    f.f = [dw](const std::vector<double>& x) { return dw(x[0]) + x[1] * x[1]; };
    f.minima = {{-1.0, 0.0}, {1.0, 0.0}};
    f.saddle = std::vector<double>{0.0, 0.0};
  } else if (name == "flat_1d" || name == "flat_2d") {
    f.dim = name == "flat_1d" ? 1 : 2;
    f.lower.assign(static_cast<std::size_t>(f.dim), -1.0);
    f.upper.assign(static_cast<std::size_t>(f.dim), 1.0);
    f.f = [](const std::vector<double>&) { return 0.0; };
  } else {
    out_of_range("unknown built-in potential '" + name + "'");
  }
  return f;
}

namespace {

struct Lattice {
  int N = 1;
  std::vector<int> lo, hi;  // inclusive integer ranges per coordinate
  std::size_t size = 1;

  Lattice(const PotentialField& f, int n) : N(n) {
    if (f.dim < 1 || f.lower.size() != static_cast<std::size_t>(f.dim) ||
        f.upper.size() != static_cast<std::size_t>(f.dim))
      out_of_range("potential box does not match its dimension");
    for (int j = 0; j < f.dim; ++j) {
      const double a = f.lower[static_cast<std::size_t>(j)] * N, b = f.upper[static_cast<std::size_t>(j)] * N;
      int l = static_cast<int>(std::floor(a)) + 1, h = static_cast<int>(std::ceil(b)) - 1;
      if (h < l) out_of_range("potential box contains no lattice points");
      lo.push_back(l);
      hi.push_back(h);
      size *= static_cast<std::size_t>(h - l + 1);
      if (size > kMaxModelStates) fail(ErrorCode::StateSpaceTooLarge, "potential lattice is too large");
    }
  }
  std::size_t dim() const { return lo.size(); }
  bool inside(const std::vector<int>& k) const {
    for (std::size_t j = 0; j < k.size(); ++j)
      if (k[j] < lo[j] || k[j] > hi[j]) return false;
    return true;
  }
  Index index(const std::vector<int>& k) const {
    Index i = 0;
    for (std::size_t j = 0; j < k.size(); ++j) i = i * static_cast<Index>(hi[j] - lo[j] + 1) + static_cast<Index>(k[j] - lo[j]);
    return i;
  }
  std::vector<int> point(Index i) const {
    std::vector<int> k(dim());
    for (std::size_t j = dim(); j-- > 0;) {
      const auto w = static_cast<Index>(hi[j] - lo[j] + 1);
      k[j] = lo[j] + static_cast<int>(i % w);
      i /= w;
    }
    return k;
  }
  std::vector<double> coords(const std::vector<int>& k) const {
    std::vector<double> x(k.size());
    for (std::size_t j = 0; j < k.size(); ++j) x[j] = static_cast<double>(k[j]) / N;
    return x;
  }
  template <class Visit>
  void neighbors(const std::vector<int>& k, Visit visit) const {
    auto n = k;
    for (std::size_t j = 0; j < k.size(); ++j)
      for (int s : {1, -1}) {
        n[j] = k[j] + s;
        if (inside(n)) visit(index(n), j, s);
        n[j] = k[j];
      }
  }
};

Index nearest_point(const Lattice& lat, const std::vector<double>& x) {
  std::vector<int> k(lat.dim());
  for (std::size_t j = 0; j < k.size(); ++j)
    k[j] = std::clamp(static_cast<int>(std::lround(x[j] * lat.N)), lat.lo[j], lat.hi[j]);
  return lat.index(k);
}

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t i) {
  while (parent[i] != i) i = parent[i] = parent[parent[i]];
  return i;
}

double hessian_det(const PotentialField& field, const Lattice& lat, const std::vector<double>& values,
                   const std::vector<double>& at) {
  const std::size_t d = lat.dim();
  Eigen::MatrixXd h(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  std::function<double(std::vector<double>)> f;
  double step;
  if (field.f) {
    f = field.f;
    step = 1e-4;
  } else {
    f = [&](std::vector<double> x) { return values[nearest_point(lat, x)]; };
    step = 1.0 / lat.N;
  }
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) {
      auto x = at;
      auto v = [&](double sa, double sb) {
        auto y = x;
        y[a] += sa * step;
        y[b] += sb * step;
        return f(y);
      };
      h(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
          (v(1, 1) - v(1, -1) - v(-1, 1) + v(-1, -1)) / (4 * step * step);
    }
  return h.determinant();
}

}  // namespace

PotentialChain potential_walk_chain(const PotentialField& field, int N) {
  if (N < 1) out_of_range("potential walk needs N >= 1");
  const Lattice lat(field, N);
  PotentialChain out;
  out.points.reserve(lat.size);
  out.values.reserve(lat.size);
  if (!field.f && field.values.size() != lat.size)
    out_of_range("potential has " + std::to_string(field.values.size()) + " values for " +
                 std::to_string(lat.size) + " lattice points");
  std::vector<std::string> keys;
  for (Index i = 0; i < lat.size; ++i) {
    auto k = lat.point(i);
    out.values.push_back(field.f ? field.f(lat.coords(k)) : field.values[i]);
    keys.push_back(composition_key(k));
    out.points.push_back(std::move(k));
  }
  std::vector<RateEntry> e;
  const double half = 0.5 * N;
  for (Index i = 0; i < lat.size; ++i)
    lat.neighbors(out.points[i], [&](Index j, std::size_t, int) {
      e.push_back({i, j, std::exp(-half * (out.values[j] - out.values[i]))});
    });
  out.chain = build_chain(std::move(keys), std::move(e));
  return out;
}

ModelInstance potential_walk(const PotentialField& field, int N, double kappa) {
  if (!(kappa > 0.0)) out_of_range("potential walk needs kappa > 0");
  auto base = potential_walk_chain(field, N);
  const Lattice lat(field, N);
  const auto& F = base.values;
  const std::size_t n = F.size();
  ModelInstance m;
  m.family = "potential_walk";
  m.parameters = {{"potential", field.name}, {"N", N}, {"kappa", kappa}, {"dim", field.dim}};

  // Boundary: F must increase towards every missing neighbor.
  for (Index i = 0; i < n; ++i) {
    const auto& k = base.points[i];
    for (std::size_t j = 0; j < k.size(); ++j)
      for (int s : {1, -1}) {
        auto out = k, in = k;
        out[j] += s;
        in[j] -= s;
        if (lat.inside(out) || !lat.inside(in)) continue;
        if (!(F[i] > F[lat.index(in)]))
          fail(ErrorCode::NonSmoothBoundary,
               "potential does not increase towards the boundary at lattice point (" +
                   composition_key(k) + ")/N");
      }
  }

  // Minima.
  std::vector<Index> minima;
  std::vector<std::vector<double>> centers;
  if (!field.minima.empty()) {
    if (field.minima.size() != 2) out_of_range("exactly two minima must be declared");
    for (const auto& x : field.minima) {
      if (x.size() != lat.dim()) out_of_range("declared minimum has the wrong dimension");
      minima.push_back(nearest_point(lat, x));
      centers.push_back(x);
    }
  } else {
    std::vector<Index> local;
    for (Index i = 0; i < n; ++i) {
      bool is_min = true;
      lat.neighbors(base.points[i], [&](Index j, std::size_t, int) {
        if (F[j] <= F[i]) is_min = false;
      });
      if (is_min) local.push_back(i);
    }
    if (local.size() < 2) fail(ErrorCode::SaddleNotFound, "fewer than two strict local minima on the lattice");
    std::sort(local.begin(), local.end(), [&](Index a, Index b) { return F[a] < F[b]; });
    if (local.size() > 2) m.warnings.push_back(std::to_string(local.size()) + " local minima found; the two deepest are used");
    minima = {std::min(local[0], local[1]), std::max(local[0], local[1])};
    for (Index i : minima) centers.push_back(lat.coords(base.points[i]));
  }
  if (minima[0] == minima[1]) fail(ErrorCode::SaddleNotFound, "both minima map to one lattice point");

  // Communication height between the minima.
  double H;
  if (field.saddle) {
    if (field.saddle->size() != lat.dim()) out_of_range("declared saddle has the wrong dimension");
    H = field.f ? field.f(*field.saddle) : F[nearest_point(lat, *field.saddle)];
  } else {
    std::vector<Index> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](Index a, Index b) { return F[a] < F[b]; });
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::vector<char> added(n, 0);
    H = std::numeric_limits<double>::quiet_NaN();
    for (Index i : order) {
      added[i] = 1;
      lat.neighbors(base.points[i], [&](Index j, std::size_t, int) {
        if (added[j]) parent[find_root(parent, i)] = find_root(parent, j);
      });
      if (find_root(parent, minima[0]) == find_root(parent, minima[1])) {
        H = F[i];
        break;
      }
    }
    if (std::isnan(H)) fail(ErrorCode::SaddleNotFound, "minima are not connected on the lattice");
  }
  const double f1 = field.f ? field.f(centers[0]) : F[minima[0]];
  const double f2 = field.f ? field.f(centers[1]) : F[minima[1]];
  const double h = std::min(f1, f2);
  if (std::abs(f1 - f2) > 1e-9 * std::max(1.0, std::abs(h)))
    m.warnings.push_back("minima have unequal depths");
  if (!(H > h)) fail(ErrorCode::SaddleNotFound, "saddle height does not exceed the minima");

  m.theta = 2.0 * std::numbers::pi * N * std::exp((H - h) * N);
  m.chain = build_chain(base.chain.keys(), base.chain.supplied_entries(), m.theta);
  for (double v : F) m.log_weights.push_back(-N * v);

  std::vector<StateSet> wells(2);
  double sup_f = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < n; ++i) {
    const auto x = lat.coords(base.points[i]);
    for (std::size_t w = 0; w < 2; ++w) {
      double r2 = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) r2 += (x[j] - centers[w][j]) * (x[j] - centers[w][j]);
      if (r2 < kappa * kappa) {
        wells[w].push_back(i);
        sup_f = std::max(sup_f, F[i]);
      }
    }
  }
  std::vector<StateSet> bottoms{{minima[0]}, {minima[1]}};
  for (std::size_t w = 0; w < 2; ++w)
    if (!contains(wells[w], minima[w])) out_of_range("kappa is too small to contain the lattice minimum");
  m.partition = Partition(n, std::move(wells), std::move(bottoms));
  if (!(sup_f < H)) m.warnings.push_back("kappa is not small enough: sup of F on the wells reaches the saddle height");

  const double log_z = log_sum_exp(m.log_weights);
  const double ratio = std::exp(log_z + N * h - 0.5 * field.dim * std::log(2.0 * std::numbers::pi * N));
  double hess = 0.0;
  for (const auto& c : centers) hess += 1.0 / std::sqrt(hessian_det(field, lat, F, c));
  well_masses(m);
  m.diagnostics["log_Z"] = log_z;
  m.diagnostics["h"] = h;
  m.diagnostics["H"] = H;
  m.diagnostics["minima"] = {base.chain.key(minima[0]), base.chain.key(minima[1])};
  m.diagnostics["partition_ratio"] = ratio;
  m.diagnostics["hessian_sum"] = hess;
  m.diagnostics["partition_relative_error"] = std::abs(ratio - hess) / hess;
  return m;
}

// Singular graph --------------------------------------------------------------------

ModelInstance singular_graph(int N, int d, int ell, int M, bool compute_theta) {
  if (d < 2) out_of_range("singular graph needs d >= 2");
  if (N < 4) out_of_range("singular graph needs N >= 4");
  if (ell < 1 || M < 1 || 2 * M > N) out_of_range("singular graph needs ell >= 1 and 1 <= M <= N/2");
  const double count = 4.0 * std::pow(N + 1.0, d) - 4.0;
  if (count > static_cast<double>(kMaxModelStates))
    fail(ErrorCode::StateSpaceTooLarge, "singular graph has too many states");

  ModelInstance m;
  m.family = "singular_graph";
  m.parameters = {{"N", N}, {"d", d}, {"ell", ell}, {"M", M}};
  if (!(ell < M && 2 * M < N)) m.warnings.push_back("parameters are outside the regime ell << M << N");

  const auto du = static_cast<std::size_t>(d);
  const std::vector<std::vector<int>> w{{0, N}, {N, 0}, {0, -N}, {-N, 0}};
  const int base = 3 * N + 1;
  auto pack = [&](const std::vector<int>& p) {
    std::uint64_t c = 0;
    for (int v : p) c = c * static_cast<std::uint64_t>(base) + static_cast<std::uint64_t>(v + N);
    return c;
  };
  std::unordered_map<std::uint64_t, Index> index;
  std::vector<std::vector<int>> points;
  std::vector<std::vector<int>> cubes;  // cube labels per state
  std::vector<int> p(du);
  for (int x = 0; x < 4; ++x) {
    const int sign = x % 2 == 0 ? 1 : -1;
    std::vector<int> u(du, 0);
    while (true) {
      for (std::size_t j = 0; j < du; ++j) {
        const int shift = j < 2 ? w[static_cast<std::size_t>(x)][j] : 0;
        p[j] = shift + (j < 2 ? u[j] : sign * u[j]);
      }
      const auto key = pack(p);
      auto it = index.find(key);
      if (it == index.end()) {
        index.emplace(key, points.size());
        points.push_back(p);
        cubes.push_back({x});
      } else {
        cubes[it->second].push_back(x);
      }
      std::size_t j = du;
      while (j-- > 0) {
        if (++u[j] <= N) break;
        u[j] = 0;
      }
      if (j == static_cast<std::size_t>(-1)) break;
    }
  }
  const std::size_t n = points.size();
  auto lookup = [&](const std::vector<int>& q) -> Index {
    for (int v : q)
      if (v < -N || v > 2 * N) return n;
    auto it = index.find(pack(q));
    return it == index.end() ? n : it->second;
  };

  std::vector<RateEntry> e;
  std::vector<std::string> keys;
  StateSet corners;
  for (Index i = 0; i < n; ++i) {
    keys.push_back(composition_key(points[i]));
    const bool corner = cubes[i].size() > 1;
    if (corner) corners.push_back(i);
    int missing = 0;
    auto q = points[i];
    for (std::size_t j = 0; j < du; ++j)
      for (int s : {1, -1}) {
        q[j] = points[i][j] + s;
        const Index to = lookup(q);
        q[j] = points[i][j] - s;
        const bool back = lookup(q) != n;
        q[j] = points[i][j];
        if (to == n) {
          ++missing;
          continue;
        }
        e.push_back({i, to, back ? 1.0 : 2.0});
      }
    m.log_weights.push_back(-(corner ? d - 1 : missing) * std::log(2.0));
  }
  Chain raw = build_chain(keys, e);

  // Graph distance to the corners.
  std::vector<int> dist(n, -1);
  std::queue<Index> bfs;
  for (Index c : corners) {
    dist[c] = 0;
    bfs.push(c);
  }
  while (!bfs.empty()) {
    const Index i = bfs.front();
    bfs.pop();
    for (Index j : raw.row(i).targets)
      if (dist[j] < 0) {
        dist[j] = dist[i] + 1;
        bfs.push(j);
      }
  }
  std::vector<StateSet> wells(4), bottoms(4);
  for (Index i = 0; i < n; ++i)
    if (dist[i] > ell) wells[static_cast<std::size_t>(cubes[i][0])].push_back(i);
  for (int x = 0; x < 4; ++x) {
    const int sign = x % 2 == 0 ? 1 : -1;
    std::vector<int> u(du, M);
    while (true) {
      for (std::size_t j = 0; j < du; ++j)
        p[j] = (j < 2 ? w[static_cast<std::size_t>(x)][j] + u[j] : sign * u[j]);
      const Index i = lookup(p);
      if (i == n || dist[i] <= ell)
        out_of_range("central cube is not inside well " + std::to_string(x) + "; increase M");
      bottoms[static_cast<std::size_t>(x)].push_back(i);
      std::size_t j = du;
      while (j-- > 0) {
        if (++u[j] <= N - M) break;
        u[j] = M;
      }
      if (j == static_cast<std::size_t>(-1)) break;
    }
  }
  m.partition = Partition(n, std::move(wells), std::move(bottoms));

  nlohmann::json degrees = nlohmann::json::array();
  for (Index c : corners) degrees.push_back(raw.row(c).targets.size());
  m.diagnostics["corner_degrees"] = degrees;

  if (compute_theta) {
    const auto s = spectral_gap(raw, Measure::from_log_weights(m.log_weights));
    m.theta = 1.0 / s.gap;
    m.theta_kind = "estimate";
    m.diagnostics["spectral_method"] = s.method;
  } else {
    m.theta = 1.0;
    m.theta_kind = "none";
  }
  m.chain = build_chain(std::move(keys), std::move(e), m.theta);
  well_masses(m);
  return m;
}

}  // namespace metastab
