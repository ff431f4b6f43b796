#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/SparseCholesky>

#include "detail/sparse.hpp"
#include "metastab/potential.hpp"

namespace metastab {

namespace {

// Additive symmetrization of -Q in L2(mu), conjugated by sqrt(mu).
detail::SparseMatrix symmetrized(const Chain& chain, const Measure& mu) {
  const std::size_t n = chain.size();
  std::vector<double> root(n);
  for (Index i = 0; i < n; ++i) root[i] = std::sqrt(mu[i]);
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(2 * chain.num_transitions() + n);
  for (Index i = 0; i < n; ++i) {
    t.emplace_back(i, i, chain.holding(i));
    const auto row = chain.row(i);
    for (std::size_t m = 0; m < row.targets.size(); ++m) {
      const Index j = row.targets[m];
      const double v = -0.5 * row.rates[m] * root[i] / root[j];
      t.emplace_back(i, j, v);
      t.emplace_back(j, i, v);
    }
  }
  detail::SparseMatrix s(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  s.setFromTriplets(t.begin(), t.end());
  s.makeCompressed();
  return s;
}

double dense_gap(const detail::SparseMatrix& s) {
  const Eigen::MatrixXd d(s);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(d, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) fail(ErrorCode::Internal, "eigensolver did not converge");
  return es.eigenvalues()[1];
}

// Shift-invert block subspace iteration with sqrt(mu) deflated.
double iterative_gap(const detail::SparseMatrix& s, const Measure& mu, std::string& note) {
  const Eigen::Index n = s.rows();
  double mean_diag = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) mean_diag += s.coeff(i, i);
  mean_diag /= static_cast<double>(n);
  const double shift = 1e-9 * mean_diag;
  detail::SparseMatrix shifted = s;
  for (Eigen::Index i = 0; i < n; ++i) shifted.coeffRef(i, i) += shift;
  Eigen::SimplicialLDLT<detail::SparseMatrix> ldlt(shifted);
  if (ldlt.info() != Eigen::Success) fail(ErrorCode::Internal, "factorization of shifted operator failed");

  detail::Vector ground(n);
  for (Eigen::Index i = 0; i < n; ++i) ground[i] = std::sqrt(mu[static_cast<Index>(i)]);
  ground.normalize();

  const Eigen::Index block = std::min<Eigen::Index>(6, n - 1);
  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> gauss;
  Eigen::MatrixXd x(n, block);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < block; ++j) x(i, j) = gauss(rng);

  auto deflate_orthonormalize = [&](Eigen::MatrixXd& m) {
    for (int pass = 0; pass < 2; ++pass) m -= ground * (ground.transpose() * m);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    m = qr.householderQ() * Eigen::MatrixXd::Identity(n, m.cols());
  };
  deflate_orthonormalize(x);

  double theta = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 1000; ++iter) {
    Eigen::MatrixXd y = ldlt.solve(x);
    deflate_orthonormalize(y);
    const Eigen::MatrixXd sy = s * y;
    const Eigen::MatrixXd h = y.transpose() * sy;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> small(0.5 * (h + h.transpose()));
    x = y * small.eigenvectors();
    const double next = small.eigenvalues()[0];
    const detail::Vector resid = s * x.col(0) - next * x.col(0);
    const double change = std::abs(next - theta);
    theta = next;
    if (resid.norm() <= 1e-10 * std::max(std::abs(theta), 1e-300) ||
        change <= 1e-14 * std::abs(theta)) {
      note = "shift-invert subspace iteration, " + std::to_string(iter + 1) + " iterations";
      return theta;
    }
  }
  note = "shift-invert subspace iteration did not meet tolerance";
  return theta;
}

}  // namespace

nlohmann::json to_json(const SpectralResult& r) {
  nlohmann::json j{{"gap", r.gap},
                   {"relaxation_time", r.relaxation_time},
                   {"reversible", r.reversible},
                   {"method", r.method}};
  if (r.mixing_time >= 0.0) j["mixing_time"] = r.mixing_time;
  if (!r.warning.empty()) j["warning"] = r.warning;
  return j;
}

SpectralResult spectral_gap(const Chain& chain, bool with_mixing) {
  return spectral_gap(chain, stationary(chain), with_mixing);
}

SpectralResult spectral_gap(const Chain& chain, const Measure& mu, bool with_mixing) {
  if (!chain.irreducible()) fail(ErrorCode::Reducible, "spectral gap requires an irreducible chain");
  SpectralResult r;
  r.reversible = is_reversible(chain, mu.weights());
  if (!r.reversible) r.warning = "chain is not reversible; gap of the additive symmetrization";
  if (chain.size() == 1) {
    r.gap = std::numeric_limits<double>::infinity();
    r.relaxation_time = 0.0;
    r.method = "single state";
    if (with_mixing) r.mixing_time = 0.0;
    return r;
  }
  const auto s = symmetrized(chain, mu);
  if (chain.size() <= kDenseSpectralLimit) {
    r.gap = dense_gap(s);
    r.method = "dense symmetric eigensolver";
  } else {
    r.gap = iterative_gap(s, mu, r.method);
  }
  r.relaxation_time = 1.0 / r.gap;
  if (with_mixing) {
    const auto m = mixing_time(chain, mu);
    r.mixing_time = m.time;
    if (!m.warning.empty()) r.warning += (r.warning.empty() ? "" : "; ") + m.warning;
  }
  return r;
}

// Mixing times ---------------------------------------------------------------

namespace {

class WorstTv {
 public:
  WorstTv(const Chain& chain, const Measure& mu) : chain_(chain), mu_(mu) {
    const std::size_t n = chain.size();
    if (n <= kDenseSpectralLimit && is_reversible(chain, mu.weights())) {
      const Eigen::MatrixXd d(symmetrized(chain, mu));
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(d);
      if (es.info() == Eigen::Success) {
        values_ = es.eigenvalues();
        vectors_ = es.eigenvectors();
        spectral_ = true;
      }
    }
  }

  double operator()(double t) {
    ++evaluations;
    return spectral_ ? spectral(t) : uniformized(t);
  }

  int evaluations = 0;

 private:
  double spectral(double t) const {
    const Eigen::Index n = values_.size();
    std::vector<Eigen::Index> keep;
    for (Eigen::Index k = 1; k < n; ++k)
      if (std::exp(-values_[k] * t) >= 1e-16) keep.push_back(k);
    Eigen::MatrixXd u(n, static_cast<Eigen::Index>(keep.size()));
    Eigen::MatrixXd ue(n, u.cols());
    for (Eigen::Index c = 0; c < u.cols(); ++c) {
      u.col(c) = vectors_.col(keep[static_cast<std::size_t>(c)]);
      ue.col(c) = u.col(c) * std::exp(-values_[keep[static_cast<std::size_t>(c)]] * t);
    }
    // K = U e^{-Lt} U^T; P_t(x,y) - mu(y) = sqrt(mu(y)/mu(x)) K(x,y)
    const Eigen::MatrixXd k = ue * u.transpose();
    double worst = 0.0;
    for (Eigen::Index x = 0; x < n; ++x) {
      const double rx = std::sqrt(mu_[static_cast<Index>(x)]);
      double s = 0.0;
      for (Eigen::Index y = 0; y < n; ++y)
        s += std::abs(std::sqrt(mu_[static_cast<Index>(y)]) * k(x, y));
      worst = std::max(worst, 0.5 * s / rx);
    }
    return std::min(worst, 1.0);
  }

  double uniformized(double t) const { return worst_tv(chain_, mu_, t); }

  const Chain& chain_;
  const Measure& mu_;
  bool spectral_ = false;
  Eigen::VectorXd values_;
  Eigen::MatrixXd vectors_;
};

}  // namespace

double worst_tv(const Chain& chain, const Measure& mu, double t) {
  double worst = 0.0;
  std::vector<double> start(chain.size(), 0.0);
  for (Index x = 0; x < chain.size(); ++x) {
    start[x] = 1.0;
    const auto p = evolve_forward(chain, start, t);
    start[x] = 0.0;
    worst = std::max(worst, tv_distance(p, mu.weights()));
  }
  return worst;
}

MixingResult mixing_time(const Chain& chain, double threshold) {
  return mixing_time(chain, stationary(chain), threshold);
}

MixingResult mixing_time(const Chain& chain, const Measure& mu, double threshold) {
  if (!chain.irreducible()) fail(ErrorCode::Reducible, "mixing time requires an irreducible chain");
  MixingResult r;
  if (threshold >= 1.0 || chain.size() == 1) return r;
  if (!(threshold > 0.0)) fail(ErrorCode::InvalidArgument, "threshold must be positive");

  double at_zero = 0.0;
  for (Index x = 0; x < chain.size(); ++x) at_zero = std::max(at_zero, 1.0 - mu[x]);
  if (at_zero <= threshold) return r;

  WorstTv d(chain, mu);
  bool monotone = true;
  double lo = 0.0, d_lo = at_zero;
  double hi = 1.0 / chain.max_holding();
  double d_hi = d(hi);
  while (d_hi > threshold) {
    if (d_hi > d_lo + 1e-12) monotone = false;
    lo = hi;
    d_lo = d_hi;
    hi *= 2.0;
    d_hi = d(hi);
  }
  for (int step = 0; step < 40 && hi - lo > 1e-4 * hi; ++step) {
    const double mid = 0.5 * (lo + hi);
    const double dm = d(mid);
    if (dm > d_lo + 1e-12 || dm + 1e-12 < d_hi) monotone = false;
    if (dm > threshold) {
      lo = mid;
      d_lo = dm;
    } else {
      hi = mid;
      d_hi = dm;
    }
  }
  if (!monotone) {
    r.warning = "worst-case distance is not monotone in time; linear scan used";
    const int points = 200;
    const double top = hi;
    double prev = 0.0;
    for (int k = 1; k <= points; ++k) {
      const double t = top * k / points;
      if (d(t) <= threshold) {
        lo = prev;
        hi = t;
        break;
      }
      prev = t;
    }
    for (int step = 0; step < 40 && hi - lo > 1e-4 * hi; ++step) {
      const double mid = 0.5 * (lo + hi);
      if (d(mid) > threshold) lo = mid;
      else hi = mid;
    }
  }
  r.time = hi;
  r.evaluations = d.evaluations;
  return r;
}

}  // namespace metastab
