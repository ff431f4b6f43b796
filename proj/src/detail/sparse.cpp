#include "detail/sparse.hpp"

#include <string>

namespace metastab::detail {

std::vector<Index> positions(const StateSet& subset, std::size_t n) {
  std::vector<Index> pos(n, npos);
  for (Index k = 0; k < subset.size(); ++k) pos[subset[k]] = k;
  return pos;
}

SparseMatrix negative_generator_block(const Chain& chain, const StateSet& rows) {
  const auto pos = positions(rows, chain.size());
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(rows.size() * 5);
  for (Index r = 0; r < rows.size(); ++r) {
    const Index i = rows[r];
    triplets.emplace_back(r, r, chain.holding(i));
    const auto row = chain.row(i);
    for (std::size_t k = 0; k < row.targets.size(); ++k) {
      const Index c = pos[row.targets[k]];
      if (c != npos) triplets.emplace_back(r, c, -row.rates[k]);
    }
  }
  SparseMatrix m(rows.size(), rows.size());
  m.setFromTriplets(triplets.begin(), triplets.end());
  return m;
}

SparseMatrix rate_block(const Chain& chain, const StateSet& rows,
                        const StateSet& cols) {
  const auto pos = positions(cols, chain.size());
  std::vector<Eigen::Triplet<double>> triplets;
  for (Index r = 0; r < rows.size(); ++r) {
    const auto row = chain.row(rows[r]);
    for (std::size_t k = 0; k < row.targets.size(); ++k) {
      const Index c = pos[row.targets[k]];
      if (c != npos) triplets.emplace_back(r, c, row.rates[k]);
    }
  }
  SparseMatrix m(rows.size(), cols.size());
  m.setFromTriplets(triplets.begin(), triplets.end());
  return m;
}

DirichletSolver::DirichletSolver(const Chain& chain, StateSet interior)
    : interior_(std::move(interior)) {
  if (interior_.empty()) return;
  SparseMatrix a = negative_generator_block(chain, interior_);
  a.makeCompressed();
  lu_.compute(a);
  if (lu_.info() != Eigen::Success) {
    fail(ErrorCode::Reducible,
         "Dirichlet problem is singular: the boundary is not reachable from "
         "every interior state");
  }
}

Vector DirichletSolver::solve(const Vector& rhs) const {
  if (interior_.empty()) return Vector();
  return lu_.solve(rhs);
}

Eigen::MatrixXd DirichletSolver::solve(const Eigen::MatrixXd& rhs) const {
  if (interior_.empty()) return Eigen::MatrixXd(0, rhs.cols());
  return lu_.solve(rhs);
}

Vector DirichletSolver::solve_transposed(const Vector& rhs) const {
  if (interior_.empty()) return Vector();
  return lu_.transpose().solve(rhs);
}

Eigen::MatrixXd DirichletSolver::solve_transposed(const Eigen::MatrixXd& rhs) const {
  if (interior_.empty()) return Eigen::MatrixXd(0, rhs.cols());
  return lu_.transpose().solve(rhs);
}

}  // namespace metastab::detail
