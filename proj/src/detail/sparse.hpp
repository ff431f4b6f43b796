#pragma once

// Internal Eigen helpers shared by the solvers. Not installed.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "metastab/chain.hpp"

namespace metastab::detail {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor>;
using Vector = Eigen::VectorXd;

/// Position of every state inside `subset`, or npos when absent.
inline constexpr Index npos = static_cast<Index>(-1);
std::vector<Index> positions(const StateSet& subset, std::size_t n);

/// -Q restricted to `rows` x `rows` (holding on the diagonal).
SparseMatrix negative_generator_block(const Chain& chain, const StateSet& rows);

/// R restricted to `rows` x `cols` (off-diagonal rates only).
SparseMatrix rate_block(const Chain& chain, const StateSet& rows,
                        const StateSet& cols);

/// Factorization of -Q on a subset, i.e. the Dirichlet problem with the
/// complement as boundary.
class DirichletSolver {
 public:
  DirichletSolver(const Chain& chain, StateSet interior);

  const StateSet& interior() const noexcept { return interior_; }
  /// Solves (-Q_II) x = rhs.
  Vector solve(const Vector& rhs) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const;
  /// Solves (-Q_II)^T x = rhs.
  Vector solve_transposed(const Vector& rhs) const;
  Eigen::MatrixXd solve_transposed(const Eigen::MatrixXd& rhs) const;

 private:
  StateSet interior_;
  mutable Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu_;
};

}  // namespace metastab::detail
