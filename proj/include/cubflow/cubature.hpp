#pragma once

#include "cubflow/grid.hpp"
#include "cubflow/types.hpp"

#include <memory>
#include <span>
#include <vector>

namespace cubflow {

inline constexpr int kDefaultMaxDiffOrder = 4;
inline constexpr std::size_t kMaxDenseNodes = 10'000;

/// Nodal differentiation matrix on distinct nodes: (D q)_i = p'(x_i) for the
/// interpolant p of q. Off-diagonals from barycentric weights; each diagonal
/// entry is minus its row's off-diagonal sum, so constants map to zero.
Matrix diff_matrix_1d(std::span<const double> nodes);

/// D^beta on a tensor grid: Kronecker product of powers of the 1-D matrix,
/// ordered like the grid's multi-index set.
Matrix diff_matrix(std::span<const int> beta, const TensorGrid& grid, int max_order = kDefaultMaxDiffOrder);

/// All beta in N^d with |beta| = sum_i beta_i <= k, in lexicographic order.
std::vector<std::vector<int>> multi_indices_up_to_order(int d, int k);

/// Discrete H^k machinery on one tensor grid: W = diag(weights), D^beta for
/// |beta| <= k, and W_k = sum_beta (D^beta)^T W D^beta. Immutable.
class CubatureOperator {
 public:
  CubatureOperator(std::shared_ptr<const TensorGrid> grid, int order);

  const TensorGrid& grid() const noexcept { return *grid_; }
  std::shared_ptr<const TensorGrid> grid_ptr() const noexcept { return grid_; }
  int order() const noexcept { return order_; }
  const Vector& weights() const noexcept { return grid_->weights(); }
  const std::vector<std::vector<int>>& betas() const noexcept { return betas_; }
  const std::vector<Matrix>& diff_matrices() const noexcept { return diffs_; }
  const Matrix& diff(std::span<const int> beta) const;
  const Matrix& sobolev_weights() const noexcept { return wk_; }

  /// Smallest eigenvalue of W_k (dense symmetric eigensolve).
  double min_eigenvalue() const;

 private:
  std::shared_ptr<const TensorGrid> grid_;
  int order_;
  std::vector<std::vector<int>> betas_;
  std::vector<Matrix> diffs_;
  Matrix wk_;
};

CubatureOperator sobolev_weight_matrix(const TensorGrid& grid, int k);
CubatureOperator sobolev_weight_matrix(std::shared_ptr<const TensorGrid> grid, int k);

/// u^T W_k u for node values u.
double sobolev_norm_sq(const Vector& u_values, const CubatureOperator& op);

/// Boundary quadrature weights times `scale` (the boundary penalty factor).
Eigen::DiagonalMatrix<double, Eigen::Dynamic> boundary_weight_matrix(const BoundaryGrid& bgrid, double scale);

}  // namespace cubflow
