#include "cubflow/cubature.hpp"

#include "cubflow/basis.hpp"
#include "cubflow/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <numeric>
#include <string>

namespace cubflow {
namespace {

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

void enumerate_orders(int d, int k, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
  if (static_cast<int>(cur.size()) == d) {
    out.push_back(cur);
    return;
  }
  const int used = std::accumulate(cur.begin(), cur.end(), 0);
  for (int b = 0; b <= k - used; ++b) {
    cur.push_back(b);
    enumerate_orders(d, k, cur, out);
    cur.pop_back();
  }
}

}  // namespace

Matrix diff_matrix_1d(std::span<const double> nodes) {
  const auto m = static_cast<Eigen::Index>(nodes.size());
  const auto w = barycentric_weights(nodes);  // throws on duplicates
  Matrix d = Matrix::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    double diag = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (i == j) continue;
      d(i, j) = (w[j] / w[i]) / (nodes[i] - nodes[j]);
      diag -= d(i, j);
    }
    d(i, i) = diag;
  }
  return d;
}

Matrix diff_matrix(std::span<const int> beta, const TensorGrid& grid, int max_order) {
  if (static_cast<int>(beta.size()) != grid.dim()) throw InvalidArgument("diff_matrix: beta has wrong length");
  int order = 0;
  for (int b : beta) {
    if (b < 0) throw InvalidArgument("diff_matrix: negative derivative order");
    order += b;
  }
  if (order > max_order)
    throw InvalidArgument("diff_matrix: |beta| = " + std::to_string(order) + " exceeds max order " +
                          std::to_string(max_order));
  if (grid.size() > kMaxDenseNodes) throw InvalidArgument("diff_matrix: grid too large for dense operators");

  const Matrix d1 = diff_matrix_1d(grid.axis_nodes());
  const auto m = d1.rows();
  std::vector<Matrix> powers{Matrix::Identity(m, m)};
  auto power = [&](int p) -> const Matrix& {
    while (static_cast<int>(powers.size()) <= p) powers.push_back(d1 * powers.back());
    return powers[static_cast<std::size_t>(p)];
  };

  Matrix out = power(beta[0]);
  for (std::size_t i = 1; i < beta.size(); ++i) out = kron(out, power(beta[i]));
  return out;
}

std::vector<std::vector<int>> multi_indices_up_to_order(int d, int k) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur;
  enumerate_orders(d, k, cur, out);
  return out;
}

CubatureOperator::CubatureOperator(std::shared_ptr<const TensorGrid> grid, int order)
    : grid_(std::move(grid)), order_(order) {
  if (!grid_) throw InvalidArgument("CubatureOperator: null grid");
  if (order_ < 0) throw InvalidArgument("CubatureOperator: order must be >= 0");
  if (grid_->size() > kMaxDenseNodes) throw InvalidArgument("CubatureOperator: grid too large for dense operators");
  betas_ = multi_indices_up_to_order(grid_->dim(), order_);
  const auto n = static_cast<Eigen::Index>(grid_->size());
  wk_ = Matrix::Zero(n, n);
  const auto& w = grid_->weights();
  for (const auto& beta : betas_) {
    diffs_.push_back(diff_matrix(beta, *grid_, std::max(order_, kDefaultMaxDiffOrder)));
    const Matrix& d = diffs_.back();
    wk_.noalias() += d.transpose() * w.asDiagonal() * d;
  }
  wk_ = 0.5 * (wk_ + wk_.transpose()).eval();
}

const Matrix& CubatureOperator::diff(std::span<const int> beta) const {
  for (std::size_t i = 0; i < betas_.size(); ++i)
    if (std::equal(beta.begin(), beta.end(), betas_[i].begin(), betas_[i].end())) return diffs_[i];
  throw InvalidArgument("CubatureOperator::diff: beta not assembled in this operator");
}

double CubatureOperator::min_eigenvalue() const {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(wk_, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw ConvergenceError("CubatureOperator: eigensolve failed");
  return eig.eigenvalues()(0);
}

CubatureOperator sobolev_weight_matrix(const TensorGrid& grid, int k) {
  return CubatureOperator(std::make_shared<const TensorGrid>(grid), k);
}

CubatureOperator sobolev_weight_matrix(std::shared_ptr<const TensorGrid> grid, int k) {
  return CubatureOperator(std::move(grid), k);
}

double sobolev_norm_sq(const Vector& u_values, const CubatureOperator& op) {
  if (static_cast<std::size_t>(u_values.size()) != op.grid().size())
    throw InvalidArgument("sobolev_norm_sq: vector length does not match the grid");
  // Same value as u^T W_k u, summed blockwise so it stays non-negative.
  double sum = 0.0;
  for (const auto& d : op.diff_matrices()) {
    const Vector du = d * u_values;
    sum += du.dot(op.weights().asDiagonal() * du);
  }
  return sum;
}

Eigen::DiagonalMatrix<double, Eigen::Dynamic> boundary_weight_matrix(const BoundaryGrid& bgrid, double scale) {
  if (scale < 0.0) throw InvalidArgument("boundary_weight_matrix: scale must be >= 0");
  return Eigen::DiagonalMatrix<double, Eigen::Dynamic>(scale * bgrid.weights);
}

}  // namespace cubflow
