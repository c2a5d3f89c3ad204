#pragma once

#include "cubflow/manifold.hpp"
#include "cubflow/types.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace cubflow {

/// The index set {alpha in N^d : max_i alpha_i <= n} in lexicographic order
/// (first coordinate most significant). The position of a tuple is the
/// address used by every grid, Vandermonde and differentiation matrix.
class MultiIndexSet {
 public:
  MultiIndexSet(int n, int d);

  int degree() const noexcept { return n_; }
  int dim() const noexcept { return d_; }
  std::size_t size() const noexcept { return size_; }

  std::span<const int> operator[](std::size_t pos) const {
    return {flat_.data() + pos * static_cast<std::size_t>(d_), static_cast<std::size_t>(d_)};
  }
  std::size_t position(std::span<const int> alpha) const;

  friend bool operator==(const MultiIndexSet& a, const MultiIndexSet& b) {
    return a.n_ == b.n_ && a.d_ == b.d_;
  }

 private:
  int n_;
  int d_;
  std::size_t size_;
  std::vector<int> flat_;
};

MultiIndexSet multi_index_set(int n, int d);

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Off-diagonal entry of the Legendre Jacobi matrix, i/sqrt((2i-1)(2i+1)).
double legendre_jacobi_offdiagonal(int i);

/// Gauss-Legendre rule with m nodes on (-1,1) by Golub-Welsch: nodes are the
/// eigenvalues of the Jacobi matrix, weights 2*v_{1,i}^2. The result is
/// symmetrised about 0 and sorted ascending.
QuadratureRule legendre_nodes_weights(int m);

inline constexpr std::size_t kDefaultMaxGridNodes = 1'000'000;

/// Tensor-product Legendre grid of degree n ((n+1)^d nodes) on (-1,1)^d.
class TensorGrid {
 public:
  int dim() const noexcept { return dim_; }
  int degree() const noexcept { return degree_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(nodes_.rows()); }

  const PointSet& nodes() const noexcept { return nodes_; }
  std::span<const double> node(std::size_t i) const { return point(nodes_, static_cast<Eigen::Index>(i)); }
  const Vector& weights() const noexcept { return weights_; }
  const MultiIndexSet& index_set() const noexcept { return indices_; }
  /// Every axis carries the same 1-D rule.
  const std::vector<double>& axis_nodes(int /*axis*/ = 0) const noexcept { return axis_.nodes; }
  const std::vector<double>& axis_weights(int /*axis*/ = 0) const noexcept { return axis_.weights; }

 private:
  friend TensorGrid tensor_grid(int n, int d, std::size_t max_nodes);
  TensorGrid(int dim, int degree, QuadratureRule axis, MultiIndexSet indices)
      : dim_(dim), degree_(degree), axis_(std::move(axis)), indices_(std::move(indices)) {}

  int dim_;
  int degree_;
  QuadratureRule axis_;
  MultiIndexSet indices_;
  PointSet nodes_;
  Vector weights_;
};

TensorGrid tensor_grid(int n, int d, std::size_t max_nodes = kDefaultMaxGridNodes);

struct BoundaryFace {
  int axis;
  int side;  // -1 or +1
  std::optional<TensorGrid> grid;  // (d-1)-dimensional face rule; empty for d = 1
  std::size_t offset;  // first row of this face in BoundaryGrid::nodes
  std::size_t count;
};

/// Legendre rules on the 2d faces of the hypercube, flattened face by face
/// (axis 0 side -1, axis 0 side +1, axis 1 side -1, ...).
struct BoundaryGrid {
  int dim;
  int degree;
  std::vector<BoundaryFace> faces;
  PointSet nodes;
  Vector weights;

  std::size_t size() const noexcept { return static_cast<std::size_t>(nodes.rows()); }
};

BoundaryGrid boundary_grid(int n, int d);

/// Quadrature points on a manifold S with weights summing to its (d-1)-measure
/// (counting measure for 0-dimensional S).
struct ManifoldSamples {
  PointSet points;
  Vector weights;
  ManifoldDescriptor descriptor;

  std::size_t size() const noexcept { return static_cast<std::size_t>(points.rows()); }
};

ManifoldSamples manifold_samples(const ManifoldDescriptor& descriptor, int m);

}  // namespace cubflow
