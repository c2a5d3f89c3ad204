#pragma once

#include "cubflow/grid.hpp"
#include "cubflow/types.hpp"

#include <memory>
#include <span>
#include <variant>
#include <vector>

namespace cubflow {

struct ChebyshevBasis {};

/// Tensor Lagrange cardinal functions on the nodes of `grid`.
struct LagrangeBasis {
  std::shared_ptr<const TensorGrid> grid;
};

using Basis = std::variant<ChebyshevBasis, LagrangeBasis>;

enum class BasisKind { Chebyshev, Lagrange };

BasisKind basis_kind(const Basis& basis) noexcept;

// ---- 1-D building blocks ----

/// T_0(x) .. T_n(x) by the three-term recurrence; `out` has n+1 entries.
void chebyshev_values_1d(double x, std::span<double> out);

/// T_k(x) and T_k'(x) for k = 0..values.size()-1.
void chebyshev_values_derivatives_1d(double x, std::span<double> values, std::span<double> derivatives);

/// Barycentric weights 1 / prod_{k != j} (x_j - x_k), rescaled to max |w| = 1.
std::vector<double> barycentric_weights(std::span<const double> nodes);

/// All 1-D Lagrange cardinals at x (exact Kronecker values at nodes).
void lagrange_values_1d(std::span<const double> nodes, std::span<const double> bary, double x,
                        std::span<double> out);

/// Cardinal values and their derivatives at x.
void lagrange_values_derivatives_1d(std::span<const double> nodes, std::span<const double> bary, double x,
                                    std::span<double> values, std::span<double> derivatives);

// ---- d-dimensional basis functions ----

double chebyshev_eval(std::span<const int> alpha, std::span<const double> x);
double lagrange_eval(std::span<const int> alpha, const TensorGrid& grid, std::span<const double> x);

/// A polynomial of l-infinity degree n: coefficient vector over A_{n,d} in a
/// named basis. Value semantics; the Lagrange grid is shared read-only.
class Surrogate {
 public:
  Surrogate(Basis basis, MultiIndexSet indices, Vector coeffs);

  static Surrogate chebyshev(int n, int d, Vector coeffs);
  static Surrogate lagrange(std::shared_ptr<const TensorGrid> grid, Vector coeffs);

  const Basis& basis() const noexcept { return basis_; }
  BasisKind kind() const noexcept { return basis_kind(basis_); }
  const MultiIndexSet& index_set() const noexcept { return indices_; }
  const Vector& coeffs() const noexcept { return coeffs_; }
  int degree() const noexcept { return indices_.degree(); }
  int dim() const noexcept { return indices_.dim(); }

  double operator()(std::span<const double> x) const;
  Vector values(const PointSet& points) const;
  /// Gradient at x; `grad` has dim() entries.
  void gradient(std::span<const double> x, std::span<double> grad) const;

 private:
  // Fills per-axis basis values (and derivatives when requested).
  void axis_tables(std::span<const double> x, std::vector<double>& values, std::vector<double>* derivs) const;
  double contract(const std::vector<double>& table, int deriv_axis, const std::vector<double>* derivs) const;

  Basis basis_;
  MultiIndexSet indices_;
  Vector coeffs_;
  std::vector<double> bary_;  // Lagrange only
};

/// Lagrange interpolant on the degree-n Legendre grid: the coefficients are
/// exactly the node values h(P_n). Failures carry the node index.
Surrogate interpolate(const Field& h, int n, int d);

/// Chebyshev coefficients of h by tensor Gauss-Chebyshev quadrature with
/// quad_degree+1 points per axis. Requires quad_degree >= 2n.
Surrogate cheb_project(const Field& h, int n, int d, int quad_degree);

struct Vandermonde {
  PointSet points;
  MultiIndexSet index_set;
  Matrix matrix;  // (points) x (index_set), entry (i, alpha) = phi_alpha(p_i)

  /// 2-norm condition number (infinite when singular).
  double condition_number() const;
};

Vandermonde vandermonde(const Basis& basis, const MultiIndexSet& index_set, const PointSet& points);

/// Re-expresses s in `target`; Lagrange targets use the Legendre grid of the
/// same degree. Lagrange -> Chebyshev solves the square Vandermonde system and
/// throws NumericalError when its condition estimate exceeds 1e12.
Surrogate change_basis(const Surrogate& s, BasisKind target);

}  // namespace cubflow
