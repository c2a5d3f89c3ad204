#include "cubflow/basis.hpp"

#include "cubflow/error.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace cubflow {

BasisKind basis_kind(const Basis& basis) noexcept {
  return std::holds_alternative<ChebyshevBasis>(basis) ? BasisKind::Chebyshev : BasisKind::Lagrange;
}

void chebyshev_values_1d(double x, std::span<double> out) {
  if (out.empty()) return;
  out[0] = 1.0;
  if (out.size() > 1) out[1] = x;
  for (std::size_t k = 1; k + 1 < out.size(); ++k) out[k + 1] = 2.0 * x * out[k] - out[k - 1];
}

void chebyshev_values_derivatives_1d(double x, std::span<double> values, std::span<double> derivatives) {
  chebyshev_values_1d(x, values);
  if (derivatives.empty()) return;
  derivatives[0] = 0.0;
  if (derivatives.size() > 1) derivatives[1] = 1.0;
  // d/dx (2x T_k - T_{k-1}) = 2 T_k + 2x T_k' - T_{k-1}'
  for (std::size_t k = 1; k + 1 < derivatives.size(); ++k)
    derivatives[k + 1] = 2.0 * values[k] + 2.0 * x * derivatives[k] - derivatives[k - 1];
}

std::vector<double> barycentric_weights(std::span<const double> nodes) {
  const std::size_t m = nodes.size();
  std::vector<double> w(m, 1.0);
  double scale = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t k = 0; k < m; ++k) {
      if (k == j) continue;
      const double diff = nodes[j] - nodes[k];
      if (diff == 0.0) throw InvalidArgument("barycentric_weights: duplicate node " + std::to_string(nodes[j]));
      w[j] /= diff;
    }
    scale = std::max(scale, std::abs(w[j]));
  }
  for (double& v : w) v /= scale;
  return w;
}

void lagrange_values_1d(std::span<const double> nodes, std::span<const double> bary, double x,
                        std::span<double> out) {
  const std::size_t m = nodes.size();
  for (std::size_t j = 0; j < m; ++j) {
    if (x == nodes[j]) {
      std::fill(out.begin(), out.end(), 0.0);
      out[j] = 1.0;
      return;
    }
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    out[j] = bary[j] / (x - nodes[j]);
    sum += out[j];
  }
  for (std::size_t j = 0; j < m; ++j) out[j] /= sum;
}

void lagrange_values_derivatives_1d(std::span<const double> nodes, std::span<const double> bary, double x,
                                    std::span<double> values, std::span<double> derivatives) {
  const std::size_t m = nodes.size();
  for (std::size_t i = 0; i < m; ++i) {
    if (x != nodes[i]) continue;
    std::fill(values.begin(), values.end(), 0.0);
    values[i] = 1.0;
    double diag = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      derivatives[j] = (bary[j] / bary[i]) / (nodes[i] - nodes[j]);
      diag -= derivatives[j];
    }
    derivatives[i] = diag;
    return;
  }
  double s = 0.0;
  double ds = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const double inv = 1.0 / (x - nodes[j]);
    values[j] = bary[j] * inv;
    derivatives[j] = -bary[j] * inv * inv;
    s += values[j];
    ds += derivatives[j];
  }
  for (std::size_t j = 0; j < m; ++j) {
    derivatives[j] = (derivatives[j] * s - values[j] * ds) / (s * s);
    values[j] /= s;
  }
}

double chebyshev_eval(std::span<const int> alpha, std::span<const double> x) {
  if (alpha.size() != x.size()) throw InvalidArgument("chebyshev_eval: dimension mismatch");
  double out = 1.0;
  std::vector<double> t;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    t.resize(static_cast<std::size_t>(alpha[i]) + 1);
    chebyshev_values_1d(x[i], t);
    out *= t.back();
  }
  return out;
}

double lagrange_eval(std::span<const int> alpha, const TensorGrid& grid, std::span<const double> x) {
  if (static_cast<int>(alpha.size()) != grid.dim() || x.size() != alpha.size())
    throw InvalidArgument("lagrange_eval: dimension mismatch");
  const auto& nodes = grid.axis_nodes();
  const auto bary = barycentric_weights(nodes);
  std::vector<double> l(nodes.size());
  double out = 1.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    lagrange_values_1d(nodes, bary, x[i], l);
    out *= l[static_cast<std::size_t>(alpha[i])];
  }
  return out;
}

// ---- Surrogate ----

Surrogate::Surrogate(Basis basis, MultiIndexSet indices, Vector coeffs)
    : basis_(std::move(basis)), indices_(std::move(indices)), coeffs_(std::move(coeffs)) {
  if (static_cast<std::size_t>(coeffs_.size()) != indices_.size())
    throw InvalidArgument("Surrogate: coefficient count does not match the index set");
  if (const auto* lag = std::get_if<LagrangeBasis>(&basis_)) {
    if (!lag->grid) throw InvalidArgument("Surrogate: Lagrange basis without a grid");
    if (!(lag->grid->index_set() == indices_))
      throw InvalidArgument("Surrogate: Lagrange grid does not match the index set");
    bary_ = barycentric_weights(lag->grid->axis_nodes());
  }
}

Surrogate Surrogate::chebyshev(int n, int d, Vector coeffs) {
  return Surrogate(ChebyshevBasis{}, MultiIndexSet(n, d), std::move(coeffs));
}

Surrogate Surrogate::lagrange(std::shared_ptr<const TensorGrid> grid, Vector coeffs) {
  auto indices = grid->index_set();
  return Surrogate(LagrangeBasis{std::move(grid)}, std::move(indices), std::move(coeffs));
}

void Surrogate::axis_tables(std::span<const double> x, std::vector<double>& values,
                            std::vector<double>* derivs) const {
  const int d = dim();
  const auto m = static_cast<std::size_t>(degree() + 1);
  if (static_cast<int>(x.size()) != d) throw InvalidArgument("Surrogate: point has wrong dimension");
  values.assign(m * d, 0.0);
  if (derivs) derivs->assign(m * d, 0.0);
  for (int i = 0; i < d; ++i) {
    std::span<double> v(values.data() + i * m, m);
    std::span<double> dv;
    if (derivs) dv = std::span<double>(derivs->data() + i * m, m);
    if (kind() == BasisKind::Chebyshev) {
      if (derivs) chebyshev_values_derivatives_1d(x[i], v, dv);
      else chebyshev_values_1d(x[i], v);
    } else {
      const auto& nodes = std::get<LagrangeBasis>(basis_).grid->axis_nodes();
      if (derivs) lagrange_values_derivatives_1d(nodes, bary_, x[i], v, dv);
      else lagrange_values_1d(nodes, bary_, x[i], v);
    }
  }
}

double Surrogate::contract(const std::vector<double>& table, int deriv_axis,
                           const std::vector<double>* derivs) const {
  const int d = dim();
  const auto m = static_cast<std::size_t>(degree() + 1);
  double sum = 0.0;
  for (std::size_t pos = 0; pos < indices_.size(); ++pos) {
    const auto alpha = indices_[pos];
    double prod = coeffs_(static_cast<Eigen::Index>(pos));
    for (int i = 0; i < d; ++i) {
      const auto idx = i * m + static_cast<std::size_t>(alpha[i]);
      prod *= (i == deriv_axis) ? (*derivs)[idx] : table[idx];
    }
    sum += prod;
  }
  return sum;
}

double Surrogate::operator()(std::span<const double> x) const {
  std::vector<double> table;
  axis_tables(x, table, nullptr);
  return contract(table, -1, nullptr);
}

Vector Surrogate::values(const PointSet& points) const {
  Vector out(points.rows());
  for (Eigen::Index i = 0; i < points.rows(); ++i) out(i) = (*this)(point(points, i));
  return out;
}

void Surrogate::gradient(std::span<const double> x, std::span<double> grad) const {
  std::vector<double> table;
  std::vector<double> derivs;
  axis_tables(x, table, &derivs);
  for (int i = 0; i < dim(); ++i) grad[i] = contract(table, i, &derivs);
}

// ---- constructors ----

Surrogate interpolate(const Field& h, int n, int d) {
  auto grid = std::make_shared<const TensorGrid>(tensor_grid(n, d));
  Vector values(static_cast<Eigen::Index>(grid->size()));
  for (std::size_t i = 0; i < grid->size(); ++i) {
    double v = 0.0;
    try {
      v = h(grid->node(i));
    } catch (const std::exception& e) {
      throw FieldEvaluationError(i, e.what());
    }
    if (!std::isfinite(v)) throw FieldEvaluationError(i, "non-finite value");
    values(static_cast<Eigen::Index>(i)) = v;
  }
  return Surrogate::lagrange(std::move(grid), std::move(values));
}

namespace {

// Applies `op` along `axis` of a row-major tensor with the given shape.
Vector mode_product(const Vector& in, std::vector<int>& shape, int axis, const Matrix& op) {
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(shape[i]);
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i)
    inner *= static_cast<std::size_t>(shape[i]);
  const auto len = static_cast<std::size_t>(shape[axis]);
  const auto rows = static_cast<std::size_t>(op.rows());
  Vector out = Vector::Zero(static_cast<Eigen::Index>(outer * rows * inner));
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t k = 0; k < len; ++k) {
        const double a = op(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k));
        if (a == 0.0) continue;
        const auto src = (o * len + k) * inner;
        const auto dst = (o * rows + r) * inner;
        for (std::size_t t = 0; t < inner; ++t)
          out(static_cast<Eigen::Index>(dst + t)) += a * in(static_cast<Eigen::Index>(src + t));
      }
  shape[axis] = static_cast<int>(rows);
  return out;
}

}  // namespace

Surrogate cheb_project(const Field& h, int n, int d, int quad_degree) {
  if (n < 0 || d < 1) throw InvalidArgument("cheb_project: invalid degree or dimension");
  if (quad_degree < 2 * n) throw InvalidArgument("cheb_project: quad_degree must be >= 2n");
  const int m = quad_degree + 1;
  std::vector<double> x(m);
  for (int j = 0; j < m; ++j) x[j] = std::cos((2.0 * j + 1.0) * std::numbers::pi / (2.0 * m));

  const MultiIndexSet samples(m - 1, d);
  Vector values(static_cast<Eigen::Index>(samples.size()));
  std::vector<double> p(d);
  for (std::size_t pos = 0; pos < samples.size(); ++pos) {
    const auto idx = samples[pos];
    for (int i = 0; i < d; ++i) p[i] = x[idx[i]];
    double v = 0.0;
    try {
      v = h(p);
    } catch (const std::exception& e) {
      throw FieldEvaluationError(pos, e.what());
    }
    if (!std::isfinite(v)) throw FieldEvaluationError(pos, "non-finite value");
    values(static_cast<Eigen::Index>(pos)) = v;
  }

  // theta_k = (c_k / m) sum_j h(x_j) T_k(x_j), c_0 = 1, c_k = 2.
  Matrix transform(n + 1, m);
  for (int k = 0; k <= n; ++k)
    for (int j = 0; j < m; ++j)
      transform(k, j) = (k == 0 ? 1.0 : 2.0) / m * std::cos(k * (2.0 * j + 1.0) * std::numbers::pi / (2.0 * m));

  std::vector<int> shape(d, m);
  for (int axis = 0; axis < d; ++axis) values = mode_product(values, shape, axis, transform);
  return Surrogate::chebyshev(n, d, std::move(values));
}

double Vandermonde::condition_number() const {
  if (matrix.size() == 0) return 1.0;
  Eigen::JacobiSVD<Matrix> svd(matrix);
  const auto& s = svd.singularValues();
  const double smin = s(s.size() - 1);
  if (smin == 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / smin;
}

Vandermonde vandermonde(const Basis& basis, const MultiIndexSet& index_set, const PointSet& points) {
  if (points.rows() > 0 && points.cols() != index_set.dim())
    throw InvalidArgument("vandermonde: point dimension does not match the index set");
  const int d = index_set.dim();
  const auto m = static_cast<std::size_t>(index_set.degree() + 1);
  Matrix mat(points.rows(), static_cast<Eigen::Index>(index_set.size()));

  std::vector<double> bary;
  const TensorGrid* grid = nullptr;
  if (const auto* lag = std::get_if<LagrangeBasis>(&basis)) {
    grid = lag->grid.get();
    if (!grid || !(grid->index_set() == index_set))
      throw InvalidArgument("vandermonde: Lagrange grid does not match the index set");
    bary = barycentric_weights(grid->axis_nodes());
  }

  std::vector<double> table(m * d);
  for (Eigen::Index r = 0; r < points.rows(); ++r) {
    for (int i = 0; i < d; ++i) {
      std::span<double> v(table.data() + i * m, m);
      if (grid) lagrange_values_1d(grid->axis_nodes(), bary, points(r, i), v);
      else chebyshev_values_1d(points(r, i), v);
    }
    for (std::size_t pos = 0; pos < index_set.size(); ++pos) {
      const auto alpha = index_set[pos];
      double prod = 1.0;
      for (int i = 0; i < d; ++i) prod *= table[i * m + static_cast<std::size_t>(alpha[i])];
      mat(r, static_cast<Eigen::Index>(pos)) = prod;
    }
  }
  return {points, index_set, std::move(mat)};
}

Surrogate change_basis(const Surrogate& s, BasisKind target) {
  if (s.kind() == target) return s;
  const int n = s.degree();
  const int d = s.dim();
  if (target == BasisKind::Lagrange) {
    auto grid = std::make_shared<const TensorGrid>(tensor_grid(n, d));
    Vector values = vandermonde(ChebyshevBasis{}, s.index_set(), grid->nodes()).matrix * s.coeffs();
    return Surrogate::lagrange(std::move(grid), std::move(values));
  }
  const auto& grid = *std::get<LagrangeBasis>(s.basis()).grid;
  const Matrix v = vandermonde(ChebyshevBasis{}, s.index_set(), grid.nodes()).matrix;
  Eigen::PartialPivLU<Matrix> lu(v);
  const double rcond = lu.rcond();
  if (!(rcond > 1e-12))
    throw NumericalError("change_basis: Vandermonde system is ill-conditioned (rcond " + std::to_string(rcond) + ")");
  return Surrogate::chebyshev(n, d, lu.solve(s.coeffs()));
}

}  // namespace cubflow
