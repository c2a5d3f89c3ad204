#include "cubflow/grid.hpp"

#include "cubflow/error.hpp"
#include "cubflow/tridiagonal_eigen.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace cubflow {
namespace {

// (base)^exp, saturating at max()+1 so callers can test against a cap.
std::size_t checked_power(std::size_t base, int exp) {
  constexpr auto limit = std::numeric_limits<std::size_t>::max() / 2;
  std::size_t out = 1;
  for (int i = 0; i < exp; ++i) {
    if (base != 0 && out > limit / base) return limit;
    out *= base;
  }
  return out;
}

}  // namespace

MultiIndexSet::MultiIndexSet(int n, int d) : n_(n), d_(d) {
  if (d < 1) throw InvalidArgument("multi_index_set: dimension must be >= 1");
  if (n < 0) throw InvalidArgument("multi_index_set: degree must be >= 0");
  size_ = checked_power(static_cast<std::size_t>(n) + 1, d);
  if (size_ > kDefaultMaxGridNodes * 16) throw InvalidArgument("multi_index_set: index set too large");
  flat_.resize(size_ * static_cast<std::size_t>(d));
  std::vector<int> alpha(d, 0);
  for (std::size_t pos = 0; pos < size_; ++pos) {
    std::copy(alpha.begin(), alpha.end(), flat_.begin() + static_cast<std::ptrdiff_t>(pos * d));
    for (int i = d - 1; i >= 0; --i) {
      if (++alpha[i] <= n) break;
      alpha[i] = 0;
    }
  }
}

std::size_t MultiIndexSet::position(std::span<const int> alpha) const {
  if (static_cast<int>(alpha.size()) != d_) throw InvalidArgument("MultiIndexSet::position: wrong tuple length");
  std::size_t pos = 0;
  for (int a : alpha) {
    if (a < 0 || a > n_) throw InvalidArgument("MultiIndexSet::position: entry outside [0, n]");
    pos = pos * static_cast<std::size_t>(n_ + 1) + static_cast<std::size_t>(a);
  }
  return pos;
}

MultiIndexSet multi_index_set(int n, int d) { return MultiIndexSet(n, d); }

double legendre_jacobi_offdiagonal(int i) {
  const double di = i;
  return di / std::sqrt((2.0 * di - 1.0) * (2.0 * di + 1.0));
}

QuadratureRule legendre_nodes_weights(int m) {
  if (m < 1) throw InvalidArgument("legendre_nodes_weights: need at least one node");
  std::vector<double> diag(m, 0.0);
  std::vector<double> off(m - 1);
  for (int i = 1; i < m; ++i) off[i - 1] = legendre_jacobi_offdiagonal(i);

  const auto eig = symmetric_tridiagonal_eigen(diag, off);

  QuadratureRule rule;
  rule.nodes = eig.values;
  rule.weights.resize(m);
  for (int i = 0; i < m; ++i) rule.weights[i] = 2.0 * eig.first_components[i] * eig.first_components[i];

  // Legendre rules are symmetric; enforce it exactly.
  for (int i = 0; i < m / 2; ++i) {
    const int j = m - 1 - i;
    const double x = 0.5 * (rule.nodes[j] - rule.nodes[i]);
    const double w = 0.5 * (rule.weights[i] + rule.weights[j]);
    rule.nodes[i] = -x;
    rule.nodes[j] = x;
    rule.weights[i] = rule.weights[j] = w;
  }
  if (m % 2 == 1) rule.nodes[m / 2] = 0.0;
  return rule;
}

TensorGrid tensor_grid(int n, int d, std::size_t max_nodes) {
  if (d < 1) throw InvalidArgument("tensor_grid: dimension must be >= 1");
  if (n < 0) throw InvalidArgument("tensor_grid: degree must be >= 0");
  const std::size_t count = checked_power(static_cast<std::size_t>(n) + 1, d);
  if (count > max_nodes)
    throw InvalidArgument("tensor_grid: (n+1)^d = " + std::to_string(count) + " exceeds the node cap " +
                          std::to_string(max_nodes));

  TensorGrid grid(d, n, legendre_nodes_weights(n + 1), MultiIndexSet(n, d));
  grid.nodes_.resize(static_cast<Eigen::Index>(count), d);
  grid.weights_.resize(static_cast<Eigen::Index>(count));
  for (std::size_t pos = 0; pos < count; ++pos) {
    const auto alpha = grid.indices_[pos];
    double w = 1.0;
    for (int i = 0; i < d; ++i) {
      grid.nodes_(static_cast<Eigen::Index>(pos), i) = grid.axis_.nodes[alpha[i]];
      w *= grid.axis_.weights[alpha[i]];
    }
    grid.weights_(static_cast<Eigen::Index>(pos)) = w;
  }
  return grid;
}

BoundaryGrid boundary_grid(int n, int d) {
  if (d < 1) throw InvalidArgument("boundary_grid: dimension must be >= 1");
  if (n < 0) throw InvalidArgument("boundary_grid: degree must be >= 0");

  BoundaryGrid out{d, n, {}, {}, {}};
  std::optional<TensorGrid> face_grid;
  std::size_t per_face = 1;
  if (d > 1) {
    face_grid = tensor_grid(n, d - 1);
    per_face = face_grid->size();
  }
  const auto total = static_cast<Eigen::Index>(2 * d * per_face);
  out.nodes.resize(total, d);
  out.weights.resize(total);

  std::size_t row = 0;
  for (int axis = 0; axis < d; ++axis) {
    for (int side : {-1, 1}) {
      out.faces.push_back({axis, side, face_grid, row, per_face});
      for (std::size_t k = 0; k < per_face; ++k, ++row) {
        const auto r = static_cast<Eigen::Index>(row);
        int src = 0;
        for (int i = 0; i < d; ++i) {
          if (i == axis) {
            out.nodes(r, i) = side;
          } else {
            out.nodes(r, i) = face_grid->nodes()(static_cast<Eigen::Index>(k), src++);
          }
        }
        out.weights(r) = face_grid ? face_grid->weights()(static_cast<Eigen::Index>(k)) : 1.0;
      }
    }
  }
  return out;
}

ManifoldSamples manifold_samples(const ManifoldDescriptor& descriptor, int m) {
  if (m < 1) throw InvalidArgument("manifold_samples: need at least one sample");
  const int d = descriptor.dim();
  ManifoldSamples out{{}, {}, descriptor};

  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, PointManifold>) {
          if (m != 1) throw InvalidArgument("manifold_samples: a point admits exactly one sample");
          out.points.resize(1, d);
          for (int i = 0; i < d; ++i) out.points(0, i) = s.location[i];
          out.weights = Vector::Ones(1);
        } else if constexpr (std::is_same_v<T, L1Sphere>) {
          if (d == 1) {
            if (m != 2) throw InvalidArgument("manifold_samples: a 1-D l1 sphere has exactly two points");
            out.points.resize(2, 1);
            out.points(0, 0) = s.center[0] - s.radius;
            out.points(1, 0) = s.center[0] + s.radius;
            out.weights = Vector::Ones(2);
          } else if (d == 2) {
            // Diamond with vertices c + r*(1,0), c + r*(0,1), ...; each edge has
            // length r*sqrt(2). Midpoint-offset arclength sampling.
            const double vx[5] = {1.0, 0.0, -1.0, 0.0, 1.0};
            const double vy[5] = {0.0, 1.0, 0.0, -1.0, 0.0};
            const double perimeter = 4.0 * std::sqrt(2.0) * s.radius;
            out.points.resize(m, 2);
            out.weights = Vector::Constant(m, perimeter / m);
            for (int k = 0; k < m; ++k) {
              const double t = 4.0 * (k + 0.5) / m;  // edge parameter in [0, 4)
              const int e = static_cast<int>(t);
              const double u = t - e;
              // Convex combination of adjacent vertices keeps |x|+|y| = r.
              out.points(k, 0) = s.center[0] + s.radius * ((1.0 - u) * vx[e] + u * vx[e + 1]);
              out.points(k, 1) = s.center[1] + s.radius * ((1.0 - u) * vy[e] + u * vy[e + 1]);
            }
          } else {
            throw InvalidArgument("manifold_samples: l1 spheres are supported for d <= 2");
          }
        } else {
          if (d == 1) {
            if (m != 1) throw InvalidArgument("manifold_samples: a 1-D hyperplane admits one sample");
            out.points.resize(1, 1);
            out.points(0, 0) = s.offset;
            out.weights = Vector::Ones(1);
            return;
          }
          const int q = static_cast<int>(std::lround(std::pow(m, 1.0 / (d - 1))));
          if (checked_power(static_cast<std::size_t>(q), d - 1) != static_cast<std::size_t>(m))
            throw InvalidArgument("manifold_samples: hyperplane sample count must be a perfect (d-1)-th power");
          const auto face = tensor_grid(q - 1, d - 1);
          out.points.resize(m, d);
          out.weights = face.weights();
          for (int k = 0; k < m; ++k) {
            int src = 0;
            for (int i = 0; i < d; ++i) out.points(k, i) = (i == s.axis) ? s.offset : face.nodes()(k, src++);
          }
        }
      },
      descriptor.shape());
  return out;
}

}  // namespace cubflow
