#pragma once

#include <span>
#include <vector>

namespace cubflow {

/// Eigenvalues of a symmetric tridiagonal matrix (ascending) together with
/// the first component of each unit eigenvector. The first components are
/// all Golub-Welsch needs for quadrature weights, so the full eigenvector
/// matrix is never formed.
struct TridiagonalEigen {
  std::vector<double> values;
  std::vector<double> first_components;
};

/// Implicit-shift QL iteration. `offdiag[i]` couples rows i and i+1, so it
/// has one entry fewer than `diag`. Throws ConvergenceError when an
/// eigenvalue needs more than `max_iterations` QL sweeps.
TridiagonalEigen symmetric_tridiagonal_eigen(std::span<const double> diag,
                                             std::span<const double> offdiag,
                                             int max_iterations = 30);

}  // namespace cubflow
