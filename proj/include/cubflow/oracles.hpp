#pragma once

#include "cubflow/basis.hpp"
#include "cubflow/manifold.hpp"
#include "cubflow/types.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace cubflow {

struct LossProblem;

/// Exact l1 distance from x to S: Point -> ||x-p||_1, L1Sphere -> | ||x-c||_1 - r |,
/// AxisHyperplane -> |x_axis - offset|.
double l1_distance(const ManifoldDescriptor& s, std::span<const double> x);

/// Gradient of l1_distance where it exists; sign(0) := 0 on kinks.
void l1_distance_gradient(const ManifoldDescriptor& s, std::span<const double> x, std::span<double> grad);

/// True when x has two distinct nearest points on S (up to `tol`). For the
/// l1 sphere this is the set of coordinate hyperplanes through the center,
/// minus S itself; points and hyperplanes have an empty medial axis.
bool on_medial_axis(const ManifoldDescriptor& s, std::span<const double> x, double tol = 1e-12);

/// A closed-form reference solution with its gradient. `breakpoints` lists,
/// per axis, coordinates where the reference is not smooth; quadrature used
/// for error measurement splits cells there.
struct ReferenceSolution {
  std::string name;
  int dim = 1;
  Field value;
  GradientField gradient;
  std::vector<std::vector<double>> breakpoints;
};

ReferenceSolution l1_distance_reference(const ManifoldDescriptor& s);

/// Manufactured Poisson data: u*, f = Laplacian(u*), g = u* on the boundary.
struct ManufacturedPoisson {
  ReferenceSolution solution;
  Field source;
  Field boundary;
};

/// Catalog: sin_pi (d=1), sin_sin (d=2), runge_source (d=1).
ManufacturedPoisson manufactured_poisson(std::string_view name);
std::vector<std::string> manufactured_catalog();

/// Reconstruction targets: every manufactured solution plus `runge`
/// (prod 1/(1+25 x_i^2)), `abs` (||x||_1) and `exp` (exp(sum x_i)) in any d.
ReferenceSolution reference_function(std::string_view name, int dim);
std::vector<std::string> reference_catalog();

/// High-degree reference for error decomposition: the direct solve of the
/// same problem at fine_degree (linear losses), or a long subgradient run
/// started from the l1-distance reconstruction (Eikonal).
Surrogate fine_reference(const LossProblem& problem, int fine_degree);

}  // namespace cubflow
