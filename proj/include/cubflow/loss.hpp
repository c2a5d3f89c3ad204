#pragma once

#include "cubflow/basis.hpp"
#include "cubflow/cubature.hpp"
#include "cubflow/grid.hpp"
#include "cubflow/manifold.hpp"
#include "cubflow/types.hpp"

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace cubflow {

enum class LossKind { Reconstruction, Poisson, Eikonal };

std::string to_string(LossKind kind);

/// A forward PDE learning problem at degree n in dimension d.
///   Reconstruction: ||u - h_n||^2 in discrete H^s; `interior` is h.
///   Poisson:        ||Lap u - f_n||^2 + scale * ||u - g_n||^2_{boundary}.
///   Eikonal:        sum_i w_i (||grad u(p_i)||_1 - 1)^2 + scale * sum_S w_s u(p_s)^2.
/// The boundary scale defaults to n.
struct LossProblem {
  LossKind kind = LossKind::Reconstruction;
  int degree = 0;
  int dim = 1;
  int sobolev_order = 0;
  BasisKind basis = BasisKind::Chebyshev;  // Reconstruction only; Lagrange gives V = I
  Field interior;
  Field boundary;
  std::optional<ManifoldDescriptor> manifold;
  int manifold_points = 0;  // 0 selects a default for the manifold type
  std::optional<double> boundary_scale;
  bool unsquared_eikonal = false;  // sum of square roots of the two parts

  double effective_boundary_scale() const { return boundary_scale.value_or(static_cast<double>(degree)); }
  LossProblem with_degree(int n) const;
  void validate() const;
};

LossProblem reconstruction_problem(Field h, int n, int d, int sobolev_order = 0);
LossProblem poisson_problem(Field f, Field g, int n, int d);
LossProblem eikonal_problem(ManifoldDescriptor s, int n);

struct LossEval {
  double value = 0.0;
  Vector gradient;
  std::vector<std::pair<std::string, double>> parts;

  double part(std::string_view name) const;
};

/// sigma and L bound the Hessian of the loss in theta: sigma |d|^2 <= d^T H d <= L |d|^2.
struct FlowConstants {
  double sigma = 0.0;
  double lipschitz = 0.0;
  double lipschitz_inf = 0.0;  // 2 ||A^T A||_inf, the row-sum bound
  double contraction = 1.0;    // 1 - sigma / L
};

/// Common interface of the assembled losses. Evaluation is const and
/// re-entrant, so one loss can be evaluated from several threads.
class Loss {
 public:
  virtual ~Loss() = default;

  const LossProblem& problem() const noexcept { return problem_; }
  LossKind kind() const noexcept { return problem_.kind; }
  virtual std::size_t num_params() const = 0;
  virtual LossEval evaluate(const Vector& theta) const = 0;
  virtual double value(const Vector& theta) const { return evaluate(theta).value; }
  virtual bool is_linear() const noexcept { return false; }
  /// Step-size scale: exact L for linear losses, a Hessian majorant otherwise.
  virtual double lipschitz_estimate() const = 0;
  /// Coordinates whose central difference of width h straddles a kink.
  virtual std::vector<bool> kink_mask(const Vector& theta, double h) const;
  /// The surrogate represented by theta.
  virtual Surrogate surrogate(const Vector& theta) const = 0;

 protected:
  explicit Loss(LossProblem problem) : problem_(std::move(problem)) {}
  void check_size(const Vector& theta) const;

 private:
  LossProblem problem_;
};

/// Loss of the form sum_b ||A_b theta - b_b||^2; blocks carry the square roots
/// of their quadrature weights. Gradient 2 sum_b A_b^T (A_b theta - b_b).
class LinearLeastSquaresLoss : public Loss {
 public:
  struct Block {
    std::string part;
    Matrix a;
    Vector b;
  };

  struct Assembled {
    LossProblem problem;
    std::vector<Block> blocks;
    BasisKind param_basis = BasisKind::Chebyshev;
    std::shared_ptr<const TensorGrid> grid;
    Vector target;
  };

  std::size_t num_params() const override { return num_params_; }
  LossEval evaluate(const Vector& theta) const override;
  double value(const Vector& theta) const override;
  bool is_linear() const noexcept override { return true; }
  double lipschitz_estimate() const override { return constants().lipschitz; }
  Surrogate surrogate(const Vector& theta) const override;

  const std::vector<Block>& blocks() const noexcept { return blocks_; }
  /// The half Hessian A^T A.
  Matrix normal_matrix() const;
  Vector normal_rhs() const;
  const FlowConstants& constants() const;
  /// Least-squares minimizer via column-pivoted QR of the stacked system.
  Vector solve() const;

 protected:
  LinearLeastSquaresLoss(LossProblem problem, std::vector<Block> blocks, BasisKind param_basis,
                         std::shared_ptr<const TensorGrid> grid);
  explicit LinearLeastSquaresLoss(Assembled& a)
      : LinearLeastSquaresLoss(a.problem, std::move(a.blocks), a.param_basis, a.grid) {}

 private:
  std::size_t num_params_;
  std::vector<Block> blocks_;
  BasisKind param_basis_;
  std::shared_ptr<const TensorGrid> grid_;
  mutable std::optional<FlowConstants> constants_;
  mutable std::once_flag constants_once_;
};

class ReconstructionLoss : public LinearLeastSquaresLoss {
 public:
  explicit ReconstructionLoss(const LossProblem& problem);
  /// Raw form (V theta - h)^T W_s (V theta - h) with explicit matrices.
  ReconstructionLoss(const Matrix& v, const Matrix& ws, const Vector& target);

  const Vector& target_values() const noexcept { return target_; }

 private:
  explicit ReconstructionLoss(Assembled&& a);

  Vector target_;
};

class PoissonLoss : public LinearLeastSquaresLoss {
 public:
  explicit PoissonLoss(const LossProblem& problem);

 private:
  explicit PoissonLoss(Assembled&& a);
};

class EikonalLoss : public Loss {
 public:
  explicit EikonalLoss(const LossProblem& problem);

  std::size_t num_params() const override { return grid_->size(); }
  LossEval evaluate(const Vector& theta) const override;
  double lipschitz_estimate() const override { return lipschitz_; }
  std::vector<bool> kink_mask(const Vector& theta, double h) const override;
  Surrogate surrogate(const Vector& theta) const override;

  const TensorGrid& grid() const noexcept { return *grid_; }
  const ManifoldSamples& samples() const noexcept { return samples_; }
  /// Values of u_theta at the manifold samples.
  Vector manifold_values(const Vector& theta) const { return manifold_vandermonde_ * theta; }

 private:
  std::shared_ptr<const TensorGrid> grid_;
  ManifoldSamples samples_;
  std::vector<Matrix> partials_;  // D_{x_j} T_Omega
  Matrix manifold_vandermonde_;   // T_S
  Vector manifold_weights_;       // scaled
  double lipschitz_;
};

std::unique_ptr<Loss> make_loss(const LossProblem& problem);

/// One-shot evaluations (assemble then evaluate).
LossEval reconstruction_loss(const Vector& theta, const LossProblem& problem);
LossEval poisson_loss(const Vector& theta, const LossProblem& problem);
LossEval eikonal_loss(const Vector& theta, const LossProblem& problem);

/// Exact constants for Reconstruction and Poisson problems.
FlowConstants flow_constants(const LossProblem& problem);
FlowConstants flow_constants(const Loss& loss);

/// Zero-pads Chebyshev coefficients over A_{from,d} into A_{to,d} (to >= from).
Vector embed_coefficients(const Vector& theta, const MultiIndexSet& from, const MultiIndexSet& to);

}  // namespace cubflow
