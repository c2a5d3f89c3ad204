#include "cubflow/loss.hpp"

#include "cubflow/error.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <type_traits>
#include <variant>
#include <string>

namespace cubflow {
namespace {

Vector sample_field(const Field& f, const PointSet& points, const char* what) {
  if (!f) throw InvalidArgument(std::string("loss: missing ") + what + " data");
  Vector out(points.rows());
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    double v = 0.0;
    try {
      v = f(point(points, i));
    } catch (const std::exception& e) {
      throw FieldEvaluationError(static_cast<std::size_t>(i), std::string(what) + ": " + e.what());
    }
    if (!std::isfinite(v)) throw FieldEvaluationError(static_cast<std::size_t>(i), std::string(what) + ": non-finite");
    out(i) = v;
  }
  return out;
}

Matrix chebyshev_vandermonde(const MultiIndexSet& indices, const PointSet& points) {
  return vandermonde(ChebyshevBasis{}, indices, points).matrix;
}

int default_manifold_points(const ManifoldDescriptor& s, int n) {
  const int d = s.dim();
  return std::visit(
      [&](const auto& shape) -> int {
        using T = std::decay_t<decltype(shape)>;
        if constexpr (std::is_same_v<T, PointManifold>) {
          return 1;
        } else if constexpr (std::is_same_v<T, L1Sphere>) {
          return d == 1 ? 2 : 4 * (n + 1);
        } else {
          int m = 1;
          for (int i = 1; i < d; ++i) m *= n + 1;
          return m;
        }
      },
      s.shape());
}

double sign(double x) { return (x > 0.0) - (x < 0.0); }

}  // namespace

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::Reconstruction: return "reconstruction";
    case LossKind::Poisson: return "poisson";
    case LossKind::Eikonal: return "eikonal";
  }
  return "unknown";
}

LossProblem LossProblem::with_degree(int n) const {
  LossProblem out = *this;
  out.degree = n;
  return out;
}

void LossProblem::validate() const {
  if (dim < 1) throw InvalidArgument("loss problem: dimension must be >= 1");
  if (degree < 0) throw InvalidArgument("loss problem: degree must be >= 0");
  switch (kind) {
    case LossKind::Reconstruction:
      if (!interior) throw InvalidArgument("reconstruction: target function missing");
      if (sobolev_order < 0) throw InvalidArgument("reconstruction: sobolev order must be >= 0");
      break;
    case LossKind::Poisson:
      if (!interior || !boundary) throw InvalidArgument("poisson: source and boundary data required");
      if (!(effective_boundary_scale() > 0.0)) throw InvalidArgument("poisson: boundary scale must be > 0");
      break;
    case LossKind::Eikonal:
      if (!manifold) throw InvalidArgument("eikonal: manifold missing");
      if (manifold->dim() != dim) throw InvalidArgument("eikonal: manifold dimension mismatch");
      if (!(effective_boundary_scale() > 0.0)) throw InvalidArgument("eikonal: boundary scale must be > 0");
      break;
  }
}

LossProblem reconstruction_problem(Field h, int n, int d, int sobolev_order) {
  LossProblem p;
  p.kind = LossKind::Reconstruction;
  p.degree = n;
  p.dim = d;
  p.sobolev_order = sobolev_order;
  p.interior = std::move(h);
  return p;
}

LossProblem poisson_problem(Field f, Field g, int n, int d) {
  LossProblem p;
  p.kind = LossKind::Poisson;
  p.degree = n;
  p.dim = d;
  p.interior = std::move(f);
  p.boundary = std::move(g);
  return p;
}

LossProblem eikonal_problem(ManifoldDescriptor s, int n) {
  LossProblem p;
  p.kind = LossKind::Eikonal;
  p.degree = n;
  p.dim = s.dim();
  p.manifold = std::move(s);
  return p;
}

double LossEval::part(std::string_view name) const {
  for (const auto& [k, v] : parts)
    if (k == name) return v;
  return 0.0;
}

// ---- Loss ----

std::vector<bool> Loss::kink_mask(const Vector& theta, double) const {
  return std::vector<bool>(static_cast<std::size_t>(theta.size()), false);
}

void Loss::check_size(const Vector& theta) const {
  if (static_cast<std::size_t>(theta.size()) != num_params())
    throw InvalidArgument("loss: parameter vector has length " + std::to_string(theta.size()) + ", expected " +
                          std::to_string(num_params()));
}

// ---- LinearLeastSquaresLoss ----

LinearLeastSquaresLoss::LinearLeastSquaresLoss(LossProblem problem, std::vector<Block> blocks,
                                               BasisKind param_basis, std::shared_ptr<const TensorGrid> grid)
    : Loss(std::move(problem)), blocks_(std::move(blocks)), param_basis_(param_basis), grid_(std::move(grid)) {
  if (blocks_.empty()) throw InvalidArgument("linear loss: no blocks");
  num_params_ = static_cast<std::size_t>(blocks_.front().a.cols());
  for (const auto& b : blocks_)
    if (static_cast<std::size_t>(b.a.cols()) != num_params_ || b.a.rows() != b.b.size())
      throw InvalidArgument("linear loss: inconsistent block shapes");
}

LossEval LinearLeastSquaresLoss::evaluate(const Vector& theta) const {
  check_size(theta);
  LossEval out;
  out.gradient = Vector::Zero(theta.size());
  for (const auto& blk : blocks_) {
    const Vector r = blk.a * theta - blk.b;
    const double v = r.squaredNorm();
    out.value += v;
    out.gradient.noalias() += 2.0 * (blk.a.transpose() * r);
    auto it = std::find_if(out.parts.begin(), out.parts.end(), [&](const auto& p) { return p.first == blk.part; });
    if (it == out.parts.end()) out.parts.emplace_back(blk.part, v);
    else it->second += v;
  }
  return out;
}

double LinearLeastSquaresLoss::value(const Vector& theta) const {
  check_size(theta);
  double v = 0.0;
  for (const auto& blk : blocks_) v += (blk.a * theta - blk.b).squaredNorm();
  return v;
}

Surrogate LinearLeastSquaresLoss::surrogate(const Vector& theta) const {
  check_size(theta);
  if (!grid_) throw InvalidArgument("linear loss: raw loss has no surrogate space");
  if (param_basis_ == BasisKind::Lagrange) return Surrogate::lagrange(grid_, theta);
  return Surrogate::chebyshev(grid_->degree(), grid_->dim(), theta);
}

Matrix LinearLeastSquaresLoss::normal_matrix() const {
  const auto n = static_cast<Eigen::Index>(num_params_);
  Matrix h = Matrix::Zero(n, n);
  for (const auto& blk : blocks_) h.noalias() += blk.a.transpose() * blk.a;
  return h;
}

Vector LinearLeastSquaresLoss::normal_rhs() const {
  Vector r = Vector::Zero(static_cast<Eigen::Index>(num_params_));
  for (const auto& blk : blocks_) r.noalias() += blk.a.transpose() * blk.b;
  return r;
}

namespace {

std::pair<Matrix, Vector> stack(const std::vector<LinearLeastSquaresLoss::Block>& blocks, Eigen::Index cols) {
  Eigen::Index rows = 0;
  for (const auto& b : blocks) rows += b.a.rows();
  Matrix a(rows, cols);
  Vector rhs(rows);
  Eigen::Index r = 0;
  for (const auto& b : blocks) {
    a.middleRows(r, b.a.rows()) = b.a;
    rhs.segment(r, b.a.rows()) = b.b;
    r += b.a.rows();
  }
  return {std::move(a), std::move(rhs)};
}

}  // namespace

const FlowConstants& LinearLeastSquaresLoss::constants() const {
  std::call_once(constants_once_, [&] {
    const auto [a, rhs] = stack(blocks_, static_cast<Eigen::Index>(num_params_));
    Eigen::BDCSVD<Matrix> svd(a);
    const auto& s = svd.singularValues();
    FlowConstants c;
    const double smax = s(0);
    const double smin = s.size() >= static_cast<Eigen::Index>(num_params_) ? s(s.size() - 1) : 0.0;
    c.sigma = 2.0 * smin * smin;
    c.lipschitz = 2.0 * smax * smax;
    c.lipschitz_inf = 2.0 * (a.transpose() * a).cwiseAbs().rowwise().sum().maxCoeff();
    if (!std::isfinite(c.sigma) || !std::isfinite(c.lipschitz) || !(c.lipschitz > 0.0))
      throw NumericalError("flow_constants: non-finite or zero spectrum");
    c.contraction = 1.0 - c.sigma / c.lipschitz;
    constants_ = c;
  });
  return *constants_;
}

Vector LinearLeastSquaresLoss::solve() const {
  const auto [a, rhs] = stack(blocks_, static_cast<Eigen::Index>(num_params_));
  Eigen::ColPivHouseholderQR<Matrix> qr(a);
  if (qr.rank() < static_cast<Eigen::Index>(num_params_))
    throw NumericalError("direct_solve: system is numerically singular (rank " + std::to_string(qr.rank()) + " of " +
                         std::to_string(num_params_) + ")");
  Vector theta = qr.solve(rhs);
  if (!theta.allFinite()) throw NumericalError("direct_solve: non-finite solution");
  return theta;
}

// ---- Reconstruction ----

namespace {

LinearLeastSquaresLoss::Assembled assemble_reconstruction(const LossProblem& p) {
  p.validate();
  LinearLeastSquaresLoss::Assembled a;
  a.problem = p;
  a.param_basis = p.basis;
  a.grid = std::make_shared<const TensorGrid>(tensor_grid(p.degree, p.dim));
  const TensorGrid& grid = *a.grid;
  const CubatureOperator op(a.grid, p.sobolev_order);
  a.target = sample_field(p.interior, grid.nodes(), "target");
  const auto n = static_cast<Eigen::Index>(grid.size());
  const Matrix v = p.basis == BasisKind::Chebyshev ? chebyshev_vandermonde(grid.index_set(), grid.nodes())
                                                   : Matrix(Matrix::Identity(n, n));
  const Vector sqrt_w = grid.weights().cwiseSqrt();
  for (const auto& d : op.diff_matrices())
    a.blocks.push_back({"interior", sqrt_w.asDiagonal() * (d * v), sqrt_w.asDiagonal() * (d * a.target)});
  return a;
}

std::vector<LinearLeastSquaresLoss::Block> raw_blocks(const Matrix& v, const Matrix& ws, const Vector& target) {
  if (v.rows() != ws.rows() || ws.rows() != ws.cols() || target.size() != v.rows())
    throw InvalidArgument("reconstruction: raw matrix shapes do not agree");
  Matrix root;
  const bool diagonal = (ws - Matrix(ws.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0;
  if (diagonal) {
    if ((ws.diagonal().array() < 0.0).any()) throw InvalidArgument("reconstruction: negative weight");
    root = ws.diagonal().cwiseSqrt().asDiagonal();
  } else {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (ws + ws.transpose()));
    if (eig.info() != Eigen::Success) throw NumericalError("reconstruction: weight factorization failed");
    if (eig.eigenvalues().minCoeff() < -1e-12 * eig.eigenvalues().cwiseAbs().maxCoeff())
      throw InvalidArgument("reconstruction: weight matrix is not positive semi-definite");
    root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
  }
  return {{"interior", root * v, root * target}};
}

LossProblem raw_problem(Eigen::Index params) {
  LossProblem p;
  p.kind = LossKind::Reconstruction;
  p.degree = static_cast<int>(params) - 1;
  p.dim = 1;
  return p;
}

}  // namespace

ReconstructionLoss::ReconstructionLoss(const LossProblem& problem)
    : ReconstructionLoss(assemble_reconstruction(problem)) {}

ReconstructionLoss::ReconstructionLoss(Assembled&& a) : LinearLeastSquaresLoss(a), target_(std::move(a.target)) {}

ReconstructionLoss::ReconstructionLoss(const Matrix& v, const Matrix& ws, const Vector& target)
    : LinearLeastSquaresLoss(raw_problem(v.cols()), raw_blocks(v, ws, target), BasisKind::Chebyshev, nullptr),
      target_(target) {}

// ---- Poisson ----

namespace {

LinearLeastSquaresLoss::Assembled assemble_poisson(const LossProblem& p) {
  p.validate();
  LinearLeastSquaresLoss::Assembled a;
  a.problem = p;
  a.grid = std::make_shared<const TensorGrid>(tensor_grid(p.degree, p.dim));
  const TensorGrid& grid = *a.grid;
  const Matrix t = chebyshev_vandermonde(grid.index_set(), grid.nodes());
  const auto n = static_cast<Eigen::Index>(grid.size());
  Matrix lap = Matrix::Zero(n, n);
  std::vector<int> beta(static_cast<std::size_t>(p.dim), 0);
  for (int i = 0; i < p.dim; ++i) {
    beta.assign(beta.size(), 0);
    beta[static_cast<std::size_t>(i)] = 2;
    lap += diff_matrix(beta, grid);
  }
  const Vector f = sample_field(p.interior, grid.nodes(), "source");
  const Vector sqrt_w = grid.weights().cwiseSqrt();
  a.blocks.push_back({"interior", sqrt_w.asDiagonal() * (lap * t), sqrt_w.asDiagonal() * f});

  const BoundaryGrid bgrid = boundary_grid(p.degree, p.dim);
  const Vector g = sample_field(p.boundary, bgrid.nodes, "boundary");
  const Vector sqrt_b = (p.effective_boundary_scale() * bgrid.weights).cwiseSqrt();
  a.blocks.push_back({"boundary", sqrt_b.asDiagonal() * chebyshev_vandermonde(grid.index_set(), bgrid.nodes),
                      sqrt_b.asDiagonal() * g});
  return a;
}

}  // namespace

PoissonLoss::PoissonLoss(const LossProblem& problem)
    : PoissonLoss(assemble_poisson(problem)) {}

PoissonLoss::PoissonLoss(Assembled&& a) : LinearLeastSquaresLoss(a) {}

// ---- Eikonal ----

namespace {

const LossProblem& checked_eikonal(const LossProblem& p) {
  if (p.kind != LossKind::Eikonal) throw InvalidArgument("eikonal: wrong problem kind");
  p.validate();
  return p;
}

int manifold_sample_count(const LossProblem& p) {
  return p.manifold_points > 0 ? p.manifold_points : default_manifold_points(*p.manifold, p.degree);
}

}  // namespace

EikonalLoss::EikonalLoss(const LossProblem& problem)
    : Loss(checked_eikonal(problem)),
      grid_(std::make_shared<const TensorGrid>(tensor_grid(problem.degree, problem.dim))),
      samples_(manifold_samples(*problem.manifold, manifold_sample_count(problem))) {
  const int d = problem.dim;
  const Matrix t = chebyshev_vandermonde(grid_->index_set(), grid_->nodes());
  std::vector<int> beta(static_cast<std::size_t>(d), 0);
  for (int j = 0; j < d; ++j) {
    beta.assign(beta.size(), 0);
    beta[static_cast<std::size_t>(j)] = 1;
    partials_.push_back(diff_matrix(beta, *grid_) * t);
  }
  manifold_vandermonde_ = chebyshev_vandermonde(grid_->index_set(), samples_.points);
  manifold_weights_ = problem.effective_boundary_scale() * samples_.weights;

  const auto np = static_cast<Eigen::Index>(grid_->size());
  Matrix h = Matrix::Zero(np, np);
  const auto& w = grid_->weights();
  for (const auto& g : partials_) h.noalias() += static_cast<double>(d) * (g.transpose() * w.asDiagonal() * g);
  h.noalias() += manifold_vandermonde_.transpose() * manifold_weights_.asDiagonal() * manifold_vandermonde_;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (h + h.transpose()), Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw NumericalError("eikonal: majorant eigensolve failed");
  lipschitz_ = 2.0 * eig.eigenvalues().maxCoeff();
  if (!std::isfinite(lipschitz_) || !(lipschitz_ > 0.0)) throw NumericalError("eikonal: degenerate majorant");
}

LossEval EikonalLoss::evaluate(const Vector& theta) const {
  check_size(theta);
  const auto np = static_cast<Eigen::Index>(grid_->size());
  const auto& w = grid_->weights();
  std::vector<Vector> g;
  g.reserve(partials_.size());
  Vector norm1 = Vector::Zero(np);
  for (const auto& p : partials_) {
    g.push_back(p * theta);
    norm1 += g.back().cwiseAbs();
  }
  const Vector resid = norm1.array() - 1.0;
  const double interior = (w.array() * resid.array().square()).sum();
  const Vector us = manifold_vandermonde_ * theta;
  const double manifold = (manifold_weights_.array() * us.array().square()).sum();

  Vector g_int = Vector::Zero(np);
  const Vector wr = (w.array() * resid.array()).matrix();
  for (std::size_t j = 0; j < partials_.size(); ++j) {
    const Vector s = g[j].unaryExpr([](double x) { return sign(x); });
    g_int.noalias() += 2.0 * (partials_[j].transpose() * wr.cwiseProduct(s));
  }
  const Vector g_man = 2.0 * (manifold_vandermonde_.transpose() * manifold_weights_.cwiseProduct(us));

  LossEval out;
  out.parts = {{"interior", interior}, {"manifold", manifold}};
  if (problem().unsquared_eikonal) {
    const double ri = std::sqrt(interior);
    const double rm = std::sqrt(manifold);
    out.value = ri + rm;
    out.gradient = Vector::Zero(np);
    if (ri > 0.0) out.gradient += g_int / (2.0 * ri);
    if (rm > 0.0) out.gradient += g_man / (2.0 * rm);
  } else {
    out.value = interior + manifold;
    out.gradient = g_int + g_man;
  }
  if (!std::isfinite(out.value) || !out.gradient.allFinite()) throw NumericalError("eikonal: non-finite loss");
  return out;
}

std::vector<bool> EikonalLoss::kink_mask(const Vector& theta, double h) const {
  check_size(theta);
  const auto np = static_cast<Eigen::Index>(grid_->size());
  std::vector<bool> mask(static_cast<std::size_t>(np), false);
  for (const auto& p : partials_) {
    const Vector g = p * theta;
    for (Eigen::Index i = 0; i < np; ++i) {
      const double reach = h * p.row(i).cwiseAbs().sum();
      if (std::abs(g(i)) > reach) continue;
      for (Eigen::Index c = 0; c < np; ++c)
        if (p(i, c) != 0.0) mask[static_cast<std::size_t>(c)] = true;
    }
  }
  return mask;
}

Surrogate EikonalLoss::surrogate(const Vector& theta) const {
  check_size(theta);
  return Surrogate::chebyshev(grid_->degree(), grid_->dim(), theta);
}

// ---- helpers ----

std::unique_ptr<Loss> make_loss(const LossProblem& problem) {
  switch (problem.kind) {
    case LossKind::Reconstruction: return std::make_unique<ReconstructionLoss>(problem);
    case LossKind::Poisson: return std::make_unique<PoissonLoss>(problem);
    case LossKind::Eikonal: return std::make_unique<EikonalLoss>(problem);
  }
  throw InvalidArgument("make_loss: unknown loss kind");
}

LossEval reconstruction_loss(const Vector& theta, const LossProblem& problem) {
  if (problem.kind != LossKind::Reconstruction) throw InvalidArgument("reconstruction_loss: wrong problem kind");
  return ReconstructionLoss(problem).evaluate(theta);
}

LossEval poisson_loss(const Vector& theta, const LossProblem& problem) {
  if (problem.kind != LossKind::Poisson) throw InvalidArgument("poisson_loss: wrong problem kind");
  return PoissonLoss(problem).evaluate(theta);
}

LossEval eikonal_loss(const Vector& theta, const LossProblem& problem) {
  if (problem.kind != LossKind::Eikonal) throw InvalidArgument("eikonal_loss: wrong problem kind");
  return EikonalLoss(problem).evaluate(theta);
}

FlowConstants flow_constants(const LossProblem& problem) {
  if (problem.kind == LossKind::Eikonal)
    throw InvalidArgument("flow_constants: the eikonal loss is not strongly convex; no exact constants");
  const auto loss = make_loss(problem);
  return flow_constants(*loss);
}

FlowConstants flow_constants(const Loss& loss) {
  if (const auto* lin = dynamic_cast<const LinearLeastSquaresLoss*>(&loss)) return lin->constants();
  throw InvalidArgument("flow_constants: the eikonal loss is not strongly convex; no exact constants");
}

Vector embed_coefficients(const Vector& theta, const MultiIndexSet& from, const MultiIndexSet& to) {
  if (static_cast<std::size_t>(theta.size()) != from.size())
    throw InvalidArgument("embed_coefficients: length does not match index set");
  if (from.dim() != to.dim() || from.degree() > to.degree())
    throw InvalidArgument("embed_coefficients: target index set must contain the source");
  Vector out = Vector::Zero(static_cast<Eigen::Index>(to.size()));
  for (std::size_t i = 0; i < from.size(); ++i)
    out(static_cast<Eigen::Index>(to.position(from[i]))) = theta(static_cast<Eigen::Index>(i));
  return out;
}

}  // namespace cubflow
