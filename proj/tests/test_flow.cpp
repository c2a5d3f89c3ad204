#include "doctest.h"

#include "cubflow/analysis.hpp"
#include "cubflow/basis.hpp"
#include "cubflow/error.hpp"
#include "cubflow/flow.hpp"
#include "cubflow/loss.hpp"
#include "cubflow/oracles.hpp"

#include <cmath>

using namespace cubflow;

namespace {

Field zero_field() {
  return [](std::span<const double>) { return 0.0; };
}

RateFit planted(RateModel model, std::vector<double> params) {
  RateFit r;
  r.model = model;
  r.params = std::move(params);
  r.valid = true;
  return r;
}

bool same_trace(const FlowTrace& a, const FlowTrace& b) {
  if (a.records.size() != b.records.size() || a.status != b.status || a.iterations != b.iterations) return false;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    const auto &x = a.records[i], &y = b.records[i];
    if (x.j != y.j || x.loss != y.loss || x.grad_norm != y.grad_norm || x.best_loss != y.best_loss) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("flow starting at the minimizer stops at once") {
  const ReconstructionLoss loss(reconstruction_problem(zero_field(), 6, 1, 1));
  const auto r = euler_flow(loss, Vector::Zero(7), FlowConfig{});
  CHECK(r.trace.iterations == 0);
  CHECK(r.trace.status == FlowStatus::GradTol);
  REQUIRE(r.trace.records.size() == 1);
  CHECK(r.trace.records[0].grad_norm == 0.0);
}

TEST_CASE("one step solves the scalar quadratic") {
  const ReconstructionLoss loss(Matrix::Identity(1, 1), Matrix::Identity(1, 1), Vector::Zero(1));
  CHECK(loss.lipschitz_estimate() == doctest::Approx(2.0));
  Vector t0(1);
  t0 << 1.7;
  const auto r = euler_flow(loss, t0, FlowConfig{});
  CHECK(r.trace.step == doctest::Approx(0.5));
  CHECK(r.trace.iterations == 1);
  CHECK(r.theta(0) == 0.0);
}

TEST_CASE("Poisson flow contracts and descends") {
  const auto sp = manufactured_poisson("sin_pi");
  const PoissonLoss loss(poisson_problem(sp.source, sp.boundary, 8, 1));
  const auto c = loss.constants();
  const double star = loss.value(direct_solve(loss));
  FlowConfig cfg;
  cfg.max_iters = 2000;
  const auto r = euler_flow(loss, Vector::Zero(9), cfg);
  const double floor = 1e-10 * r.trace.records.front().loss;
  int compared = 0;
  for (std::size_t i = 0; i + 1 < r.trace.records.size(); ++i) {
    const double a = r.trace.records[i].loss, b = r.trace.records[i + 1].loss;
    CHECK(b <= a * (1 + 1e-12));
    if (a - star > floor) {
      CHECK((b - star) / (a - star) <= 1 - c.sigma / c.lipschitz + 1e-9);
      ++compared;
    }
  }
  CHECK(compared > 100);
}

TEST_CASE("reconstruction flow matches the direct solve") {
  auto e = [](std::span<const double> x) { return std::exp(x[0]); };
  const ReconstructionLoss loss(reconstruction_problem(e, 4, 1, 0));
  const auto c = loss.constants();
  const Vector star = direct_solve(loss);
  const double lstar = loss.value(star);

  FlowConfig cfg;
  cfg.max_iters = 50;
  cfg.grad_tol = 0.0;
  cfg.loss_tol = 0.0;
  const auto short_run = euler_flow(loss, Vector::Zero(5), cfg);
  CHECK(mean_gap_ratio(short_run.trace, lstar, 50) <= 1 - c.sigma / c.lipschitz + 0.05);

  const auto b = budget(20, planted(RateModel::Exponential, {1.0, 2.0}), c, 1);
  cfg.max_iters = b.j_required;
  const auto run = euler_flow(loss, Vector::Zero(5), cfg);
  CHECK((run.theta - star).norm() <= 1e-6);
}

TEST_CASE("subgradient flow") {
  const EikonalLoss loss(eikonal_problem(ManifoldDescriptor::point({0.0}), 8));
  auto scaled_abs = [](std::span<const double> x) { return 0.9 * std::abs(x[0]); };
  const Vector t0 = cheb_project(scaled_abs, 8, 1, 64).coeffs();
  FlowConfig cfg;
  cfg.step_policy = StepPolicy::Diminishing;
  cfg.max_iters = 200;
  const auto r = subgradient_flow(loss, t0, cfg);
  CHECK(loss.value(r.theta) < loss.value(t0));
  CHECK(loss.value(r.theta) == r.trace.records.back().best_loss);
  for (std::size_t i = 0; i + 1 < r.trace.records.size(); ++i)
    CHECK(r.trace.records[i + 1].best_loss <= r.trace.records[i].best_loss);

  const auto again = subgradient_flow(loss, t0, cfg);
  CHECK(same_trace(r.trace, again.trace));
  CHECK(r.theta == again.theta);

  const Vector id = change_basis(interpolate([](std::span<const double> x) { return x[0]; }, 8, 1),
                                 BasisKind::Chebyshev).coeffs();
  const auto done = subgradient_flow(loss, id, cfg);
  CHECK(done.trace.iterations == 0);
  CHECK(done.trace.records.back().loss < 1e-20);

  const ReconstructionLoss linear(reconstruction_problem(zero_field(), 3, 1));
  CHECK_THROWS_AS(subgradient_flow(linear, Vector::Zero(4), cfg), InvalidArgument);
}

TEST_CASE("direct solve") {
  auto poly = [](std::span<const double> x) { return 2.0 - x[0] * x[0] + 0.25 * x[0] * x[0] * x[0]; };
  const Vector t = direct_solve(reconstruction_problem(poly, 5, 1, 1));
  Vector expected = Vector::Zero(6);
  // 2 - (T0 + T2)/2 + (3 T1 + T3)/16
  expected << 1.5, 3.0 / 16.0, -0.5, 1.0 / 16.0, 0.0, 0.0;
  CHECK((t - expected).cwiseAbs().maxCoeff() < 1e-9);

  const auto sp = manufactured_poisson("sin_pi");
  const auto problem = poisson_problem(sp.source, sp.boundary, 16, 1);
  const PoissonLoss loss(problem);
  const Vector star = direct_solve(loss);
  CHECK(loss.evaluate(star).gradient.norm() < 1e-8 * (1 + loss.normal_rhs().norm()));
  CHECK(sobolev_error_sq(loss.surrogate(star), sp.solution, 1) < 1e-12);

  CHECK(direct_solve(poisson_problem(zero_field(), zero_field(), 5, 2)).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(direct_solve(eikonal_problem(ManifoldDescriptor::point({0.0}), 4)), InvalidArgument);
}

TEST_CASE("budgets") {
  FlowConstants half;
  half.sigma = 1.0;
  half.lipschitz = 2.0;
  half.contraction = 0.5;
  const auto e = budget(10, planted(RateModel::Exponential, {1.0, 2.0}), half, 1);
  CHECK(e.n_required == 10);
  CHECK(e.j_required == 10);
  CHECK(e.ops == doctest::Approx(10.0 * 121.0));
  CHECK_FALSE(e.subgradient_fallback);

  const auto a = budget(10, planted(RateModel::Algebraic, {1.0, 2.0}), half, 2);
  CHECK(a.n_required == 32);
  CHECK(a.ops == doctest::Approx(10.0 * std::pow(33.0, 4)));

  const auto s = budget(10, planted(RateModel::StretchedExp, {1.0, 1.0, 0.5}), half, 1);
  CHECK(s.n_required == 49);  // exp(-sqrt(n)) <= 2^-10 first at n = 49

  FlowConstants flat;
  flat.contraction = 1.0;
  const auto f = budget(5, planted(RateModel::Exponential, {1.0, 2.0}), flat, 1);
  CHECK(f.subgradient_fallback);
  CHECK(f.j_required == 1024);

  RateFit none;
  CHECK_THROWS_AS(budget(10, none, half, 1), InvalidArgument);
  CHECK_THROWS_AS(budget(0, planted(RateModel::Exponential, {1.0, 2.0}), half, 1), InvalidArgument);
}

TEST_CASE("initial guesses and determinism") {
  const auto sp = manufactured_poisson("sin_pi");
  const auto problem = poisson_problem(sp.source, sp.boundary, 6, 1);
  FlowConfig cfg;
  cfg.init = InitPolicy::Random;
  cfg.seed = 42;
  const Vector a = initial_guess(problem, cfg);
  CHECK(a == initial_guess(problem, cfg));
  cfg.seed = 43;
  CHECK(a != initial_guess(problem, cfg));
  cfg.init = InitPolicy::Reconstruction;
  CHECK_THROWS_AS(initial_guess(problem, cfg), InvalidArgument);

  const auto eik = eikonal_problem(ManifoldDescriptor::point({0.0}), 6);
  const Vector r = initial_guess(eik, cfg);
  CHECK(r.size() == 7);
  CHECK(EikonalLoss(eik).value(r) < EikonalLoss(eik).value(Vector::Zero(7)));

  const PoissonLoss loss(problem);
  FlowConfig run;
  run.max_iters = 300;
  run.record_every = 7;
  const auto x = euler_flow(loss, a, run);
  const auto y = euler_flow(loss, a, run);
  CHECK(same_trace(x.trace, y.trace));
  CHECK(x.theta == y.theta);
  CHECK(x.trace.records.back().j == 300);
  CHECK(x.trace.records[1].j == 7);
}

TEST_CASE("error probes and configuration checks") {
  const auto sp = manufactured_poisson("sin_pi");
  const PoissonLoss loss(poisson_problem(sp.source, sp.boundary, 6, 1));
  FlowConfig cfg;
  cfg.max_iters = 20;
  int calls = 0;
  const auto r = euler_flow(loss, Vector::Zero(7), cfg, [&](const Vector&) { return static_cast<double>(++calls); });
  CHECK(calls == static_cast<int>(r.trace.records.size()));
  CHECK(r.trace.records.back().err_ref.has_value());

  FlowConfig bad;
  bad.step_policy = StepPolicy::Custom;
  CHECK_THROWS_AS(euler_flow(loss, Vector::Zero(7), bad), InvalidArgument);
  bad.step = 1.0;
  bad.record_every = 0;
  CHECK_THROWS_AS(euler_flow(loss, Vector::Zero(7), bad), InvalidArgument);
  CHECK_THROWS_AS(euler_flow(loss, Vector::Zero(6), FlowConfig{}), InvalidArgument);
}

TEST_CASE("a huge step diverges with a partial result") {
  const auto sp = manufactured_poisson("sin_pi");
  const PoissonLoss loss(poisson_problem(sp.source, sp.boundary, 8, 1));
  FlowConfig cfg;
  cfg.step_policy = StepPolicy::Custom;
  cfg.step = 1e6;
  try {
    (void)euler_flow(loss, Vector::Zero(9), cfg);
    FAIL("expected divergence");
  } catch (const FlowDiverged& e) {
    CHECK(e.partial().theta.allFinite());
    CHECK(std::isfinite(loss.value(e.partial().theta)));
    CHECK(e.partial().trace.iterations > 0);
    CHECK(e.partial().trace.iterations < 10000);
  }
}
