#include "doctest.h"

#include "cubflow/analysis.hpp"
#include "cubflow/basis.hpp"
#include "cubflow/error.hpp"
#include "cubflow/loss.hpp"
#include "cubflow/oracles.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

using namespace cubflow;

namespace {

Vector random_theta(std::size_t size, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Vector t(static_cast<Eigen::Index>(size));
  for (auto& v : t) v = g(rng);
  return t;
}

Vector cheb_coeffs(const Field& f, int n, int d) {
  return change_basis(interpolate(f, n, d), BasisKind::Chebyshev).coeffs();
}

double interior_after_interp_abs(int n) {
  const auto problem = eikonal_problem(ManifoldDescriptor::point({0.0}), n);
  const auto theta = cheb_coeffs([](std::span<const double> x) { return std::abs(x[0]); }, n, 1);
  return eikonal_loss(theta, problem).part("interior");
}

Field zero_field() {
  return [](std::span<const double>) { return 0.0; };
}

}  // namespace

TEST_CASE("reconstruction loss") {
  auto one = [](std::span<const double>) { return 1.0; };
  const auto p0 = reconstruction_problem(one, 3, 1, 0);
  CHECK(reconstruction_loss(Vector::Zero(4), p0).value == doctest::Approx(2.0).epsilon(1e-14));

  auto poly = [](std::span<const double> x) { return 0.3 - x[0] + 2.0 * x[0] * x[0] * x[0]; };
  const auto p1 = reconstruction_problem(poly, 4, 1, 1);
  const auto exact = reconstruction_loss(cheb_coeffs(poly, 4, 1), p1);
  CHECK(exact.value < 1e-20);
  CHECK(exact.gradient.norm() < 1e-10);

  std::mt19937_64 rng(31);
  const ReconstructionLoss loss(p1);
  for (int t = 0; t < 20; ++t) CHECK(check_gradient(loss, random_theta(loss.num_params(), rng)).max_rel_error < 1e-6);

  const auto eval = loss.evaluate(random_theta(5, rng));
  double sum = 0.0;
  for (const auto& [name, v] : eval.parts) {
    CHECK(v >= 0.0);
    sum += v;
  }
  CHECK(sum == doctest::Approx(eval.value).epsilon(1e-13));

  CHECK_THROWS_AS(loss.evaluate(Vector::Zero(3)), InvalidArgument);
  CHECK_THROWS_AS(reconstruction_loss(Vector::Zero(5), poisson_problem(one, one, 4, 1)), InvalidArgument);
}

TEST_CASE("reconstruction in the Lagrange basis") {
  auto one = [](std::span<const double>) { return 1.0; };
  auto p = reconstruction_problem(one, 2, 1, 0);
  p.basis = BasisKind::Lagrange;
  const auto c = flow_constants(p);
  CHECK(c.sigma == doctest::Approx(10.0 / 9.0).epsilon(1e-13));
  CHECK(c.lipschitz == doctest::Approx(16.0 / 9.0).epsilon(1e-13));
  CHECK(c.contraction == doctest::Approx(1.0 - 10.0 / 16.0).epsilon(1e-13));
  CHECK(reconstruction_loss(Vector::Ones(3), p).value < 1e-28);
}

TEST_CASE("raw reconstruction loss") {
  const Matrix v = Matrix::Identity(1, 1);
  const Matrix w = Matrix::Identity(1, 1);
  Vector h(1);
  h << 3.0;
  const ReconstructionLoss loss(v, w, h);
  Vector t(1);
  t << 1.0;
  const auto e = loss.evaluate(t);
  CHECK(e.value == doctest::Approx(4.0));
  CHECK(e.gradient(0) == doctest::Approx(-4.0));
  CHECK(loss.constants().sigma == doctest::Approx(2.0));
  CHECK(loss.constants().lipschitz == doctest::Approx(2.0));
  CHECK(loss.solve()(0) == doctest::Approx(3.0));
}

TEST_CASE("Poisson loss") {
  const auto sp = manufactured_poisson("sin_pi");
  const auto p = poisson_problem(sp.source, sp.boundary, 16, 1);
  const auto theta = cheb_project(sp.solution.value, 16, 1, 64).coeffs();
  CHECK(poisson_loss(theta, p).value < 1e-8);

  const auto z = poisson_problem(zero_field(), zero_field(), 6, 2);
  const auto ez = poisson_loss(Vector::Zero(49), z);
  CHECK(ez.value == 0.0);
  CHECK(ez.gradient.cwiseAbs().maxCoeff() == 0.0);

  const auto ss = manufactured_poisson("sin_sin");
  const PoissonLoss loss(poisson_problem(ss.source, ss.boundary, 4, 2));
  std::mt19937_64 rng(32);
  for (int t = 0; t < 20; ++t) CHECK(check_gradient(loss, random_theta(loss.num_params(), rng)).max_rel_error < 1e-6);
  const auto e = loss.evaluate(random_theta(25, rng));
  CHECK(e.part("interior") + e.part("boundary") == doctest::Approx(e.value).epsilon(1e-13));

  const auto c = flow_constants(poisson_problem(sp.source, sp.boundary, 4, 1));
  CHECK(c.sigma > 0.0);
  CHECK(c.sigma <= c.lipschitz);
  CHECK(c.contraction > 0.0);
  CHECK(c.contraction < 1.0);

  auto bad = [](std::span<const double> x) -> double {
    if (x[0] > 0.9) throw std::runtime_error("bad");
    return 0.0;
  };
  CHECK_THROWS_AS(PoissonLoss(poisson_problem(bad, zero_field(), 4, 1)), FieldEvaluationError);
  auto neg = poisson_problem(zero_field(), zero_field(), 4, 1);
  neg.boundary_scale = -1.0;
  CHECK_THROWS_AS(neg.validate(), InvalidArgument);
}

TEST_CASE("linear losses are sigma-convex and have quadratic growth") {
  const auto sp = manufactured_poisson("sin_pi");
  auto e = [](std::span<const double> x) { return std::exp(x[0]); };
  for (const auto& problem : {poisson_problem(sp.source, sp.boundary, 6, 1), reconstruction_problem(e, 6, 1, 1)}) {
    const auto loss = make_loss(problem);
    const double sigma = flow_constants(*loss).sigma;
    const Vector star = direct_solve(*loss);
    CHECK(probe_convexity(*loss, star, 100, 33) >= sigma - 1e-9);
    const auto g = probe_qgc_rsi(*loss, star, 100, 34);
    CHECK(g.qgc_min >= sigma / 2 * (1 - 1e-6));
    CHECK(g.rsi_min >= sigma / 2 * (1 - 1e-6));
  }
}

TEST_CASE("Eikonal loss") {
  const auto p = eikonal_problem(ManifoldDescriptor::point({0.0}), 8);
  const auto id = eikonal_loss(cheb_coeffs([](std::span<const double> x) { return x[0]; }, 8, 1), p);
  CHECK(id.part("interior") < 1e-24);
  CHECK(id.part("manifold") < 1e-28);
  CHECK(id.value < 1e-24);

  const double e4 = interior_after_interp_abs(4);
  const double e8 = interior_after_interp_abs(8);
  const double e16 = interior_after_interp_abs(16);
  CHECK(e4 > 0.0);
  CHECK(e8 > 0.0);
  CHECK(e16 > 0.0);
  CHECK(e8 < e4);
  CHECK(e16 < e8);

  std::mt19937_64 rng(35);
  for (const auto& s : {ManifoldDescriptor::point({0.1}), ManifoldDescriptor::l1_sphere({0.0, 0.0}, 0.5)}) {
    const EikonalLoss loss(eikonal_problem(s, 4));
    int checked = 0;
    while (checked < 20) {
      const Vector theta = random_theta(loss.num_params(), rng);
      const auto mask = loss.kink_mask(theta, 1e-5);
      if (std::find(mask.begin(), mask.end(), true) != mask.end()) continue;
      const auto g = check_gradient(loss, theta);
      CHECK(g.skipped == 0);
      CHECK(g.max_rel_error < 1e-6);
      ++checked;
    }
  }

  // A zero derivative is a kink: masked and skipped.
  const EikonalLoss flat(p);
  const auto mask = flat.kink_mask(Vector::Zero(9), 1e-5);
  CHECK(std::find(mask.begin(), mask.end(), true) != mask.end());
  const auto g = check_gradient(flat, Vector::Zero(9));
  CHECK(g.skipped > 0);
  // sign(0) = 0 leaves only the manifold term, which vanishes at zero.
  CHECK(flat.evaluate(Vector::Zero(9)).gradient.cwiseAbs().maxCoeff() == 0.0);
  CHECK(flat.evaluate(Vector::Zero(9)).value == doctest::Approx(2.0).epsilon(1e-14));

  CHECK_THROWS_AS(eikonal_loss(Vector::Zero(9), reconstruction_problem(zero_field(), 8, 1)), InvalidArgument);
}

TEST_CASE("unsquared Eikonal variant") {
  auto p = eikonal_problem(ManifoldDescriptor::point({0.0}), 6);
  std::mt19937_64 rng(36);
  const Vector theta = random_theta(7, rng);
  const auto sq = eikonal_loss(theta, p);
  p.unsquared_eikonal = true;
  const auto un = eikonal_loss(theta, p);
  CHECK(un.value == doctest::Approx(std::sqrt(sq.part("interior")) + std::sqrt(sq.part("manifold"))).epsilon(1e-13));
  const EikonalLoss loss(p);
  CHECK(check_gradient(loss, theta).max_rel_error < 1e-6);
}

TEST_CASE("Eikonal loss is not midpoint convex in theta") {
  const EikonalLoss loss(eikonal_problem(ManifoldDescriptor::point({0.0}), 6));
  CHECK(probe_midpoint_convexity(loss, Vector::Zero(7), 100, 37) < 0.0);
  CHECK(loss.lipschitz_estimate() > 0.0);
}

TEST_CASE("coefficient embedding") {
  Vector t(4);
  t << 1, 2, 3, 4;
  const auto e = embed_coefficients(t, multi_index_set(1, 2), multi_index_set(2, 2));
  CHECK(e.size() == 9);
  CHECK(e(0) == 1);
  CHECK(e(1) == 2);
  CHECK(e(3) == 3);
  CHECK(e(4) == 4);
  CHECK(e.sum() == 10);
  CHECK_THROWS_AS(embed_coefficients(t, multi_index_set(1, 2), multi_index_set(0, 2)), InvalidArgument);
}
