#include "doctest.h"

#include "cubflow/basis.hpp"
#include "cubflow/error.hpp"
#include "cubflow/grid.hpp"

#include <cmath>
#include <memory>
#include <random>
#include <stdexcept>
#include <vector>

using namespace cubflow;

namespace {

std::vector<double> scan(int count) {
  std::vector<double> xs;
  for (int i = 0; i < count; ++i) xs.push_back(-1.0 + 2.0 * i / (count - 1));
  return xs;
}

double sup_error_1d(const Surrogate& s, double (*f)(double)) {
  double worst = 0.0;
  for (double x : scan(1000)) {
    const double xs[1] = {x};
    worst = std::max(worst, std::abs(s(xs) - f(x)));
  }
  return worst;
}

}  // namespace

TEST_CASE("Chebyshev evaluation") {
  const int a00[2] = {0, 0};
  const double x2[2] = {0.3, -0.7};
  CHECK(chebyshev_eval(a00, x2) == 1.0);
  const int a1[1] = {1};
  const double q[1] = {0.25};
  CHECK(chebyshev_eval(a1, q) == 0.25);
  const int a2[1] = {2};
  const double h[1] = {0.5};
  CHECK(chebyshev_eval(a2, h) == doctest::Approx(-0.5).epsilon(1e-15));

  std::vector<double> v(9), dv(9);
  for (double x : {-1.0, -0.3, 0.0, 0.8, 1.0}) {
    chebyshev_values_derivatives_1d(x, v, dv);
    for (int k = 0; k <= 8; ++k) {
      const double t = std::acos(x);
      if (std::abs(x) < 1.0) {
        CHECK(v[static_cast<std::size_t>(k)] == doctest::Approx(std::cos(k * t)).epsilon(1e-13));
        CHECK(dv[static_cast<std::size_t>(k)] == doctest::Approx(k * std::sin(k * t) / std::sin(t)).epsilon(1e-12));
      } else {
        CHECK(dv[static_cast<std::size_t>(k)] == doctest::Approx(std::pow(x, k + 1) * k * k).epsilon(1e-13));
      }
    }
  }
}

TEST_CASE("Lagrange cardinal functions") {
  const auto grid = tensor_grid(1, 1);
  const int a0[1] = {0};
  const double zero[1] = {0.0};
  CHECK(lagrange_eval(a0, grid, zero) == doctest::Approx(0.5).epsilon(1e-15));

  for (int d = 1; d <= 2; ++d) {
    for (int n = 0; n <= 8; ++n) {
      const auto g = std::make_shared<const TensorGrid>(tensor_grid(n, d));
      const auto v = vandermonde(LagrangeBasis{g}, g->index_set(), g->nodes());
      CHECK((v.matrix - Matrix::Identity(v.matrix.rows(), v.matrix.cols())).cwiseAbs().maxCoeff() < 1e-13);
    }
  }
  const double dup[3] = {0.0, 0.5, 0.5};
  CHECK_THROWS_AS(barycentric_weights(dup), InvalidArgument);
}

TEST_CASE("interpolation") {
  auto square = [](std::span<const double> x) { return x[0] * x[0]; };
  const auto s = interpolate(square, 2, 1);
  const double half[1] = {0.5};
  CHECK(s(half) == doctest::Approx(0.25).epsilon(1e-14));

  const auto c = interpolate([](std::span<const double>) { return 3.5; }, 4, 2);
  for (Eigen::Index i = 0; i < c.coeffs().size(); ++i) CHECK(c.coeffs()(i) == 3.5);

  auto absf = [](std::span<const double> x) { return std::abs(x[0]); };
  const double e4 = sup_error_1d(interpolate(absf, 4, 1), [](double x) { return std::abs(x); });
  const double e8 = sup_error_1d(interpolate(absf, 8, 1), [](double x) { return std::abs(x); });
  CHECK(e8 < e4);

  auto bad = [](std::span<const double> x) -> double {
    if (x[0] > 0.5) throw std::runtime_error("boom");
    return 0.0;
  };
  try {
    (void)interpolate(bad, 4, 1);
    FAIL("expected a field evaluation error");
  } catch (const FieldEvaluationError& e) {
    CHECK(e.node() == 3);
  }
}

TEST_CASE("Chebyshev projection") {
  auto t3 = [](std::span<const double> x) { return 4 * x[0] * x[0] * x[0] - 3 * x[0]; };
  const auto s = cheb_project(t3, 4, 1, 8);
  const double expected[5] = {0, 0, 0, 1, 0};
  for (int k = 0; k < 5; ++k) CHECK(std::abs(s.coeffs()(k) - expected[k]) < 1e-14);

  const auto one = cheb_project([](std::span<const double>) { return 1.0; }, 3, 2, 6);
  CHECK(one.coeffs()(0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(one.coeffs().tail(one.coeffs().size() - 1).cwiseAbs().maxCoeff() < 1e-15);

  CHECK_THROWS_AS(cheb_project(t3, 4, 1, 7), InvalidArgument);

  auto runge = [](std::span<const double> x) { return 1.0 / (1.0 + 25.0 * x[0] * x[0]); };
  const auto r = cheb_project(runge, 32, 1, 256);
  const double rho = (1.0 + std::sqrt(26.0)) / 5.0;
  for (int k = 10; k <= 30; k += 2)
    CHECK(std::abs(r.coeffs()(k + 2) / r.coeffs()(k)) == doctest::Approx(1.0 / (rho * rho)).epsilon(1e-6));

  // Geometric decay slope over even coefficients.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (int k = 2; k <= 32; k += 2) {
    const double y = std::log(std::abs(r.coeffs()(k)));
    sx += k, sy += y, sxx += k * k, sxy += k * y, ++m;
  }
  const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  CHECK(std::exp(-slope) == doctest::Approx(rho).epsilon(0.05));

  // |x| decays algebraically.
  auto absf = [](std::span<const double> x) { return std::abs(x[0]); };
  const auto a = cheb_project(absf, 32, 1, 512);
  sx = sy = sxx = sxy = 0;
  m = 0;
  for (int k = 2; k <= 32; k += 2) {
    const double lx = std::log(static_cast<double>(k));
    const double y = std::log(std::abs(a.coeffs()(k)));
    sx += lx, sy += y, sxx += lx * lx, sxy += lx * y, ++m;
  }
  const double alg = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  CHECK(alg <= -1.0);
  CHECK(alg >= -3.0);
}

TEST_CASE("projection and interpolation reproduce polynomials") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int d = 1; d <= 2; ++d) {
    const int n = 6;
    Vector coeffs(static_cast<Eigen::Index>(std::pow(n + 1, d)));
    for (auto& c : coeffs) c = u(rng);
    const auto p = Surrogate::chebyshev(n, d, coeffs);
    auto field = [&p](std::span<const double> x) { return p(x); };
    const auto proj = cheb_project(field, n, d, 2 * n);
    const auto interp = interpolate(field, n, d);
    CHECK((proj.coeffs() - coeffs).cwiseAbs().maxCoeff() < 1e-10);
    for (double x : scan(41)) {
      for (double y : scan(d == 2 ? 7 : 1)) {
        const double pt[2] = {x, y};
        const std::span<const double> sp(pt, static_cast<std::size_t>(d));
        CHECK(std::abs(interp(sp) - p(sp)) < 1e-9);
        CHECK(std::abs(proj(sp) - p(sp)) < 1e-9);
      }
    }
  }
}

TEST_CASE("Vandermonde matrices") {
  const auto v = vandermonde(ChebyshevBasis{}, multi_index_set(1, 1), tensor_grid(1, 1).nodes());
  const double r = 1.0 / std::sqrt(3.0);
  CHECK(v.matrix(0, 0) == 1.0);
  CHECK(v.matrix(0, 1) == doctest::Approx(-r).epsilon(1e-15));
  CHECK(v.matrix(1, 0) == 1.0);
  CHECK(v.matrix(1, 1) == doctest::Approx(r).epsilon(1e-15));

  const auto empty = vandermonde(ChebyshevBasis{}, multi_index_set(3, 2), PointSet(0, 2));
  CHECK(empty.matrix.rows() == 0);
  CHECK(empty.matrix.cols() == 16);

  for (int n : {2, 8, 16}) {
    const auto g = tensor_grid(n, 1);
    const double cond = vandermonde(ChebyshevBasis{}, g.index_set(), g.nodes()).condition_number();
    CHECK(std::isfinite(cond));
    CHECK(cond < 1e3);
  }
}

TEST_CASE("change of basis") {
  Vector t2 = Vector::Zero(3);
  t2(2) = 1.0;
  const auto lag = change_basis(Surrogate::chebyshev(2, 1, t2), BasisKind::Lagrange);
  CHECK(lag.kind() == BasisKind::Lagrange);
  CHECK(lag.coeffs()(0) == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(lag.coeffs()(1) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(lag.coeffs()(2) == doctest::Approx(0.2).epsilon(1e-14));

  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int d = 1; d <= 2; ++d) {
    for (int n : {4, 16}) {
      Vector c(static_cast<Eigen::Index>(std::pow(n + 1, d)));
      for (auto& x : c) x = u(rng);
      const auto cheb = Surrogate::chebyshev(n, d, c);
      const auto l = change_basis(cheb, BasisKind::Lagrange);
      const auto back = change_basis(l, BasisKind::Chebyshev);
      CHECK((back.coeffs() - c).cwiseAbs().maxCoeff() < 1e-10);
      const auto g = tensor_grid(n, d);
      CHECK((cheb.values(g.nodes()) - l.values(g.nodes())).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
  Vector k = Vector::Constant(25, 0.0);
  k(0) = 2.0;
  const auto constant = change_basis(Surrogate::chebyshev(4, 2, k), BasisKind::Lagrange);
  CHECK((constant.coeffs().array() - 2.0).abs().maxCoeff() < 1e-14);
}

TEST_CASE("surrogate gradients match finite differences") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vector c(49);
  for (auto& x : c) x = u(rng);
  const auto cheb = Surrogate::chebyshev(6, 2, c);
  const auto lag = change_basis(cheb, BasisKind::Lagrange);
  for (int trial = 0; trial < 10; ++trial) {
    const double x[2] = {u(rng) * 0.9, u(rng) * 0.9};
    double g[2], gl[2];
    cheb.gradient(x, g);
    lag.gradient(x, gl);
    for (int a = 0; a < 2; ++a) {
      double xp[2] = {x[0], x[1]}, xm[2] = {x[0], x[1]};
      xp[a] += 1e-6;
      xm[a] -= 1e-6;
      const double fd = (cheb(xp) - cheb(xm)) / 2e-6;
      CHECK(g[a] == doctest::Approx(fd).epsilon(1e-7));
      CHECK(gl[a] == doctest::Approx(g[a]).epsilon(1e-9));
    }
  }
  CHECK_THROWS_AS(Surrogate::chebyshev(2, 1, Vector::Zero(4)), InvalidArgument);
}
