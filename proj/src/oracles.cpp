#include "cubflow/oracles.hpp"

#include "cubflow/error.hpp"
#include "cubflow/flow.hpp"
#include "cubflow/loss.hpp"

#include <cmath>
#include <numbers>
#include <type_traits>

namespace cubflow {
namespace {

double sign(double x) { return (x > 0.0) - (x < 0.0); }

void check_dim(const ManifoldDescriptor& s, std::span<const double> x) {
  if (static_cast<int>(x.size()) != s.dim()) throw InvalidArgument("oracle: point dimension does not match manifold");
}

template <class F>
decltype(auto) visit_shape(const ManifoldDescriptor& s, F&& f) {
  return std::visit(std::forward<F>(f), s.shape());
}

}  // namespace

double l1_distance(const ManifoldDescriptor& s, std::span<const double> x) {
  check_dim(s, x);
  return visit_shape(s, [&](const auto& shape) -> double {
    using T = std::decay_t<decltype(shape)>;
    if constexpr (std::is_same_v<T, PointManifold>) {
      double r = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) r += std::abs(x[i] - shape.location[i]);
      return r;
    } else if constexpr (std::is_same_v<T, L1Sphere>) {
      double r = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) r += std::abs(x[i] - shape.center[i]);
      return std::abs(r - shape.radius);
    } else {
      return std::abs(x[static_cast<std::size_t>(shape.axis)] - shape.offset);
    }
  });
}

void l1_distance_gradient(const ManifoldDescriptor& s, std::span<const double> x, std::span<double> grad) {
  check_dim(s, x);
  if (grad.size() != x.size()) throw InvalidArgument("l1_distance_gradient: output has the wrong length");
  visit_shape(s, [&](const auto& shape) {
    using T = std::decay_t<decltype(shape)>;
    if constexpr (std::is_same_v<T, PointManifold>) {
      for (std::size_t i = 0; i < x.size(); ++i) grad[i] = sign(x[i] - shape.location[i]);
    } else if constexpr (std::is_same_v<T, L1Sphere>) {
      double r = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) r += std::abs(x[i] - shape.center[i]);
      const double outer = sign(r - shape.radius);
      for (std::size_t i = 0; i < x.size(); ++i) grad[i] = outer * sign(x[i] - shape.center[i]);
    } else {
      for (auto& g : grad) g = 0.0;
      const auto a = static_cast<std::size_t>(shape.axis);
      grad[a] = sign(x[a] - shape.offset);
    }
  });
}

bool on_medial_axis(const ManifoldDescriptor& s, std::span<const double> x, double tol) {
  check_dim(s, x);
  return visit_shape(s, [&](const auto& shape) -> bool {
    using T = std::decay_t<decltype(shape)>;
    if constexpr (std::is_same_v<T, L1Sphere>) {
      if (l1_distance(s, x) <= tol) return false;
      for (std::size_t i = 0; i < x.size(); ++i)
        if (std::abs(x[i] - shape.center[i]) <= tol) return true;
      return false;
    } else {
      return false;
    }
  });
}

ReferenceSolution l1_distance_reference(const ManifoldDescriptor& s) {
  ReferenceSolution ref;
  ref.name = "l1_distance";
  ref.dim = s.dim();
  ref.value = [s](std::span<const double> x) { return l1_distance(s, x); };
  ref.gradient = [s](std::span<const double> x, std::span<double> g) { l1_distance_gradient(s, x, g); };
  ref.breakpoints.assign(static_cast<std::size_t>(s.dim()), {});
  auto add = [&](std::size_t axis, double v) {
    if (v > -1.0 && v < 1.0) ref.breakpoints[axis].push_back(v);
  };
  visit_shape(s, [&](const auto& shape) {
    using T = std::decay_t<decltype(shape)>;
    if constexpr (std::is_same_v<T, PointManifold>) {
      for (std::size_t i = 0; i < shape.location.size(); ++i) add(i, shape.location[i]);
    } else if constexpr (std::is_same_v<T, L1Sphere>) {
      for (std::size_t i = 0; i < shape.center.size(); ++i) {
        add(i, shape.center[i] - shape.radius);
        add(i, shape.center[i]);
        add(i, shape.center[i] + shape.radius);
      }
    } else {
      add(static_cast<std::size_t>(shape.axis), shape.offset);
    }
  });
  return ref;
}

namespace {

constexpr double kPi = std::numbers::pi;

ManufacturedPoisson sin_pi() {
  ManufacturedPoisson m;
  m.solution.name = "sin_pi";
  m.solution.dim = 1;
  m.solution.value = [](std::span<const double> x) { return std::sin(kPi * x[0]); };
  m.solution.gradient = [](std::span<const double> x, std::span<double> g) { g[0] = kPi * std::cos(kPi * x[0]); };
  m.solution.breakpoints = {{}};
  m.source = [](std::span<const double> x) { return -kPi * kPi * std::sin(kPi * x[0]); };
  m.boundary = m.solution.value;
  return m;
}

ManufacturedPoisson sin_sin() {
  ManufacturedPoisson m;
  m.solution.name = "sin_sin";
  m.solution.dim = 2;
  m.solution.value = [](std::span<const double> x) { return std::sin(kPi * x[0]) * std::sin(kPi * x[1]); };
  m.solution.gradient = [](std::span<const double> x, std::span<double> g) {
    g[0] = kPi * std::cos(kPi * x[0]) * std::sin(kPi * x[1]);
    g[1] = kPi * std::sin(kPi * x[0]) * std::cos(kPi * x[1]);
  };
  m.solution.breakpoints = {{}, {}};
  m.source = [](std::span<const double> x) { return -2.0 * kPi * kPi * std::sin(kPi * x[0]) * std::sin(kPi * x[1]); };
  m.boundary = m.solution.value;
  return m;
}

double runge_1d(double x) { return 1.0 / (1.0 + 25.0 * x * x); }
double runge_1d_prime(double x) {
  const double q = 1.0 + 25.0 * x * x;
  return -50.0 * x / (q * q);
}

ManufacturedPoisson runge_source() {
  ManufacturedPoisson m;
  m.solution.name = "runge_source";
  m.solution.dim = 1;
  m.solution.value = [](std::span<const double> x) { return runge_1d(x[0]); };
  m.solution.gradient = [](std::span<const double> x, std::span<double> g) { g[0] = runge_1d_prime(x[0]); };
  m.solution.breakpoints = {{}};
  m.source = [](std::span<const double> x) {
    const double q = 1.0 + 25.0 * x[0] * x[0];
    return (3750.0 * x[0] * x[0] - 50.0) / (q * q * q);
  };
  m.boundary = m.solution.value;
  return m;
}

}  // namespace

ManufacturedPoisson manufactured_poisson(std::string_view name) {
  if (name == "sin_pi") return sin_pi();
  if (name == "sin_sin") return sin_sin();
  if (name == "runge_source") return runge_source();
  throw InvalidArgument("unknown manufactured solution '" + std::string(name) + "'");
}

std::vector<std::string> manufactured_catalog() { return {"sin_pi", "sin_sin", "runge_source"}; }

ReferenceSolution reference_function(std::string_view name, int dim) {
  if (dim < 1) throw InvalidArgument("reference_function: dimension must be >= 1");
  for (const auto& m : manufactured_catalog()) {
    if (name == m) {
      auto ref = manufactured_poisson(name).solution;
      if (ref.dim != dim)
        throw InvalidArgument("reference '" + std::string(name) + "' is defined in d=" + std::to_string(ref.dim));
      return ref;
    }
  }
  ReferenceSolution ref;
  ref.name = std::string(name);
  ref.dim = dim;
  ref.breakpoints.assign(static_cast<std::size_t>(dim), {});
  if (name == "runge") {
    ref.value = [](std::span<const double> x) {
      double v = 1.0;
      for (double xi : x) v *= runge_1d(xi);
      return v;
    };
    ref.gradient = [](std::span<const double> x, std::span<double> g) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        double v = runge_1d_prime(x[i]);
        for (std::size_t j = 0; j < x.size(); ++j)
          if (j != i) v *= runge_1d(x[j]);
        g[i] = v;
      }
    };
  } else if (name == "abs") {
    ref.value = [](std::span<const double> x) {
      double v = 0.0;
      for (double xi : x) v += std::abs(xi);
      return v;
    };
    ref.gradient = [](std::span<const double> x, std::span<double> g) {
      for (std::size_t i = 0; i < x.size(); ++i) g[i] = sign(x[i]);
    };
    for (auto& b : ref.breakpoints) b = {0.0};
  } else if (name == "exp") {
    ref.value = [](std::span<const double> x) {
      double s = 0.0;
      for (double xi : x) s += xi;
      return std::exp(s);
    };
    ref.gradient = [](std::span<const double> x, std::span<double> g) {
      double s = 0.0;
      for (double xi : x) s += xi;
      for (auto& gi : g) gi = std::exp(s);
    };
  } else {
    throw InvalidArgument("unknown reference function '" + std::string(name) + "'");
  }
  return ref;
}

std::vector<std::string> reference_catalog() {
  auto names = manufactured_catalog();
  names.insert(names.end(), {"runge", "abs", "exp"});
  return names;
}

Surrogate fine_reference(const LossProblem& problem, int fine_degree) {
  if (fine_degree < 2 * problem.degree)
    throw InvalidArgument("fine_reference: fine degree must be at least twice the problem degree");
  const LossProblem fine = problem.with_degree(fine_degree);
  const auto loss = make_loss(fine);
  if (loss->is_linear()) return loss->surrogate(direct_solve(*loss));
  FlowConfig config;
  config.step_policy = StepPolicy::Diminishing;
  config.init = InitPolicy::Reconstruction;
  config.max_iters = 2000;
  config.record_every = config.max_iters;
  const FlowResult r = subgradient_flow(*loss, initial_guess(fine, config), config);
  return loss->surrogate(r.theta);
}

}  // namespace cubflow
