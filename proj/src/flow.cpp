#include "cubflow/flow.hpp"

#include "cubflow/oracles.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <random>

namespace cubflow {

std::string to_string(StepPolicy p) {
  switch (p) {
    case StepPolicy::OneOverL: return "one_over_L";
    case StepPolicy::Custom: return "custom";
    case StepPolicy::Diminishing: return "diminishing";
  }
  return "unknown";
}

std::string to_string(InitPolicy p) {
  switch (p) {
    case InitPolicy::Zero: return "zero";
    case InitPolicy::Reconstruction: return "reconstruction";
    case InitPolicy::Random: return "random";
  }
  return "unknown";
}

std::string to_string(FlowStatus s) {
  switch (s) {
    case FlowStatus::GradTol: return "grad_tol";
    case FlowStatus::LossTol: return "loss_tol";
    case FlowStatus::MaxIters: return "max_iters";
  }
  return "unknown";
}

void FlowConfig::validate() const {
  if (max_iters < 0) throw InvalidArgument("flow: max_iters must be >= 0");
  if (record_every < 1) throw InvalidArgument("flow: record_every must be >= 1");
  if (!(grad_tol >= 0.0) || !(loss_tol >= 0.0)) throw InvalidArgument("flow: tolerances must be >= 0");
  if (step_policy == StepPolicy::Custom && !(step > 0.0)) throw InvalidArgument("flow: custom step must be > 0");
  if (step_policy == StepPolicy::Diminishing && !(step >= 0.0)) throw InvalidArgument("flow: step scale must be >= 0");
  if (!std::isfinite(step)) throw InvalidArgument("flow: step must be finite");
}

namespace {

using Clock = std::chrono::steady_clock;

double base_step(const Loss& loss, const FlowConfig& config) {
  if (config.step_policy == StepPolicy::Custom) return config.step;
  if (config.step_policy == StepPolicy::Diminishing && config.step > 0.0) return config.step;
  const double l = loss.lipschitz_estimate();
  if (!(l > 0.0) || !std::isfinite(l)) throw NumericalError("flow: invalid Lipschitz estimate");
  return 1.0 / l;
}

struct Runner {
  const Loss& loss;
  const FlowConfig& config;
  const ErrorProbe& probe;
  bool keep_best;

  FlowResult run(Vector theta) {
    config.validate();
    const auto start = Clock::now();
    FlowResult out;
    out.trace.step = base_step(loss, config);
    if (static_cast<std::size_t>(theta.size()) != loss.num_params())
      throw InvalidArgument("flow: initial vector has the wrong length");

    LossEval ev = loss.evaluate(theta);
    if (!finite(ev)) throw NumericalError("flow: non-finite loss at the initial iterate");
    Vector best = theta;
    double best_loss = ev.value;
    long j = 0;

    auto finish = [&](FlowStatus status) {
      out.trace.status = status;
      out.trace.iterations = j;
      out.theta = keep_best ? best : theta;
      out.trace.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    };

    for (;;) {
      const double gnorm = ev.gradient.norm();
      const auto status = stop_reason(ev.value, gnorm, j);
      if (j % config.record_every == 0 || status) record(out.trace, j, ev.value, gnorm, best_loss, theta);
      if (status) {
        finish(*status);
        return out;
      }
      const double dt = config.step_policy == StepPolicy::Diminishing
                            ? out.trace.step / std::sqrt(static_cast<double>(j) + 1.0)
                            : out.trace.step;
      Vector next = theta - dt * ev.gradient;
      LossEval next_ev;
      bool ok = next.allFinite();
      if (ok) {
        next_ev = loss.evaluate(next);
        ok = finite(next_ev);
      }
      if (!ok) {
        finish(FlowStatus::MaxIters);
        throw FlowDiverged("flow diverged at iteration " + std::to_string(j + 1), std::move(out));
      }
      theta = std::move(next);
      ev = std::move(next_ev);
      ++j;
      if (ev.value < best_loss) {
        best_loss = ev.value;
        best = theta;
      }
    }
  }

  static bool finite(const LossEval& ev) { return std::isfinite(ev.value) && ev.gradient.allFinite(); }

  std::optional<FlowStatus> stop_reason(double value, double gnorm, long j) const {
    if (gnorm <= config.grad_tol) return FlowStatus::GradTol;
    if (value <= config.loss_tol) return FlowStatus::LossTol;
    if (j >= config.max_iters) return FlowStatus::MaxIters;
    return std::nullopt;
  }

  void record(FlowTrace& trace, long j, double value, double gnorm, double best_loss, const Vector& theta) const {
    FlowRecord r;
    r.j = j;
    r.loss = value;
    r.grad_norm = gnorm;
    r.best_loss = best_loss;
    if (probe) r.err_ref = probe(theta);
    trace.records.push_back(r);
  }
};

}  // namespace

FlowResult euler_flow(const Loss& loss, Vector theta0, const FlowConfig& config, const ErrorProbe& probe) {
  return Runner{loss, config, probe, false}.run(std::move(theta0));
}

FlowResult subgradient_flow(const Loss& loss, Vector theta0, const FlowConfig& config, const ErrorProbe& probe) {
  if (loss.kind() != LossKind::Eikonal) throw InvalidArgument("subgradient_flow: requires an eikonal loss");
  return Runner{loss, config, probe, true}.run(std::move(theta0));
}

Vector direct_solve(const Loss& loss) {
  const auto* lin = dynamic_cast<const LinearLeastSquaresLoss*>(&loss);
  if (!lin) throw InvalidArgument("direct_solve: requires a reconstruction or poisson loss");
  return lin->solve();
}

Vector direct_solve(const LossProblem& problem) {
  if (problem.kind == LossKind::Eikonal) throw InvalidArgument("direct_solve: requires a reconstruction or poisson loss");
  return direct_solve(*make_loss(problem));
}

Vector initial_guess(const LossProblem& problem, const FlowConfig& config) {
  problem.validate();
  std::size_t size = 1;
  for (int i = 0; i < problem.dim; ++i) size *= static_cast<std::size_t>(problem.degree + 1);
  const auto n = static_cast<Eigen::Index>(size);
  switch (config.init) {
    case InitPolicy::Zero: return Vector::Zero(n);
    case InitPolicy::Random: {
      std::mt19937_64 rng(config.seed);
      std::normal_distribution<double> normal(0.0, 1.0);
      Vector theta(n);
      for (Eigen::Index i = 0; i < n; ++i) theta(i) = normal(rng);
      return theta;
    }
    case InitPolicy::Reconstruction: {
      if (problem.kind != LossKind::Eikonal || !problem.manifold)
        throw InvalidArgument("initial_guess: reconstruction init requires an eikonal problem");
      const ManifoldDescriptor s = *problem.manifold;
      auto target = [s](std::span<const double> x) { return l1_distance(s, x); };
      return direct_solve(reconstruction_problem(target, problem.degree, problem.dim, 0));
    }
  }
  throw InvalidArgument("initial_guess: unknown policy");
}

Budget budget(int bits, const RateFit& rate, const FlowConstants& constants, int dim) {
  if (bits < 1) throw InvalidArgument("budget: precision bits must be >= 1");
  if (dim < 1) throw InvalidArgument("budget: dimension must be >= 1");
  if (!rate.valid || rate.params.size() < 2) throw InvalidArgument("budget: rate fit has no admissible model");
  Budget b;
  b.bits = bits;
  const double target = std::ldexp(1.0, -bits);
  const double log_ratio = std::log(rate.params[0]) + bits * std::log(2.0);
  double guess = 1.0;
  switch (rate.model) {
    case RateModel::Exponential: guess = log_ratio / std::log(rate.params[1]); break;
    case RateModel::Algebraic: guess = std::exp(log_ratio / rate.params[1]); break;
    case RateModel::StretchedExp: guess = std::pow(std::max(log_ratio, 0.0) / rate.params[1], 1.0 / rate.params[2]); break;
  }
  constexpr double kMaxDegree = 1e15;
  if (!std::isfinite(guess) || guess > kMaxDegree) throw NumericalError("budget: required degree out of range");
  long n = std::max(1L, static_cast<long>(std::ceil(guess)));
  const auto ok = [&](long m) { return rate.predict(static_cast<double>(m)) <= target * (1.0 + 1e-12); };
  while (n > 1 && ok(n - 1)) --n;
  while (!ok(n)) ++n;
  b.n_required = n;

  const double c = constants.contraction;
  if (!(c < 1.0)) {
    b.subgradient_fallback = true;
    b.j_required = 1LL << (2 * std::min(bits, 31));
  } else if (c <= 0.0) {
    b.j_required = 1;
  } else {
    b.j_required = static_cast<long long>(std::ceil(bits * std::log(2.0) / std::abs(std::log(c)) - 1e-9));
  }
  b.ops = static_cast<double>(b.j_required) * std::pow(static_cast<double>(n + 1), 2.0 * dim);
  return b;
}

}  // namespace cubflow
