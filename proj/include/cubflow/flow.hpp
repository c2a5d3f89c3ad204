#pragma once

#include "cubflow/error.hpp"
#include "cubflow/loss.hpp"
#include "cubflow/rates.hpp"
#include "cubflow/types.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace cubflow {

/// OneOverL: fixed step 1/L. Custom: fixed `step`. Diminishing: c/sqrt(j+1)
/// with c = `step`, or 1/L when `step` is 0.
enum class StepPolicy { OneOverL, Custom, Diminishing };

/// Zero, the s = 0 reconstruction of the l1 distance to S (Eikonal only),
/// or standard normal coefficients drawn from `seed`.
enum class InitPolicy { Zero, Reconstruction, Random };

enum class FlowStatus { GradTol, LossTol, MaxIters };

std::string to_string(StepPolicy p);
std::string to_string(InitPolicy p);
std::string to_string(FlowStatus s);

struct FlowConfig {
  StepPolicy step_policy = StepPolicy::OneOverL;
  double step = 0.0;
  long max_iters = 10000;
  double grad_tol = 1e-12;
  double loss_tol = 1e-20;
  long record_every = 1;
  std::uint64_t seed = 0;
  InitPolicy init = InitPolicy::Zero;

  void validate() const;
};

struct FlowRecord {
  long j = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double best_loss = 0.0;
  std::optional<double> err_ref;
};

struct FlowTrace {
  std::vector<FlowRecord> records;
  FlowStatus status = FlowStatus::MaxIters;
  long iterations = 0;
  double step = 0.0;  // base step (c for the diminishing policy)
  double wall_seconds = 0.0;
};

struct FlowResult {
  Vector theta;
  FlowTrace trace;
};

/// Thrown when the loss or gradient becomes non-finite; `partial()` holds the
/// last good iterate and the trace up to it.
class FlowDiverged : public NumericalError {
 public:
  FlowDiverged(const std::string& what, FlowResult partial)
      : NumericalError(what), partial_(std::move(partial)) {}
  const FlowResult& partial() const noexcept { return partial_; }

 private:
  FlowResult partial_;
};

/// Optional error against a reference, evaluated at recorded iterates.
using ErrorProbe = std::function<double(const Vector&)>;

/// theta_{j+1} = theta_j - dt grad L(theta_j) with a fixed step.
FlowResult euler_flow(const Loss& loss, Vector theta0, const FlowConfig& config, const ErrorProbe& probe = {});

/// Subgradient iteration; returns the best iterate seen.
FlowResult subgradient_flow(const Loss& loss, Vector theta0, const FlowConfig& config,
                            const ErrorProbe& probe = {});

/// Least-squares minimizer of a linear loss.
Vector direct_solve(const Loss& loss);
Vector direct_solve(const LossProblem& problem);

Vector initial_guess(const LossProblem& problem, const FlowConfig& config);

struct Budget {
  int bits = 0;
  long n_required = 0;
  long long j_required = 0;
  double ops = 0.0;
  bool subgradient_fallback = false;  // contraction >= 1: j is the O(1/eps^2) count 4^N
};

/// Degree, iteration and operation counts for 2^-N accuracy.
Budget budget(int bits, const RateFit& rate, const FlowConstants& constants, int dim);

}  // namespace cubflow
