#pragma once

#include "cubflow/basis.hpp"
#include "cubflow/flow.hpp"
#include "cubflow/loss.hpp"
#include "cubflow/oracles.hpp"
#include "cubflow/rates.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace cubflow {

// ---- gradient and convexity probes ----

struct GradientCheck {
  double max_rel_error = 0.0;  // max_c |g_c - fd_c| / (1 + |g_c|)
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates flagged by the loss's kink mask
};

/// Central differences of width h over every coordinate.
GradientCheck check_gradient(const Loss& loss, const Vector& theta, double h = 1e-5);

struct GrowthProbe {
  double qgc_min = std::numeric_limits<double>::infinity();  // min (L(t) - L(t*)) / |t - t*|^2
  double rsi_min = std::numeric_limits<double>::infinity();  // min <grad L(t), t - t*> / |t - t*|^2
  int samples = 0;
};

/// Samples t = t* + r u with u uniform on the unit sphere and r uniform in (0, radius].
GrowthProbe probe_qgc_rsi(const Loss& loss, const Vector& theta_star, int samples, std::uint64_t seed,
                          double radius = 1.0);

/// min over random pairs of <grad L(a) - grad L(b), a - b> / |a - b|^2.
double probe_convexity(const Loss& loss, const Vector& center, int samples, std::uint64_t seed, double radius = 1.0);

/// min over random pairs of ((L(a) + L(b)) / 2 - L((a + b) / 2)) / |a - b|^2.
/// Negative values certify non-convexity.
double probe_midpoint_convexity(const Loss& loss, const Vector& center, int samples, std::uint64_t seed,
                                double radius = 1.0);

/// Geometric mean of (L_{j+1} - L*) / (L_j - L*) over the first `steps`
/// consecutive recorded pairs with a positive gap.
double mean_gap_ratio(const FlowTrace& trace, double loss_star, std::size_t steps);

// ---- error measurement ----

/// Squared H^k distance (k in {0, 1}) on the hypercube by composite
/// Gauss-Legendre quadrature, cells split at the reference breakpoints.
/// `points` per cell and axis; 0 picks max(24, 2n + 8).
double sobolev_error_sq(const Surrogate& u, const ReferenceSolution& ref, int k, int points = 0);
double sobolev_distance_sq(const Surrogate& a, const Surrogate& b, int k, int points = 0);

struct ErrorDecomposition {
  double approximation = 0.0;  // H^k distance of the degree-n minimizer to the reference
  double integration = 0.0;    // |L^n(t*) - L^fine(t*)|
  double optimization = 0.0;   // |L^n(t*) - L^n(t_j)|
  double total = 0.0;          // H^k distance of the iterate to the reference (or the exact solution)
  double constant = 0.0;       // total / (approximation + integration + optimization)
};

ErrorDecomposition error_decomposition(const LossProblem& problem, const Surrogate& reference, const Vector& theta_j,
                                       const ReferenceSolution* exact = nullptr);

// ---- rates ----

struct RateOptions {
  double collapse_exponential = 0.9;  // stretched fits with a >= this count as exponential
  double collapse_algebraic = 0.15;   // and with a <= this as algebraic
};

/// Log-space least-squares fits of the three error models; the lowest
/// residual admissible model wins.
RateFit fit_rates(const std::vector<std::pair<double, double>>& data, const RateOptions& options = {});

/// True for Algebraic and StretchedExp.
bool is_subexponential(RateModel m) noexcept;

struct AnalyticityEstimate {
  enum class Kind { Geometric, Resolved, NonAnalytic };
  Kind kind = Kind::NonAnalytic;
  double rho = std::numeric_limits<double>::quiet_NaN();
  double geometric_rms = 0.0;
  double algebraic_rms = 0.0;
  std::vector<std::pair<int, double>> envelope;  // (shell degree, |coefficient|) used in the fit

  /// rho for Geometric, +infinity for Resolved, none for NonAnalytic.
  std::optional<double> rho_est() const;
  bool analytic() const noexcept { return kind != Kind::NonAnalytic; }
};

std::string to_string(AnalyticityEstimate::Kind k);

/// Decay of the Chebyshev coefficient shells over the trailing half of the degrees.
AnalyticityEstimate estimate_analyticity(const Surrogate& s);

// ---- classification ----

enum class Classification { PolynomialTime, BlowupCandidate, Inconclusive };

std::string to_string(Classification c);

/// Auto: direct solve for linear losses, subgradient flow from the
/// reconstruction initial guess for the Eikonal loss.
enum class SolverMode { Auto, Direct, Flow };

std::string to_string(SolverMode m);

struct ClassifyOptions {
  SolverMode solver = SolverMode::Auto;
  FlowConfig flow;
  std::optional<ReferenceSolution> reference;  // Eikonal defaults to the l1 distance
  double threshold = 0.7;
  int jobs = 1;
  std::vector<int> budget_bits{10, 20, 30};
  RateOptions rates;
};

struct SweepPoint {
  int n = 0;
  double err = 0.0;
  double loss_final = 0.0;
  long iters = 0;
};

struct ComplexityReport {
  Classification classification = Classification::Inconclusive;
  RateFit best_fit;
  double runner_up_ratio = 1.0;  // winner residual / best residual of the other class
  std::vector<Budget> budgets;
  std::vector<SweepPoint> sweep;
  std::optional<AnalyticityEstimate> analyticity;
  std::optional<FlowConstants> constants;
  std::string error_metric;
  std::vector<std::string> notes;
};

/// Winner residual over the best residual of the other class
/// (exponential versus sub-exponential).
double runner_up_ratio(const RateFit& fit, const RateOptions& options = {});

/// Combines a fitted sweep with an optional coefficient signature.
ComplexityReport classify_sequence(const std::vector<std::pair<double, double>>& data, int dim,
                                   const std::optional<AnalyticityEstimate>& analyticity,
                                   const std::optional<FlowConstants>& constants = std::nullopt,
                                   const ClassifyOptions& options = {});

/// Solves at every degree, measures errors and classifies.
ComplexityReport classify(const LossProblem& problem, const std::vector<int>& degrees,
                          const ClassifyOptions& options = {});

}  // namespace cubflow
