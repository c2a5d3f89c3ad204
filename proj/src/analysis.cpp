#include "cubflow/analysis.hpp"

#include "cubflow/error.hpp"
#include "cubflow/grid.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <numeric>
#include <random>
#include <thread>

namespace cubflow {

// ---- probes ----

GradientCheck check_gradient(const Loss& loss, const Vector& theta, double h) {
  if (!(h > 0.0)) throw InvalidArgument("check_gradient: step must be > 0");
  const LossEval ev = loss.evaluate(theta);
  const auto mask = loss.kink_mask(theta, h);
  GradientCheck out;
  Vector probe = theta;
  for (Eigen::Index c = 0; c < theta.size(); ++c) {
    if (mask[static_cast<std::size_t>(c)]) {
      ++out.skipped;
      continue;
    }
    probe(c) = theta(c) + h;
    const double plus = loss.value(probe);
    probe(c) = theta(c) - h;
    const double minus = loss.value(probe);
    probe(c) = theta(c);
    if (!std::isfinite(plus) || !std::isfinite(minus)) throw NumericalError("check_gradient: non-finite loss at probe");
    const double numeric = (plus - minus) / (2.0 * h);
    const double g = ev.gradient(c);
    out.max_rel_error = std::max(out.max_rel_error, std::abs(g - numeric) / (1.0 + std::abs(g)));
    ++out.checked;
  }
  return out;
}

namespace {

Vector random_offset(std::mt19937_64& rng, Eigen::Index n, double radius) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Vector u(n);
  double norm = 0.0;
  do {
    for (Eigen::Index i = 0; i < n; ++i) u(i) = normal(rng);
    norm = u.norm();
  } while (norm == 0.0);
  double r = 0.0;
  while (r == 0.0) r = uniform(rng);
  return (radius * r / norm) * u;
}

void check_probe_args(const Loss& loss, const Vector& center, int samples, double radius) {
  if (static_cast<std::size_t>(center.size()) != loss.num_params())
    throw InvalidArgument("probe: center has the wrong length");
  if (samples < 1) throw InvalidArgument("probe: samples must be >= 1");
  if (!(radius > 0.0)) throw InvalidArgument("probe: radius must be > 0");
}

}  // namespace

GrowthProbe probe_qgc_rsi(const Loss& loss, const Vector& theta_star, int samples, std::uint64_t seed, double radius) {
  check_probe_args(loss, theta_star, samples, radius);
  std::mt19937_64 rng(seed);
  const double l_star = loss.value(theta_star);
  GrowthProbe out;
  for (int s = 0; s < samples; ++s) {
    const Vector delta = random_offset(rng, theta_star.size(), radius);
    const double dist2 = delta.squaredNorm();
    if (dist2 == 0.0) {
      --s;
      continue;
    }
    const LossEval ev = loss.evaluate(theta_star + delta);
    out.qgc_min = std::min(out.qgc_min, (ev.value - l_star) / dist2);
    out.rsi_min = std::min(out.rsi_min, ev.gradient.dot(delta) / dist2);
    ++out.samples;
  }
  return out;
}

double probe_convexity(const Loss& loss, const Vector& center, int samples, std::uint64_t seed, double radius) {
  check_probe_args(loss, center, samples, radius);
  std::mt19937_64 rng(seed);
  double out = std::numeric_limits<double>::infinity();
  for (int s = 0; s < samples; ++s) {
    const Vector a = center + random_offset(rng, center.size(), radius);
    const Vector b = center + random_offset(rng, center.size(), radius);
    const Vector diff = a - b;
    const double dist2 = diff.squaredNorm();
    if (dist2 == 0.0) {
      --s;
      continue;
    }
    const Vector ga = loss.evaluate(a).gradient;
    const Vector gb = loss.evaluate(b).gradient;
    out = std::min(out, (ga - gb).dot(diff) / dist2);
  }
  return out;
}

double probe_midpoint_convexity(const Loss& loss, const Vector& center, int samples, std::uint64_t seed,
                                double radius) {
  check_probe_args(loss, center, samples, radius);
  std::mt19937_64 rng(seed);
  double out = std::numeric_limits<double>::infinity();
  for (int s = 0; s < samples; ++s) {
    const Vector a = center + random_offset(rng, center.size(), radius);
    const Vector b = center + random_offset(rng, center.size(), radius);
    const double dist2 = (a - b).squaredNorm();
    if (dist2 == 0.0) {
      --s;
      continue;
    }
    const double gap = 0.5 * (loss.value(a) + loss.value(b)) - loss.value(0.5 * (a + b));
    out = std::min(out, gap / dist2);
  }
  return out;
}

double mean_gap_ratio(const FlowTrace& trace, double loss_star, std::size_t steps) {
  const double floor = 1e-13 * std::max(1.0, std::abs(loss_star));
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i + 1 < trace.records.size() && used < steps; ++i) {
    const auto& a = trace.records[i];
    const auto& b = trace.records[i + 1];
    if (b.j != a.j + 1) continue;
    const double ga = a.loss - loss_star;
    const double gb = b.loss - loss_star;
    if (ga <= floor || gb <= floor) break;
    sum += std::log(gb / ga);
    ++used;
  }
  if (used == 0) throw InvalidArgument("mean_gap_ratio: no consecutive records with a positive gap");
  return std::exp(sum / static_cast<double>(used));
}

// ---- error measurement ----

namespace {

struct AxisRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

AxisRule composite_rule(std::vector<double> breaks, int q) {
  breaks.push_back(-1.0);
  breaks.push_back(1.0);
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  const QuadratureRule base = legendre_nodes_weights(q);
  AxisRule out;
  for (std::size_t c = 0; c + 1 < breaks.size(); ++c) {
    const double a = breaks[c];
    const double b = breaks[c + 1];
    if (!(b > a)) continue;
    const double half = 0.5 * (b - a);
    for (std::size_t i = 0; i < base.nodes.size(); ++i) {
      out.nodes.push_back(a + half * (base.nodes[i] + 1.0));
      out.weights.push_back(half * base.weights[i]);
    }
  }
  return out;
}

using PointError = std::function<double(std::span<const double>)>;

double integrate(int dim, const std::vector<std::vector<double>>& breakpoints, int q, const PointError& f) {
  std::vector<AxisRule> rules;
  for (int i = 0; i < dim; ++i) {
    std::vector<double> br;
    if (static_cast<std::size_t>(i) < breakpoints.size())
      for (double b : breakpoints[static_cast<std::size_t>(i)])
        if (b > -1.0 && b < 1.0) br.push_back(b);
    rules.push_back(composite_rule(br, q));
  }
  std::vector<std::size_t> idx(static_cast<std::size_t>(dim), 0);
  std::vector<double> x(static_cast<std::size_t>(dim));
  double total = 0.0;
  for (;;) {
    double w = 1.0;
    for (int i = 0; i < dim; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      x[ui] = rules[ui].nodes[idx[ui]];
      w *= rules[ui].weights[idx[ui]];
    }
    total += w * f(x);
    int axis = dim - 1;
    while (axis >= 0) {
      const auto ua = static_cast<std::size_t>(axis);
      if (++idx[ua] < rules[ua].nodes.size()) break;
      idx[ua] = 0;
      --axis;
    }
    if (axis < 0) break;
  }
  return total;
}

int default_points(int n, int points) {
  if (points < 0) throw InvalidArgument("sobolev error: points must be >= 0");
  return points > 0 ? points : std::max(24, 2 * n + 8);
}

void check_order(int k) {
  if (k < 0 || k > 1) throw InvalidArgument("sobolev error: order must be 0 or 1");
}

}  // namespace

double sobolev_error_sq(const Surrogate& u, const ReferenceSolution& ref, int k, int points) {
  check_order(k);
  if (ref.dim != u.dim()) throw InvalidArgument("sobolev_error_sq: dimension mismatch");
  if (!ref.value) throw InvalidArgument("sobolev_error_sq: reference has no value");
  if (k == 1 && !ref.gradient) throw InvalidArgument("sobolev_error_sq: reference has no gradient");
  const auto d = static_cast<std::size_t>(u.dim());
  std::vector<double> gu(d), gr(d);
  const double out = integrate(u.dim(), ref.breakpoints, default_points(u.degree(), points), [&](std::span<const double> x) {
    const double e = u(x) - ref.value(x);
    double s = e * e;
    if (k == 1) {
      u.gradient(x, gu);
      ref.gradient(x, gr);
      for (std::size_t i = 0; i < d; ++i) s += (gu[i] - gr[i]) * (gu[i] - gr[i]);
    }
    return s;
  });
  if (!std::isfinite(out)) throw NumericalError("sobolev_error_sq: non-finite result");
  return out;
}

double sobolev_distance_sq(const Surrogate& a, const Surrogate& b, int k, int points) {
  check_order(k);
  if (a.dim() != b.dim()) throw InvalidArgument("sobolev_distance_sq: dimension mismatch");
  const auto d = static_cast<std::size_t>(a.dim());
  std::vector<double> ga(d), gb(d);
  const int q = default_points(std::max(a.degree(), b.degree()), points);
  return integrate(a.dim(), {}, q, [&](std::span<const double> x) {
    const double e = a(x) - b(x);
    double s = e * e;
    if (k == 1) {
      a.gradient(x, ga);
      b.gradient(x, gb);
      for (std::size_t i = 0; i < d; ++i) s += (ga[i] - gb[i]) * (ga[i] - gb[i]);
    }
    return s;
  });
}

namespace {

int error_order(const LossProblem& p) {
  return p.kind == LossKind::Reconstruction ? std::min(p.sobolev_order, 1) : 1;
}

}  // namespace

ErrorDecomposition error_decomposition(const LossProblem& problem, const Surrogate& reference, const Vector& theta_j,
                                       const ReferenceSolution* exact) {
  if (problem.kind == LossKind::Eikonal)
    throw InvalidArgument("error_decomposition: requires a reconstruction or poisson problem");
  if (reference.dim() != problem.dim) throw InvalidArgument("error_decomposition: reference dimension mismatch");
  const int k = error_order(problem);
  const auto loss = make_loss(problem);
  const Vector theta_star = direct_solve(*loss);
  const Surrogate u_star = loss->surrogate(theta_star);
  const Surrogate u_j = loss->surrogate(theta_j);

  ErrorDecomposition out;
  out.approximation = std::sqrt(sobolev_distance_sq(u_star, reference, k));

  const double l_star = loss->value(theta_star);
  const LossProblem fine_problem = problem.with_degree(std::max(reference.degree(), problem.degree));
  const auto fine = make_loss(fine_problem);
  Vector fine_theta;
  if (problem.basis == BasisKind::Lagrange && problem.kind == LossKind::Reconstruction) {
    fine_theta = u_star.values(tensor_grid(fine_problem.degree, fine_problem.dim).nodes());
  } else {
    fine_theta = embed_coefficients(theta_star, u_star.index_set(),
                                    multi_index_set(fine_problem.degree, fine_problem.dim));
  }
  out.integration = std::abs(l_star - fine->value(fine_theta));
  out.optimization = std::abs(l_star - loss->value(theta_j));
  out.total = std::sqrt(exact ? sobolev_error_sq(u_j, *exact, k) : sobolev_distance_sq(u_j, reference, k));
  const double sum = out.approximation + out.integration + out.optimization;
  out.constant = sum > 0.0 ? out.total / sum : (out.total > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
  return out;
}

// ---- rates ----

std::string to_string(RateModel m) {
  switch (m) {
    case RateModel::Exponential: return "Exponential";
    case RateModel::Algebraic: return "Algebraic";
    case RateModel::StretchedExp: return "StretchedExp";
  }
  return "unknown";
}

double RateFit::predict(double n) const {
  if (params.size() < 2) throw InvalidArgument("RateFit::predict: no parameters");
  switch (model) {
    case RateModel::Exponential: return params[0] * std::pow(params[1], -n);
    case RateModel::Algebraic: return params[0] * std::pow(n, -params[1]);
    case RateModel::StretchedExp: return params[0] * std::exp(-params[1] * std::pow(n, params[2]));
  }
  return std::numeric_limits<double>::quiet_NaN();
}

bool is_subexponential(RateModel m) noexcept { return m != RateModel::Exponential; }

namespace {

struct Line {
  double intercept = 0.0;
  double slope = 0.0;
  double sse = 0.0;
};

Line fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const double m = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / m;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / m;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  Line l;
  l.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  l.intercept = my - l.slope * mx;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (l.intercept + l.slope * x[i]);
    l.sse += r * r;
  }
  return l;
}

double rms(double sse, std::size_t m, std::size_t p) {
  if (m <= p) return std::numeric_limits<double>::infinity();
  return std::sqrt(sse / static_cast<double>(m - p));
}

Line stretched_line(const std::vector<double>& n, const std::vector<double>& y, double alpha) {
  std::vector<double> x(n.size());
  for (std::size_t i = 0; i < n.size(); ++i) x[i] = std::pow(n[i], alpha);
  return fit_line(x, y);
}

RateCandidate fit_stretched(const std::vector<double>& n, const std::vector<double>& y) {
  RateCandidate c{RateModel::StretchedExp, {}, std::numeric_limits<double>::infinity(), false};
  if (n.size() < 4) {
    c.params = {0.0, 0.0, 0.0};
    return c;
  }
  constexpr int kGrid = 200;
  int best = 1;
  double best_sse = std::numeric_limits<double>::infinity();
  for (int i = 1; i <= kGrid; ++i) {
    const double sse = stretched_line(n, y, static_cast<double>(i) / kGrid).sse;
    if (sse < best_sse) {
      best_sse = sse;
      best = i;
    }
  }
  double lo = static_cast<double>(std::max(best - 1, 1)) / kGrid;
  double hi = static_cast<double>(std::min(best + 1, kGrid)) / kGrid;
  if (best == 1) lo = 1e-3;
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = hi - g * (hi - lo), b = lo + g * (hi - lo);
  double fa = stretched_line(n, y, a).sse, fb = stretched_line(n, y, b).sse;
  for (int it = 0; it < 60; ++it) {
    if (fa < fb) {
      hi = b;
      b = a;
      fb = fa;
      a = hi - g * (hi - lo);
      fa = stretched_line(n, y, a).sse;
    } else {
      lo = a;
      a = b;
      fa = fb;
      b = lo + g * (hi - lo);
      fb = stretched_line(n, y, b).sse;
    }
  }
  double alpha = 0.5 * (lo + hi);
  Line l = stretched_line(n, y, alpha);
  const Line grid_line = stretched_line(n, y, static_cast<double>(best) / kGrid);
  if (grid_line.sse < l.sse) {
    alpha = static_cast<double>(best) / kGrid;
    l = grid_line;
  }
  c.params = {std::exp(l.intercept), -l.slope, alpha};
  c.residual = rms(l.sse, n.size(), 3);
  c.valid = std::isfinite(c.residual) && c.params[0] > 0.0 && std::isfinite(c.params[0]) && c.params[1] > 0.0 &&
            alpha > 0.0 && alpha <= 1.0;
  return c;
}

/// Model class after collapsing near-degenerate stretched fits.
RateModel effective_model(const RateCandidate& c, const RateOptions& o) {
  if (c.model != RateModel::StretchedExp) return c.model;
  const double a = c.params[2];
  if (a >= o.collapse_exponential) return RateModel::Exponential;
  if (a <= o.collapse_algebraic) return RateModel::Algebraic;
  return RateModel::StretchedExp;
}

}  // namespace

RateFit fit_rates(const std::vector<std::pair<double, double>>& data, const RateOptions& options) {
  if (data.size() < 3) throw InvalidArgument("fit_rates: at least 3 points are required");
  RateFit fit;
  std::vector<double> n, y, logn;
  for (auto [ni, ei] : data) {
    if (!(ni > 0.0) || !std::isfinite(ni)) throw InvalidArgument("fit_rates: degrees must be positive");
    if (std::isnan(ei) || std::isinf(ei)) throw InvalidArgument("fit_rates: errors must be finite");
    if (ei <= 0.0) {
      fit.floored = true;
      ei = 1e-16;
    }
    fit.data.emplace_back(ni, ei);
    n.push_back(ni);
    logn.push_back(std::log(ni));
    y.push_back(std::log(ei));
  }
  std::vector<double> sorted = n;
  std::sort(sorted.begin(), sorted.end());
  if (std::unique(sorted.begin(), sorted.end()) - sorted.begin() < 3)
    throw InvalidArgument("fit_rates: at least 3 distinct degrees are required");

  const Line e = fit_line(n, y);
  RateCandidate exp_c{RateModel::Exponential, {std::exp(e.intercept), std::exp(-e.slope)}, rms(e.sse, n.size(), 2),
                      false};
  exp_c.valid = std::isfinite(exp_c.residual) && exp_c.params[1] > 1.0 && std::isfinite(exp_c.params[0]);
  const Line a = fit_line(logn, y);
  RateCandidate alg_c{RateModel::Algebraic, {std::exp(a.intercept), -a.slope}, rms(a.sse, n.size(), 2), false};
  alg_c.valid = std::isfinite(alg_c.residual) && alg_c.params[1] > 0.0 && std::isfinite(alg_c.params[0]);
  fit.candidates = {exp_c, alg_c, fit_stretched(n, y)};

  const RateCandidate* winner = nullptr;
  for (const auto& c : fit.candidates)
    if (c.valid && (!winner || c.residual < winner->residual)) winner = &c;
  fit.valid = winner != nullptr;
  if (!winner) {
    for (const auto& c : fit.candidates)
      if (!winner || c.residual < winner->residual) winner = &c;
  }
  if (winner->model == RateModel::StretchedExp && fit.valid) {
    const RateModel eff = effective_model(*winner, options);
    for (const auto& c : fit.candidates)
      if (c.model == eff && c.model != RateModel::StretchedExp && c.valid) winner = &c;
  }
  fit.model = winner->model;
  fit.params = winner->params;
  fit.residual = winner->residual;
  return fit;
}

double runner_up_ratio(const RateFit& fit, const RateOptions& options) {
  const bool sub = is_subexponential(fit.model);
  double other = std::numeric_limits<double>::infinity();
  for (const auto& c : fit.candidates) {
    if (!c.valid) continue;
    if (is_subexponential(effective_model(c, options)) != sub) other = std::min(other, c.residual);
  }
  if (!std::isfinite(other)) return 0.0;
  constexpr double kEps = 1e-12;
  return (fit.residual + kEps) / (other + kEps);
}

// ---- analyticity ----

std::optional<double> AnalyticityEstimate::rho_est() const {
  switch (kind) {
    case Kind::Geometric: return rho;
    case Kind::Resolved: return std::numeric_limits<double>::infinity();
    case Kind::NonAnalytic: return std::nullopt;
  }
  return std::nullopt;
}

std::string to_string(AnalyticityEstimate::Kind k) {
  switch (k) {
    case AnalyticityEstimate::Kind::Geometric: return "geometric";
    case AnalyticityEstimate::Kind::Resolved: return "resolved";
    case AnalyticityEstimate::Kind::NonAnalytic: return "none";
  }
  return "unknown";
}

AnalyticityEstimate estimate_analyticity(const Surrogate& s_in) {
  const Surrogate s = s_in.kind() == BasisKind::Chebyshev ? s_in : change_basis(s_in, BasisKind::Chebyshev);
  const int n = s.degree();
  if (n < 8) throw InvalidArgument("estimate_analyticity: degree must be >= 8");
  std::vector<double> shell(static_cast<std::size_t>(n + 1), 0.0);
  const auto& idx = s.index_set();
  for (std::size_t pos = 0; pos < idx.size(); ++pos) {
    const auto alpha = idx[pos];
    const int k = *std::max_element(alpha.begin(), alpha.end());
    shell[static_cast<std::size_t>(k)] =
        std::max(shell[static_cast<std::size_t>(k)], std::abs(s.coeffs()(static_cast<Eigen::Index>(pos))));
  }
  AnalyticityEstimate out;
  const double top = *std::max_element(shell.begin(), shell.end());
  if (!std::isfinite(top)) throw NumericalError("estimate_analyticity: non-finite coefficients");
  const double floor = 1e-13 * top;
  int last = -1;
  for (int k = 0; k <= n; ++k)
    if (shell[static_cast<std::size_t>(k)] > floor) last = k;
  out.kind = AnalyticityEstimate::Kind::Resolved;
  out.rho = std::numeric_limits<double>::infinity();
  if (top == 0.0 || 2 * last < n) return out;

  // Upper envelope over the trailing half: shells not exceeded by any later shell.
  double running = 0.0;
  for (int k = last; k >= std::max(1, n / 2); --k) {
    const double v = shell[static_cast<std::size_t>(k)];
    if (v > floor && v >= running) {
      out.envelope.emplace_back(k, v);
      running = v;
    }
  }
  std::reverse(out.envelope.begin(), out.envelope.end());
  if (out.envelope.size() < 3) return out;

  std::vector<double> x, lx, y;
  for (auto [k, v] : out.envelope) {
    x.push_back(k);
    lx.push_back(std::log(static_cast<double>(k)));
    y.push_back(std::log(v));
  }
  const Line geo = fit_line(x, y);
  const Line alg = fit_line(lx, y);
  out.geometric_rms = rms(geo.sse, x.size(), 2);
  out.algebraic_rms = rms(alg.sse, x.size(), 2);
  constexpr double kMargin = 0.7;
  constexpr double kEps = 1e-12;
  if (geo.slope < 0.0 && out.geometric_rms + kEps <= kMargin * (out.algebraic_rms + kEps)) {
    out.kind = AnalyticityEstimate::Kind::Geometric;
    out.rho = std::exp(-geo.slope);
  } else {
    out.kind = AnalyticityEstimate::Kind::NonAnalytic;
    out.rho = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

// ---- classification ----

std::string to_string(Classification c) {
  switch (c) {
    case Classification::PolynomialTime: return "PolynomialTime";
    case Classification::BlowupCandidate: return "BlowupCandidate";
    case Classification::Inconclusive: return "Inconclusive";
  }
  return "unknown";
}

std::string to_string(SolverMode m) {
  switch (m) {
    case SolverMode::Auto: return "auto";
    case SolverMode::Direct: return "direct";
    case SolverMode::Flow: return "flow";
  }
  return "unknown";
}

ComplexityReport classify_sequence(const std::vector<std::pair<double, double>>& data, int dim,
                                   const std::optional<AnalyticityEstimate>& analyticity,
                                   const std::optional<FlowConstants>& constants, const ClassifyOptions& options) {
  if (dim < 1) throw InvalidArgument("classify: dimension must be >= 1");
  ComplexityReport r;
  r.best_fit = fit_rates(data, options.rates);
  r.runner_up_ratio = runner_up_ratio(r.best_fit, options.rates);
  r.analyticity = analyticity;
  r.constants = constants;
  const auto& fit = r.best_fit;
  const bool clear = fit.valid && r.runner_up_ratio <= options.threshold;
  const bool sub = is_subexponential(fit.model);
  const bool analytic = analyticity ? analyticity->analytic() : true;
  const bool nonanalytic = analyticity ? !analyticity->analytic() : true;

  if (!fit.valid) {
    r.classification = Classification::Inconclusive;
    r.notes.push_back("no decaying error model fits the sweep");
  } else if (clear && !sub) {
    r.classification = analytic ? Classification::PolynomialTime : Classification::Inconclusive;
    if (!analytic) r.notes.push_back("exponential error decay but non-analytic coefficient decay");
  } else if (clear && sub) {
    r.classification = nonanalytic ? Classification::BlowupCandidate : Classification::Inconclusive;
    if (!nonanalytic) r.notes.push_back("sub-exponential error decay but geometric coefficient decay");
  } else if (analyticity && !analyticity->analytic()) {
    r.classification = Classification::BlowupCandidate;
    r.notes.push_back("rate margin unclear; non-analytic coefficient decay");
  } else {
    r.classification = Classification::Inconclusive;
    r.notes.push_back("runner-up ratio above threshold");
  }
  if (r.classification == Classification::BlowupCandidate) {
    if (dim >= 3) {
      r.classification = Classification::Inconclusive;
      r.notes.push_back("blowup claims are restricted to d <= 2");
    } else if (dim == 2) {
      r.notes.push_back("d = 2 with an H^1 metric is the borderline embedding case");
    }
    r.notes.push_back("sub-exponential fit is evidence, not a certificate");
  }
  if (fit.valid && constants) {
    for (int bits : options.budget_bits) {
      try {
        r.budgets.push_back(budget(bits, fit, *constants, dim));
      } catch (const NumericalError& e) {
        r.notes.push_back(std::string("budget for N=") + std::to_string(bits) + " unavailable: " + e.what());
      }
    }
    if (!r.budgets.empty() && r.budgets.front().subgradient_fallback)
      r.notes.push_back("no linear contraction; iteration budgets use the subgradient count 4^N");
  }
  return r;
}

namespace {

struct DegreeResult {
  std::optional<Surrogate> surrogate;
  double loss_final = 0.0;
  long iters = 0;
  double err = std::numeric_limits<double>::quiet_NaN();
  std::optional<FlowConstants> constants;
};

DegreeResult solve_degree(const LossProblem& problem, const ClassifyOptions& options,
                          const std::optional<ReferenceSolution>& reference, int k, bool want_constants) {
  const auto loss = make_loss(problem);
  DegreeResult out;
  Vector theta;
  const SolverMode mode = options.solver;
  if (loss->is_linear() && mode != SolverMode::Flow) {
    theta = direct_solve(*loss);
  } else if (loss->is_linear()) {
    const auto r = euler_flow(*loss, initial_guess(problem, options.flow), options.flow);
    theta = r.theta;
    out.iters = r.trace.iterations;
  } else {
    if (mode == SolverMode::Direct) throw InvalidArgument("classify: the eikonal loss has no direct solver");
    FlowConfig cfg = options.flow;
    if (mode == SolverMode::Auto) {
      cfg.init = InitPolicy::Reconstruction;
      cfg.step_policy = StepPolicy::Diminishing;
      if (options.flow.step_policy == StepPolicy::OneOverL) cfg.step = 0.0;
    }
    const auto r = subgradient_flow(*loss, initial_guess(problem, cfg), cfg);
    theta = r.theta;
    out.iters = r.trace.iterations;
  }
  out.loss_final = loss->value(theta);
  out.surrogate = loss->surrogate(theta);
  if (reference) out.err = sobolev_error_sq(*out.surrogate, *reference, k);
  if (want_constants) {
    if (loss->is_linear()) {
      out.constants = flow_constants(*loss);
    } else {
      FlowConstants c;
      c.lipschitz = c.lipschitz_inf = loss->lipschitz_estimate();
      c.sigma = 0.0;
      c.contraction = 1.0;
      out.constants = c;
    }
  }
  return out;
}

}  // namespace

ComplexityReport classify(const LossProblem& problem, const std::vector<int>& degrees, const ClassifyOptions& options) {
  problem.validate();
  options.flow.validate();
  if (degrees.size() < 3) throw InvalidArgument("classify: the sweep needs at least 3 degrees");
  for (std::size_t i = 0; i < degrees.size(); ++i) {
    if (degrees[i] < 1) throw InvalidArgument("classify: degrees must be >= 1");
    if (i > 0 && degrees[i] <= degrees[i - 1]) throw InvalidArgument("classify: degrees must be strictly increasing");
  }
  if (options.jobs < 1) throw InvalidArgument("classify: jobs must be >= 1");

  const int k = error_order(problem);
  std::optional<ReferenceSolution> reference = options.reference;
  if (!reference && problem.kind == LossKind::Eikonal) reference = l1_distance_reference(*problem.manifold);
  if (!reference && problem.kind == LossKind::Reconstruction && k == 0) {
    ReferenceSolution target;
    target.name = "target";
    target.dim = problem.dim;
    target.value = problem.interior;
    target.breakpoints.assign(static_cast<std::size_t>(problem.dim), {});
    reference = target;
  }
  if (reference && reference->dim != problem.dim) throw InvalidArgument("classify: reference dimension mismatch");
  if (!reference && degrees.size() < 4)
    throw InvalidArgument("classify: Cauchy differences need at least 4 degrees");

  const std::size_t m = degrees.size();
  std::vector<DegreeResult> results(m);
  std::vector<std::exception_ptr> errors(m);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < m; i = next++) {
      try {
        results[i] = solve_degree(problem.with_degree(degrees[i]), options, reference, k, i + 1 == m);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(options.jobs), m);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<SweepPoint> sweep;
  for (std::size_t i = 0; i < m; ++i) {
    double err = results[i].err;
    if (!reference) {
      if (i + 1 == m) break;
      err = sobolev_distance_sq(*results[i].surrogate, *results[i + 1].surrogate, k);
    }
    sweep.push_back({degrees[i], err, results[i].loss_final, results[i].iters});
  }
  std::vector<std::pair<double, double>> data;
  for (const auto& p : sweep) data.emplace_back(p.n, p.err);

  std::optional<AnalyticityEstimate> analyticity;
  const Surrogate& last = *results.back().surrogate;
  if (last.degree() >= 8) analyticity = estimate_analyticity(last);

  ComplexityReport r = classify_sequence(data, problem.dim, analyticity, results.back().constants, options);
  r.sweep = std::move(sweep);
  r.error_metric = std::string(reference ? "squared H^" : "squared Cauchy H^") + std::to_string(k) +
                   (reference ? " distance to " + reference->name : " difference of consecutive degrees");
  if (!analyticity) r.notes.push_back("largest degree below 8; no coefficient signature");
  return r;
}

}  // namespace cubflow
