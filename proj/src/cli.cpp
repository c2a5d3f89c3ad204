#include "cubflow/cli.hpp"

#include "cubflow/error.hpp"
#include "cubflow/oracles.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <random>
#include <sstream>
#include <system_error>
#include <unistd.h>

namespace cubflow::cli {

using nlohmann::json;

std::string to_string(Command c) {
  switch (c) {
    case Command::Solve: return "solve";
    case Command::Reconstruct: return "reconstruct";
    case Command::Sweep: return "sweep";
    case Command::Classify: return "classify";
    case Command::Check: return "check";
  }
  return "unknown";
}

namespace {

Command parse_command(const std::string& s) {
  if (s == "solve") return Command::Solve;
  if (s == "reconstruct") return Command::Reconstruct;
  if (s == "sweep") return Command::Sweep;
  if (s == "classify") return Command::Classify;
  if (s == "check") return Command::Check;
  throw InvalidArgument("unknown command '" + s + "'");
}

LossKind parse_kind(const std::string& s) {
  if (s == "reconstruction") return LossKind::Reconstruction;
  if (s == "poisson") return LossKind::Poisson;
  if (s == "eikonal") return LossKind::Eikonal;
  throw InvalidArgument("--problem: expected reconstruction, poisson or eikonal, got '" + s + "'");
}

SolverMode parse_solver(const std::string& s) {
  if (s == "auto") return SolverMode::Auto;
  if (s == "direct") return SolverMode::Direct;
  if (s == "flow") return SolverMode::Flow;
  throw InvalidArgument("--solver: expected auto, direct or flow, got '" + s + "'");
}

InitPolicy parse_init(const std::string& s) {
  if (s == "zero") return InitPolicy::Zero;
  if (s == "reconstruction") return InitPolicy::Reconstruction;
  if (s == "random") return InitPolicy::Random;
  throw InvalidArgument("--init: expected auto, zero, reconstruction or random, got '" + s + "'");
}

double parse_real(const std::string& s, const std::string& field) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw InvalidArgument(field + ": expected a real number, got '" + s + "'");
  return v;
}

std::vector<int> parse_degrees(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    int v = 0;
    const auto* end = item.data() + item.size();
    const auto [ptr, ec] = std::from_chars(item.data(), end, v);
    if (item.empty() || ec != std::errc() || ptr != end)
      throw InvalidArgument("--degrees: expected a comma separated list of integers, got '" + s + "'");
    out.push_back(v);
  }
  return out;
}

void set_step(ExperimentConfig& c, const std::string& s, const std::string& field) {
  if (s == "auto") {
    c.step_auto = true;
    c.flow.step = 0.0;
    return;
  }
  c.step_auto = false;
  c.flow.step = parse_real(s, field);
  if (!(c.flow.step > 0.0)) throw InvalidArgument(field + ": step must be > 0");
}

void set_init(ExperimentConfig& c, const std::string& s) {
  c.init_auto = s == "auto";
  if (!c.init_auto) c.flow.init = parse_init(s);
}

void set_formats(ExperimentConfig& c, const std::vector<std::string>& formats, const std::string& field) {
  c.write_csv = c.write_json = false;
  for (const auto& f : formats) {
    if (f == "csv") c.write_csv = true;
    else if (f == "json") c.write_json = true;
    else throw InvalidArgument(field + ": unknown format '" + f + "'");
  }
}

// ---- config file ----

template <class T>
T field_as(const json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw InvalidArgument("config field '" + path + "': wrong type (" + std::string(j.type_name()) + ")");
  }
}

void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw InvalidArgument("config field '" + path + "': expected an object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw InvalidArgument("config field '" + (path.empty() ? key : path + "." + key) + "': unknown key");
  }
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(source + ": " + e.what());
  }
  ExperimentConfig c;
  check_keys(doc, "", {"command", "problem", "flow", "output", "jobs"});
  if (doc.contains("command")) c.command = parse_command(field_as<std::string>(doc["command"], "command"));
  if (doc.contains("jobs")) c.jobs = field_as<int>(doc["jobs"], "jobs");
  if (doc.contains("problem")) {
    const json& p = doc["problem"];
    check_keys(p, "problem",
               {"kind", "d", "n", "degrees", "oracle", "manifold", "boundary_scale", "sobolev_order", "solver"});
    if (p.contains("kind")) c.kind = parse_kind(field_as<std::string>(p["kind"], "problem.kind"));
    if (p.contains("d")) c.dim = field_as<int>(p["d"], "problem.d");
    if (p.contains("n")) c.degree = field_as<int>(p["n"], "problem.n");
    if (p.contains("degrees")) c.degrees = field_as<std::vector<int>>(p["degrees"], "problem.degrees");
    if (p.contains("oracle")) c.oracle = field_as<std::string>(p["oracle"], "problem.oracle");
    if (p.contains("manifold")) c.manifold = field_as<std::string>(p["manifold"], "problem.manifold");
    if (p.contains("boundary_scale")) c.boundary_scale = field_as<double>(p["boundary_scale"], "problem.boundary_scale");
    if (p.contains("sobolev_order")) c.sobolev_order = field_as<int>(p["sobolev_order"], "problem.sobolev_order");
    if (p.contains("solver")) c.solver = parse_solver(field_as<std::string>(p["solver"], "problem.solver"));
  }
  if (doc.contains("flow")) {
    const json& f = doc["flow"];
    check_keys(f, "flow", {"step", "max_iters", "grad_tol", "loss_tol", "record_every", "seed", "init"});
    if (f.contains("step")) {
      if (f["step"].is_string()) set_step(c, f["step"].get<std::string>(), "flow.step");
      else {
        c.step_auto = false;
        c.flow.step = field_as<double>(f["step"], "flow.step");
      }
    }
    if (f.contains("max_iters")) c.flow.max_iters = field_as<long>(f["max_iters"], "flow.max_iters");
    if (f.contains("grad_tol")) c.flow.grad_tol = field_as<double>(f["grad_tol"], "flow.grad_tol");
    if (f.contains("loss_tol")) c.flow.loss_tol = field_as<double>(f["loss_tol"], "flow.loss_tol");
    if (f.contains("record_every")) {
      c.flow.record_every = field_as<long>(f["record_every"], "flow.record_every");
      c.record_auto = false;
    }
    if (f.contains("seed")) c.flow.seed = field_as<std::uint64_t>(f["seed"], "flow.seed");
    if (f.contains("init")) set_init(c, field_as<std::string>(f["init"], "flow.init"));
  }
  if (doc.contains("output")) {
    const json& o = doc["output"];
    check_keys(o, "output", {"dir", "formats", "plot_data"});
    if (o.contains("dir")) c.out_dir = field_as<std::string>(o["dir"], "output.dir");
    if (o.contains("formats"))
      set_formats(c, field_as<std::vector<std::string>>(o["formats"], "output.formats"), "output.formats");
    if (o.contains("plot_data")) c.plot_data = field_as<bool>(o["plot_data"], "output.plot_data");
  }
  return c;
}

void ExperimentConfig::validate() const {
  if (!kind) throw InvalidArgument("missing required flag --problem");
  if (dim < 1) throw InvalidArgument("--d: dimension must be >= 1");
  if (jobs < 1) throw InvalidArgument("--jobs: must be >= 1");
  if (command == Command::Reconstruct && *kind != LossKind::Reconstruction)
    throw InvalidArgument("reconstruct: --problem must be reconstruction");
  if (command == Command::Solve || command == Command::Reconstruct) {
    if (!degree) throw InvalidArgument("missing required flag --n");
  }
  if (degree && *degree < 0) throw InvalidArgument("--n: degree must be >= 0");
  if (command == Command::Sweep || command == Command::Classify) {
    if (degrees.empty()) throw InvalidArgument("missing required flag --degrees");
    if (degrees.size() < 3) throw InvalidArgument("--degrees: at least 3 degrees are required");
    for (std::size_t i = 0; i < degrees.size(); ++i) {
      if (degrees[i] < 1) throw InvalidArgument("--degrees: degrees must be >= 1");
      if (i > 0 && degrees[i] <= degrees[i - 1]) throw InvalidArgument("--degrees: must be strictly increasing");
    }
  }
  if (boundary_scale && !(*boundary_scale > 0.0)) throw InvalidArgument("--boundary-scale: must be > 0");
  if (sobolev_order < 0) throw InvalidArgument("--order: must be >= 0");
  switch (*kind) {
    case LossKind::Poisson: {
      if (oracle.empty()) throw InvalidArgument("missing required flag --oracle");
      const auto m = manufactured_poisson(oracle);
      if (m.solution.dim != dim)
        throw InvalidArgument("--oracle: '" + oracle + "' is defined in d=" + std::to_string(m.solution.dim));
      break;
    }
    case LossKind::Reconstruction:
      if (oracle.empty()) throw InvalidArgument("missing required flag --oracle");
      (void)reference_function(oracle, dim);
      break;
    case LossKind::Eikonal:
      if (manifold.empty()) throw InvalidArgument("missing required flag --manifold");
      (void)ManifoldDescriptor::parse(manifold, dim);
      break;
  }
  FlowConfig f = flow;
  if (!step_auto) f.step_policy = StepPolicy::Custom;
  f.validate();
  if (!write_csv && !write_json) throw InvalidArgument("--formats: at least one format is required");
}

json ExperimentConfig::to_json() const {
  json j;
  j["command"] = to_string(command);
  json p;
  p["kind"] = kind ? cubflow::to_string(*kind) : "";
  p["d"] = dim;
  if (degree) p["n"] = *degree;
  if (!degrees.empty()) p["degrees"] = degrees;
  if (!oracle.empty()) p["oracle"] = oracle;
  if (!manifold.empty()) p["manifold"] = manifold;
  if (boundary_scale) p["boundary_scale"] = *boundary_scale;
  p["sobolev_order"] = sobolev_order;
  p["solver"] = cubflow::to_string(solver);
  j["problem"] = p;
  json f;
  if (step_auto) f["step"] = "auto";
  else f["step"] = flow.step;
  f["max_iters"] = flow.max_iters;
  f["grad_tol"] = flow.grad_tol;
  f["loss_tol"] = flow.loss_tol;
  if (!record_auto) f["record_every"] = flow.record_every;
  f["seed"] = flow.seed;
  f["init"] = init_auto ? std::string("auto") : cubflow::to_string(flow.init);
  j["flow"] = f;
  json o;
  o["dir"] = out_dir.string();
  json formats = json::array();
  if (write_csv) formats.push_back("csv");
  if (write_json) formats.push_back("json");
  o["formats"] = formats;
  o["plot_data"] = plot_data;
  j["output"] = o;
  j["jobs"] = jobs;
  return j;
}

// ---- output ----

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw NumericalError("format_double: conversion failed");
  return std::string(buf, ptr);
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::filesystem::filesystem_error("cannot open for writing", tmp, std::make_error_code(std::errc::io_error));
    os << content;
    os.flush();
    if (!os) throw std::filesystem::filesystem_error("write failed", tmp, std::make_error_code(std::errc::io_error));
  }
  std::filesystem::rename(tmp, path);
}

std::string trace_csv(const FlowTrace& trace) {
  std::string s = "j,loss,grad_norm,err_ref\n";
  for (const auto& r : trace.records) {
    s += std::to_string(r.j) + "," + format_double(r.loss) + "," + format_double(r.grad_norm) + ",";
    if (r.err_ref) s += format_double(*r.err_ref);
    s += "\n";
  }
  return s;
}

std::string sweep_csv(const std::vector<SweepPoint>& sweep) {
  std::string s = "n,err,loss_final,iters\n";
  for (const auto& p : sweep)
    s += std::to_string(p.n) + "," + format_double(p.err) + "," + format_double(p.loss_final) + "," +
         std::to_string(p.iters) + "\n";
  return s;
}

namespace {

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json fit_params(RateModel m, const std::vector<double>& p) {
  json j = json::object();
  if (p.size() < 2) return j;
  j["C"] = number(p[0]);
  switch (m) {
    case RateModel::Exponential: j["rho"] = number(p[1]); break;
    case RateModel::Algebraic: j["k"] = number(p[1]); break;
    case RateModel::StretchedExp:
      j["c"] = number(p[1]);
      if (p.size() > 2) j["alpha"] = number(p[2]);
      break;
  }
  return j;
}

}  // namespace

json report_json(const ComplexityReport& r, const ExperimentConfig& config) {
  json j;
  j["classification"] = to_string(r.classification);
  j["best_fit"] = {{"model", to_string(r.best_fit.model)},
                   {"params", fit_params(r.best_fit.model, r.best_fit.params)},
                   {"residual", number(r.best_fit.residual)}};
  j["runner_up_ratio"] = number(r.runner_up_ratio);
  j["budgets"] = json::array();
  for (const auto& b : r.budgets)
    j["budgets"].push_back({{"N", b.bits},
                            {"n", b.n_required},
                            {"j", b.j_required},
                            {"ops", number(b.ops)},
                            {"subgradient_fallback", b.subgradient_fallback}});
  j["sweep"] = json::array();
  for (const auto& p : r.sweep) j["sweep"].push_back({{"n", p.n}, {"err", number(p.err)}});
  if (r.constants) {
    j["constants"] = {{"sigma", number(r.constants->sigma)},
                      {"L", number(r.constants->lipschitz)},
                      {"contraction", number(r.constants->contraction)}};
  } else {
    j["constants"] = {{"sigma", nullptr}, {"L", nullptr}, {"contraction", nullptr}};
  }
  j["config_echo"] = config.to_json();
  j["candidates"] = json::array();
  for (const auto& c : r.best_fit.candidates)
    j["candidates"].push_back({{"model", to_string(c.model)},
                               {"params", fit_params(c.model, c.params)},
                               {"residual", number(c.residual)},
                               {"valid", c.valid}});
  if (r.analyticity) {
    j["analyticity"] = {{"kind", to_string(r.analyticity->kind)},
                        {"rho", r.analyticity->kind == AnalyticityEstimate::Kind::Resolved ? json("inf")
                                                                                            : number(r.analyticity->rho)},
                        {"geometric_rms", number(r.analyticity->geometric_rms)},
                        {"algebraic_rms", number(r.analyticity->algebraic_rms)}};
  }
  j["error_metric"] = r.error_metric;
  j["floored"] = r.best_fit.floored;
  j["notes"] = r.notes;
  return j;
}

bool validate_report(const json& r, std::string* why) {
  auto fail = [&](const std::string& m) {
    if (why) *why = m;
    return false;
  };
  auto num_or_null = [](const json& v) { return v.is_number() || v.is_null(); };
  if (!r.is_object()) return fail("report is not an object");
  for (const char* k : {"classification", "best_fit", "runner_up_ratio", "budgets", "sweep", "constants", "config_echo"})
    if (!r.contains(k)) return fail(std::string("missing key '") + k + "'");
  const auto& c = r["classification"];
  if (!c.is_string() || (c != "PolynomialTime" && c != "BlowupCandidate" && c != "Inconclusive"))
    return fail("classification must be PolynomialTime, BlowupCandidate or Inconclusive");
  const auto& b = r["best_fit"];
  if (!b.is_object() || !b.contains("model") || !b.contains("params") || !b.contains("residual"))
    return fail("best_fit needs model, params and residual");
  if (!b["model"].is_string() ||
      (b["model"] != "Exponential" && b["model"] != "Algebraic" && b["model"] != "StretchedExp"))
    return fail("best_fit.model is not a known model");
  if (!b["params"].is_object()) return fail("best_fit.params must be an object");
  for (const auto& [k, v] : b["params"].items())
    if (!num_or_null(v)) return fail("best_fit.params." + k + " must be a number");
  if (!num_or_null(b["residual"])) return fail("best_fit.residual must be a number");
  if (!num_or_null(r["runner_up_ratio"])) return fail("runner_up_ratio must be a number");
  if (!r["budgets"].is_array()) return fail("budgets must be an array");
  for (const auto& e : r["budgets"]) {
    for (const char* k : {"N", "n", "j"})
      if (!e.contains(k) || !e[k].is_number_integer()) return fail(std::string("budgets[].") + k + " must be an integer");
    if (!e.contains("ops") || !num_or_null(e["ops"])) return fail("budgets[].ops must be a number");
  }
  if (!r["sweep"].is_array()) return fail("sweep must be an array");
  for (const auto& e : r["sweep"]) {
    if (!e.contains("n") || !e["n"].is_number_integer()) return fail("sweep[].n must be an integer");
    if (!e.contains("err") || !num_or_null(e["err"])) return fail("sweep[].err must be a number");
  }
  const auto& k = r["constants"];
  if (!k.is_object()) return fail("constants must be an object");
  for (const char* f : {"sigma", "L", "contraction"})
    if (!k.contains(f) || !num_or_null(k[f])) return fail(std::string("constants.") + f + " must be a number");
  if (!r["config_echo"].is_object()) return fail("config_echo must be an object");
  return true;
}

// ---- commands ----

namespace {

struct Built {
  LossProblem problem;
  ReferenceSolution reference;
  int error_order = 1;
};

Built build(const ExperimentConfig& c, int n) {
  Built b;
  switch (*c.kind) {
    case LossKind::Poisson: {
      auto m = manufactured_poisson(c.oracle);
      b.problem = poisson_problem(m.source, m.boundary, n, c.dim);
      b.reference = m.solution;
      break;
    }
    case LossKind::Reconstruction: {
      b.reference = reference_function(c.oracle, c.dim);
      b.problem = reconstruction_problem(b.reference.value, n, c.dim, c.sobolev_order);
      b.error_order = std::min(c.sobolev_order, 1);
      break;
    }
    case LossKind::Eikonal: {
      const auto s = ManifoldDescriptor::parse(c.manifold, c.dim);
      b.problem = eikonal_problem(s, n);
      b.reference = l1_distance_reference(s);
      break;
    }
  }
  b.problem.boundary_scale = c.boundary_scale;
  return b;
}

FlowConfig effective_flow(const ExperimentConfig& c, LossKind kind) {
  FlowConfig f = c.flow;
  if (kind == LossKind::Eikonal) {
    f.step_policy = StepPolicy::Diminishing;
    f.step = c.step_auto ? 0.0 : c.flow.step;
    if (c.init_auto) f.init = InitPolicy::Reconstruction;
  } else {
    f.step_policy = c.step_auto ? StepPolicy::OneOverL : StepPolicy::Custom;
    if (c.init_auto) f.init = InitPolicy::Zero;
  }
  if (c.record_auto) f.record_every = std::max(1L, f.max_iters / 1000);
  return f;
}

const char* color_for(Classification c) {
  switch (c) {
    case Classification::PolynomialTime: return "\033[32m";
    case Classification::BlowupCandidate: return "\033[31m";
    case Classification::Inconclusive: return "\033[33m";
  }
  return "";
}

void prepare_out(const ExperimentConfig& c) { std::filesystem::create_directories(c.out_dir); }

int run_solve(const ExperimentConfig& c, std::ostream& out, std::ostream& err) {
  const Built b = build(c, *c.degree);
  const auto loss = make_loss(b.problem);
  const FlowConfig f = effective_flow(c, b.problem.kind);
  const int k = b.error_order;
  auto probe = [&](const Vector& theta) { return sobolev_error_sq(loss->surrogate(theta), b.reference, k); };

  FlowResult result;
  std::string status;
  prepare_out(c);
  try {
    if (loss->is_linear() && c.solver != SolverMode::Flow) {
      result.theta = direct_solve(*loss);
      const LossEval ev = loss->evaluate(result.theta);
      result.trace.records.push_back({0, ev.value, ev.gradient.norm(), ev.value, probe(result.theta)});
      result.trace.status = FlowStatus::GradTol;
      status = "direct";
    } else {
      if (c.solver == SolverMode::Direct) throw InvalidArgument("--solver direct: the eikonal loss has no direct solver");
      Vector theta0 = initial_guess(b.problem, f);
      result = loss->is_linear() ? euler_flow(*loss, std::move(theta0), f, probe)
                                 : subgradient_flow(*loss, std::move(theta0), f, probe);
      status = to_string(result.trace.status);
    }
  } catch (const FlowDiverged& e) {
    if (c.write_csv) write_atomic(c.out_dir / "trace.csv", trace_csv(e.partial().trace));
    err << "error: " << e.what() << " (partial trace written)\n";
    return kExitNumerical;
  }

  const double loss_value = loss->value(result.theta);
  const double error = std::sqrt(probe(result.theta));
  if (c.write_csv) write_atomic(c.out_dir / "trace.csv", trace_csv(result.trace));
  if (c.write_json) {
    json j;
    j["command"] = to_string(c.command);
    j["n"] = *c.degree;
    j["error_metric"] = "H^" + std::to_string(k) + " distance to " + b.reference.name;
    j["error"] = number(error);
    j["loss"] = number(loss_value);
    j["iterations"] = result.trace.iterations;
    j["status"] = status;
    if (loss->is_linear()) {
      const auto fc = flow_constants(*loss);
      j["constants"] = {{"sigma", number(fc.sigma)}, {"L", number(fc.lipschitz)}, {"contraction", number(fc.contraction)}};
    }
    j["coefficients"] = std::vector<double>(result.theta.data(), result.theta.data() + result.theta.size());
    j["config_echo"] = c.to_json();
    write_atomic(c.out_dir / "result.json", j.dump(2) + "\n");
  }
  out << to_string(c.command) << " " << cubflow::to_string(*c.kind) << " n=" << *c.degree << ": H" << k
      << "_error=" << format_double(error) << " loss=" << format_double(loss_value)
      << " iters=" << result.trace.iterations << " status=" << status << "\n";
  return kExitOk;
}

int run_sweep(const ExperimentConfig& c, std::ostream& out, const RunOptions& ro) {
  const Built b = build(c, c.degrees.front());
  ClassifyOptions opts;
  opts.solver = c.solver;
  opts.flow = effective_flow(c, b.problem.kind);
  opts.reference = b.reference;
  opts.jobs = c.jobs;
  if (b.problem.kind == LossKind::Reconstruction && b.problem.sobolev_order > 1)
    opts.reference.reset();  // Cauchy differences in the problem's own order
  const ComplexityReport report = classify(b.problem, c.degrees, opts);

  prepare_out(c);
  if (c.write_csv) write_atomic(c.out_dir / "sweep.csv", sweep_csv(report.sweep));
  if (c.plot_data) {
    std::string s = "n,err,model_err\n";
    for (const auto& p : report.sweep)
      s += std::to_string(p.n) + "," + format_double(p.err) + "," +
           format_double(report.best_fit.valid ? report.best_fit.predict(p.n) : std::nan("")) + "\n";
    write_atomic(c.out_dir / "plot_sweep.csv", s);
  }
  if (c.write_json) {
    const json j = report_json(report, c);
    std::string why;
    if (!validate_report(j, &why)) throw NumericalError("report failed validation: " + why);
    write_atomic(c.out_dir / "report.json", j.dump(2) + "\n");
  }
  const auto& fit = report.best_fit;
  std::ostringstream params;
  const json p = fit_params(fit.model, fit.params);
  for (const auto& [key, v] : p.items()) params << " " << key << "=" << v.dump();
  if (c.command == Command::Classify) {
    const std::string label = to_string(report.classification);
    if (ro.color) out << color_for(report.classification) << label << "\033[0m";
    else out << label;
    out << " (" << to_string(fit.model) << params.str() << ", runner-up ratio "
        << format_double(report.runner_up_ratio) << ")\n";
  } else {
    out << "sweep " << cubflow::to_string(*c.kind) << ": best fit " << to_string(fit.model) << params.str()
        << " residual=" << format_double(fit.residual) << "\n";
  }
  return kExitOk;
}

int run_check(const ExperimentConfig& c, std::ostream& out) {
  const int n = c.degree.value_or(4);
  const Built b = build(c, n);
  const auto loss = make_loss(b.problem);
  std::mt19937_64 rng(c.flow.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  constexpr int kSamples = 20;
  constexpr double kTol = 1e-6;
  double worst = 0.0;
  std::size_t skipped = 0;
  for (int s = 0; s < kSamples; ++s) {
    Vector theta(static_cast<Eigen::Index>(loss->num_params()));
    for (auto& v : theta) v = normal(rng);
    const auto g = check_gradient(*loss, theta, 1e-5);
    worst = std::max(worst, g.max_rel_error);
    skipped += g.skipped;
  }
  json j;
  j["n"] = n;
  j["gradient_max_rel_error"] = number(worst);
  j["gradient_skipped"] = skipped;
  std::ostringstream summary;
  summary << "check " << cubflow::to_string(*c.kind) << " n=" << n << ": gradient_rel_error=" << format_double(worst);
  if (loss->is_linear()) {
    const Vector star = direct_solve(*loss);
    const auto fc = flow_constants(*loss);
    const auto g = probe_qgc_rsi(*loss, star, 100, c.flow.seed);
    const double lambda = probe_convexity(*loss, star, 100, c.flow.seed);
    j["constants"] = {{"sigma", number(fc.sigma)}, {"L", number(fc.lipschitz)}, {"contraction", number(fc.contraction)}};
    j["qgc_min"] = number(g.qgc_min);
    j["rsi_min"] = number(g.rsi_min);
    j["convexity_min"] = number(lambda);
    summary << " qgc_min=" << format_double(g.qgc_min) << " sigma/2=" << format_double(fc.sigma / 2)
            << " convexity_min=" << format_double(lambda) << " sigma=" << format_double(fc.sigma);
  } else {
    FlowConfig f = effective_flow(c, LossKind::Eikonal);
    const Vector center = initial_guess(b.problem, f);
    const double mid = probe_midpoint_convexity(*loss, center, 100, c.flow.seed);
    j["midpoint_convexity_min"] = number(mid);
    summary << " midpoint_convexity_min=" << format_double(mid);
  }
  j["config_echo"] = c.to_json();
  prepare_out(c);
  if (c.write_json) write_atomic(c.out_dir / "check.json", j.dump(2) + "\n");
  out << summary.str() << "\n";
  return worst <= kTol ? kExitOk : kExitNumerical;
}

struct Flags {
  std::string problem, degrees, oracle, manifold, step, solver, out, config, init, formats;
  int d = 1, n = 0, jobs = 1, order = 0;
  long max_iters = 0, record_every = 1;
  double boundary_scale = 0.0, grad_tol = 0.0, loss_tol = 0.0;
  std::uint64_t seed = 0;
  bool plot = false;
};

void add_flags(CLI::App* sub, Flags& f) {
  sub->add_option("--problem", f.problem, "reconstruction | poisson | eikonal");
  sub->add_option("--d", f.d, "spatial dimension");
  sub->add_option("--n", f.n, "surrogate degree");
  sub->add_option("--degrees", f.degrees, "strictly increasing degree list a,b,c");
  sub->add_option("--oracle", f.oracle, "manufactured solution or reconstruction target");
  sub->add_option("--manifold", f.manifold, "point:X | l1sphere:C:R | hyperplane:AXIS:OFF");
  sub->add_option("--boundary-scale", f.boundary_scale, "boundary penalty (default n)");
  sub->add_option("--order", f.order, "Sobolev order of the reconstruction loss");
  sub->add_option("--solver", f.solver, "auto | direct | flow");
  sub->add_option("--step", f.step, "auto | REAL");
  sub->add_option("--init", f.init, "auto | zero | reconstruction | random");
  sub->add_option("--max-iters", f.max_iters, "iteration cap");
  sub->add_option("--grad-tol", f.grad_tol, "gradient norm tolerance");
  sub->add_option("--loss-tol", f.loss_tol, "loss tolerance");
  sub->add_option("--record-every", f.record_every, "trace stride");
  sub->add_option("--seed", f.seed, "random seed");
  sub->add_option("--jobs", f.jobs, "worker threads for sweeps");
  sub->add_option("--out", f.out, "output directory");
  sub->add_option("--formats", f.formats, "csv,json");
  sub->add_flag("--plot-data", f.plot, "write plot_sweep.csv");
  sub->add_option("--config", f.config, "JSON config file; flags override it");
}

ExperimentConfig merge(const CLI::App& sub, const Flags& f, Command command) {
  ExperimentConfig c;
  if (sub.count("--config")) {
    std::ifstream is(f.config);
    if (!is) throw InvalidArgument("--config: cannot read '" + f.config + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    c = parse_config(ss.str(), f.config);
  }
  c.command = command;
  if (command == Command::Reconstruct && !sub.count("--problem") && !c.kind) c.kind = LossKind::Reconstruction;
  if (sub.count("--problem")) c.kind = parse_kind(f.problem);
  if (sub.count("--d")) c.dim = f.d;
  if (sub.count("--n")) c.degree = f.n;
  if (sub.count("--degrees")) c.degrees = parse_degrees(f.degrees);
  if (sub.count("--oracle")) c.oracle = f.oracle;
  if (sub.count("--manifold")) c.manifold = f.manifold;
  if (sub.count("--boundary-scale")) c.boundary_scale = f.boundary_scale;
  if (sub.count("--order")) c.sobolev_order = f.order;
  if (sub.count("--solver")) c.solver = parse_solver(f.solver);
  if (sub.count("--step")) set_step(c, f.step, "--step");
  if (sub.count("--init")) set_init(c, f.init);
  if (sub.count("--max-iters")) c.flow.max_iters = f.max_iters;
  if (sub.count("--grad-tol")) c.flow.grad_tol = f.grad_tol;
  if (sub.count("--loss-tol")) c.flow.loss_tol = f.loss_tol;
  if (sub.count("--record-every")) {
    c.flow.record_every = f.record_every;
    c.record_auto = false;
  }
  if (sub.count("--seed")) c.flow.seed = f.seed;
  if (sub.count("--jobs")) c.jobs = f.jobs;
  if (sub.count("--out")) c.out_dir = f.out;
  if (sub.count("--formats")) {
    std::vector<std::string> list;
    std::stringstream ss(f.formats);
    std::string item;
    while (std::getline(ss, item, ',')) list.push_back(item);
    set_formats(c, list, "--formats");
  }
  if (sub.count("--plot-data")) c.plot_data = f.plot;
  return c;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const RunOptions& options) {
  CLI::App app{"Spectral gradient-flow PDE solver and convergence-rate classifier", "cubflow"};
  app.require_subcommand(1);
  Flags flags;
  const std::vector<std::pair<Command, const char*>> commands = {
      {Command::Solve, "solve one problem at degree --n"},
      {Command::Reconstruct, "reconstruct an oracle function at degree --n"},
      {Command::Sweep, "solve over --degrees and fit the error rate"},
      {Command::Classify, "sweep, fit and classify the problem"},
      {Command::Check, "gradient and convexity probes at degree --n"}};
  std::vector<std::pair<Command, CLI::App*>> subs;
  for (const auto& [cmd, desc] : commands) {
    auto* sub = app.add_subcommand(to_string(cmd), desc);
    add_flags(sub, flags);
    subs.emplace_back(cmd, sub);
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }

  try {
    Command command = Command::Solve;
    const CLI::App* sub = nullptr;
    for (const auto& [cmd, s] : subs)
      if (s->parsed()) {
        command = cmd;
        sub = s;
      }
    const ExperimentConfig config = merge(*sub, flags, command);
    config.validate();
    switch (command) {
      case Command::Solve:
      case Command::Reconstruct: return run_solve(config, out, err);
      case Command::Sweep:
      case Command::Classify: return run_sweep(config, out, options);
      case Command::Check: return run_check(config, out);
    }
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}

}  // namespace cubflow::cli
