#pragma once

#include "cubflow/analysis.hpp"
#include "cubflow/flow.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace cubflow::cli {

enum class Command { Solve, Reconstruct, Sweep, Classify, Check };

std::string to_string(Command c);

/// Exit codes of run().
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumerical = 3;

struct ExperimentConfig {
  Command command = Command::Solve;
  // problem block
  std::optional<LossKind> kind;
  int dim = 1;
  std::optional<int> degree;
  std::vector<int> degrees;
  std::string oracle;
  std::string manifold;
  std::optional<double> boundary_scale;
  int sobolev_order = 0;
  SolverMode solver = SolverMode::Auto;
  // flow block
  FlowConfig flow;
  bool step_auto = true;    // 1/L for linear losses, c = 1/L diminishing for the Eikonal loss
  bool init_auto = true;    // zero for linear losses, reconstruction for the Eikonal loss
  bool record_auto = true;  // about 1000 records per run
  // output block
  std::filesystem::path out_dir = ".";
  bool write_csv = true;
  bool write_json = true;
  bool plot_data = false;
  int jobs = 1;

  /// Throws InvalidArgument naming the offending field.
  void validate() const;
  nlohmann::json to_json() const;
};

/// Parses a JSON config document; `source` names it in diagnostics.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "config");

/// Shortest decimal string that round-trips to the same double.
std::string format_double(double v);

/// Writes through a temporary file in the same directory, then renames.
void write_atomic(const std::filesystem::path& path, const std::string& content);

std::string trace_csv(const FlowTrace& trace);
std::string sweep_csv(const std::vector<SweepPoint>& sweep);
nlohmann::json report_json(const ComplexityReport& report, const ExperimentConfig& config);

/// Checks the report layout; on failure `why` names the first problem.
bool validate_report(const nlohmann::json& report, std::string* why = nullptr);

struct RunOptions {
  bool color = false;
};

/// Parses argv-style arguments (without the program name) and runs the command.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const RunOptions& options = {});

}  // namespace cubflow::cli
