#include "doctest.h"

#include "cubflow/cli.hpp"
#include "cubflow/error.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

using namespace cubflow;
using namespace cubflow::cli;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("cubflow_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

double field_after(const std::string& text, const std::string& key) {
  const auto pos = text.find(key + "=");
  REQUIRE(pos != std::string::npos);
  return std::stod(text.substr(pos + key.size() + 1));
}

}  // namespace

TEST_CASE("classify the Eikonal problem end to end") {
  TempDir dir("classify");
  const auto r = invoke({"classify", "--problem", "eikonal", "--d", "1", "--manifold", "point:0", "--degrees",
                         "4,8,16,32", "--out", dir.path.string()});
  CHECK(r.code == kExitOk);
  CHECK(r.out.rfind("BlowupCandidate", 0) == 0);
  REQUIRE(fs::exists(dir.path / "report.json"));
  CHECK(fs::exists(dir.path / "sweep.csv"));
  const auto report = nlohmann::json::parse(slurp(dir.path / "report.json"));
  std::string why;
  CHECK_MESSAGE(validate_report(report, &why), why);
  CHECK(report["classification"] == "BlowupCandidate");
  for (const char* key : {"classification", "best_fit", "runner_up_ratio", "budgets", "sweep", "constants", "config_echo"})
    CHECK(report.contains(key));
  CHECK(slurp(dir.path / "sweep.csv").rfind("n,err,loss_final,iters\n", 0) == 0);
}

TEST_CASE("solve Poisson") {
  TempDir dir("solve");
  const auto r = invoke({"solve", "--problem", "poisson", "--oracle", "sin_pi", "--n", "16", "--out", dir.path.string()});
  CHECK(r.code == kExitOk);
  CHECK(field_after(r.out, "H1_error") < 1e-6);
  CHECK(slurp(dir.path / "trace.csv").rfind("j,loss,grad_norm,err_ref\n", 0) == 0);
  const auto result = nlohmann::json::parse(slurp(dir.path / "result.json"));
  CHECK(result.is_object());
}

TEST_CASE("solve with a flow") {
  TempDir dir("flow");
  const auto r = invoke({"solve", "--problem", "reconstruction", "--oracle", "exp", "--n", "4", "--solver", "flow",
                         "--max-iters", "100", "--record-every", "10", "--out", dir.path.string()});
  CHECK(r.code == kExitOk);
  const auto csv = slurp(dir.path / "trace.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 11);
}

TEST_CASE("validation failures write nothing") {
  TempDir dir("missing");
  const auto r = invoke({"solve", "--problem", "poisson", "--oracle", "sin_pi", "--out", dir.path.string()});
  CHECK(r.code == kExitValidation);
  CHECK(r.err.find("--n") != std::string::npos);
  CHECK(fs::is_empty(dir.path));

  CHECK(invoke({"solve", "--n", "4", "--out", dir.path.string()}).code == kExitValidation);
  CHECK(invoke({"frobnicate"}).code == kExitValidation);
  CHECK(invoke({"solve", "--problem", "poisson", "--oracle", "nope", "--n", "4", "--out", dir.path.string()}).code ==
        kExitValidation);
  CHECK(invoke({"classify", "--problem", "poisson", "--oracle", "sin_pi", "--degrees", "8,4,12", "--out",
                dir.path.string()})
            .code == kExitValidation);
  CHECK(fs::is_empty(dir.path));
}

TEST_CASE("divergence exits 3 with a partial trace") {
  TempDir dir("diverge");
  const auto r = invoke({"solve", "--problem", "poisson", "--oracle", "sin_pi", "--n", "8", "--solver", "flow",
                         "--step", "1e6", "--out", dir.path.string()});
  CHECK(r.code == kExitNumerical);
  CHECK(fs::exists(dir.path / "trace.csv"));
}

TEST_CASE("config files") {
  const auto c = parse_config(R"({"command": "sweep", "problem": {"kind": "poisson", "oracle": "sin_pi",
      "degrees": [4, 8, 12]}, "flow": {"max_iters": 50, "step": "auto"}, "jobs": 2})");
  CHECK(c.command == Command::Sweep);
  CHECK(c.kind == LossKind::Poisson);
  CHECK(c.degrees == std::vector<int>{4, 8, 12});
  CHECK(c.flow.max_iters == 50);
  CHECK(c.step_auto);
  CHECK(c.jobs == 2);
  CHECK_NOTHROW(c.validate());

  try {
    parse_config(R"({"problem": {"kind": "poisson", "d": "two"}})");
    FAIL("expected a field error");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("problem.d") != std::string::npos);
  }
  try {
    parse_config(R"({"problem": {"colour": 1}})");
    FAIL("expected an unknown key error");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("colour") != std::string::npos);
  }
  try {
    parse_config("{\n  \"problem\": {\n    \"kind\": poisson\n  }\n}", "run.json");
    FAIL("expected a parse error");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("run.json") != std::string::npos);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }

  const auto echo = c.to_json();
  CHECK(echo["problem"]["kind"] == "poisson");
}

TEST_CASE("flags override the config file") {
  TempDir dir("config");
  const fs::path cfg = dir.path / "run.json";
  const fs::path out = dir.path / "out";
  {
    std::ofstream f(cfg);
    f << R"({"command": "solve", "problem": {"kind": "poisson", "oracle": "sin_pi", "n": 4},
            "output": {"dir": ")" << out.generic_string() << R"("}})";
  }
  const auto base = invoke({"solve", "--config", cfg.string()});
  CHECK(base.code == kExitOk);
  CHECK(base.out.find("n=4") != std::string::npos);
  const auto over = invoke({"solve", "--config", cfg.string(), "--n", "12"});
  CHECK(over.code == kExitOk);
  CHECK(over.out.find("n=12") != std::string::npos);
  CHECK(fs::exists(out / "result.json"));

  CHECK(invoke({"solve", "--config", (dir.path / "absent.json").string()}).code == kExitValidation);
}

TEST_CASE("sweeps are deterministic and parallel-safe") {
  TempDir dir("sweep");
  const auto a = dir.path / "a";
  const auto b = dir.path / "b";
  const std::vector<std::string> common = {"--problem", "eikonal", "--manifold", "point:0.2", "--degrees", "4,6,8",
                                           "--max-iters", "300", "--plot-data"};
  auto args_a = std::vector<std::string>{"sweep"};
  args_a.insert(args_a.end(), common.begin(), common.end());
  auto args_b = args_a;
  args_a.insert(args_a.end(), {"--jobs", "1", "--out", a.string()});
  args_b.insert(args_b.end(), {"--jobs", "3", "--out", b.string()});
  REQUIRE(invoke(args_a).code == kExitOk);
  REQUIRE(invoke(args_b).code == kExitOk);
  CHECK(slurp(a / "sweep.csv") == slurp(b / "sweep.csv"));
  CHECK(fs::exists(a / "plot_sweep.csv"));
}

TEST_CASE("gradient check command") {
  TempDir dir("check");
  const auto r = invoke({"check", "--problem", "poisson", "--oracle", "sin_sin", "--d", "2", "--n", "4", "--out",
                         dir.path.string()});
  CHECK(r.code == kExitOk);
  CHECK(fs::exists(dir.path / "check.json"));
}

TEST_CASE("number formatting round trips") {
  for (double v : {0.0, 1.0, -2.5, 0.1, 1.0 / 3.0, 6.02214076e23, 5e-324, std::numeric_limits<double>::max()}) {
    const std::string s = format_double(v);
    double back = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), back);
    CHECK(back == v);
  }
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
}

TEST_CASE("atomic writes") {
  TempDir dir("atomic");
  const auto target = dir.path / "file.txt";
  write_atomic(target, "first");
  write_atomic(target, "second");
  CHECK(slurp(target) == "second");
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir.path)) ++files;
  CHECK(files == 1);
  CHECK_THROWS(write_atomic(dir.path / "missing" / "x.txt", "x"));
}

TEST_CASE("report validation rejects malformed reports") {
  std::string why;
  CHECK_FALSE(validate_report(nlohmann::json::object(), &why));
  CHECK_FALSE(why.empty());

  TempDir dir("report");
  REQUIRE(invoke({"classify", "--problem", "poisson", "--oracle", "sin_pi", "--degrees", "4,8,12,16", "--out",
                  dir.path.string()})
              .code == kExitOk);
  auto report = nlohmann::json::parse(slurp(dir.path / "report.json"));
  CHECK(report["classification"] == "PolynomialTime");
  CHECK(validate_report(report));
  report["best_fit"]["model"] = "Quadratic";
  CHECK_FALSE(validate_report(report, &why));
  report = nlohmann::json::parse(slurp(dir.path / "report.json"));
  report.erase("budgets");
  CHECK_FALSE(validate_report(report, &why));
  CHECK(why.find("budgets") != std::string::npos);
}
