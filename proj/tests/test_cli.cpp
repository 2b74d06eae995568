#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "canard/app.hpp"

using namespace canard;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = CANARD_CONFIG_DIR;

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "canard_test_cli" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << text;
  return p;
}

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

Result run(const std::string& cmd, const fs::path& config, const fs::path& out,
           std::optional<std::size_t> workers = {}) {
  app::Options opt;
  opt.config = config;
  opt.out = out;
  opt.workers = workers;
  std::ostringstream o, e;
  Result r;
  r.code = app::run(cmd, opt, o, e);
  r.out = o.str();
  r.err = e.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  return {std::istreambuf_iterator<char>(is), {}};
}

const char* kReduced = R"({
  "schema_version": 1,
  "system": {"kind": "reduced", "params": {"alpha": 2.0, "beta": 0.75, "gamma": 0.5, "b": 30.0,
                                           "c": 2.5, "d": 1.18, "r": 1.65, "epsilon": 0.01}},
  "initial_state": {"x": 0.8, "y": 28.0},
  "integration": {"method": "rk4", "dt": 0.001, "t_end": 20.0, "sample_stride": 10}
})";

}  // namespace

TEST(Cli, SimulateWritesCsvRunJsonAndSummary) {
  const fs::path d = fresh_dir("simulate");
  const Result r = run("simulate", write_config(d, kReduced), d / "out");
  ASSERT_EQ(r.code, 0) << r.err;
  const json s = json::parse(r.out);
  EXPECT_EQ(s["status"], "ok");
  EXPECT_TRUE(s.contains("final"));
  EXPECT_TRUE(s.contains("y_min"));
  EXPECT_TRUE(s.contains("events"));
  EXPECT_EQ(slurp(d / "out" / "trajectory.csv").substr(0, 12), "t,x,y,u,v,H\n");
  EXPECT_EQ(slurp(d / "out" / "manifold.csv").substr(0, 19), "y,x,dfdx,stability\n");
  const json run_json = json::parse(slurp(d / "out" / "run.json"));
  EXPECT_EQ(run_json["config"]["integration"]["rtol"], 1e-8);
}

TEST(Cli, RerunningRunJsonIsBitwiseIdentical) {
  const fs::path d = fresh_dir("rerun");
  ASSERT_EQ(run("simulate", write_config(d, kReduced), d / "a").code, 0);
  ASSERT_EQ(run("simulate", d / "a" / "run.json", d / "b").code, 0);
  EXPECT_EQ(slurp(d / "a" / "trajectory.csv"), slurp(d / "b" / "trajectory.csv"));
  EXPECT_EQ(json::parse(slurp(d / "a" / "run.json"))["config"],
            json::parse(slurp(d / "b" / "run.json"))["config"]);
}

TEST(Cli, ZeroLengthRunGivesHeaderOnlyCsv) {
  const fs::path d = fresh_dir("zero");
  json j = json::parse(kReduced);
  j["integration"]["t_end"] = 0.0;
  ASSERT_EQ(run("simulate", write_config(d, j.dump()), d / "out").code, 0);
  EXPECT_EQ(slurp(d / "out" / "trajectory.csv"), "t,x,y,u,v,H\n");
}

TEST(Cli, RestStateOnTheManifoldStaysPut) {
  const fs::path d = fresh_dir("rest");
  DecisionParamsReduced p;
  p.r = 1.65;
  const double x = 1.0 / p.r;
  double lo = 0.0, hi = 60.0;  // F increases with y
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (eval_reduced({x, mid}, p).x > 0.0 ? hi : lo) = mid;
  }
  json j = json::parse(kReduced);
  j["initial_state"] = {{"x", x}, {"y", 0.5 * (lo + hi)}};
  ASSERT_EQ(run("simulate", write_config(d, j.dump()), d / "out").code, 0);
  const Trajectory tr = read_trajectory_csv(d / "out" / "trajectory.csv");
  for (const State& s : tr.states) {
    EXPECT_NEAR(s.x, x, 1e-10);
    EXPECT_NEAR(s.y, 0.5 * (lo + hi), 1e-10);
  }
}

TEST(Cli, ControlOffIsBitwiseIdenticalToSimulate) {
  const fs::path d = fresh_dir("off");
  json j = json::parse(kReduced);
  ASSERT_EQ(run("simulate", write_config(d, j.dump()), d / "sim").code, 0);
  j["controller"] = {{"mode", "off"}};
  ASSERT_EQ(run("control", write_config(d, j.dump()), d / "ctl").code, 0);
  EXPECT_EQ(slurp(d / "sim" / "trajectory.csv"), slurp(d / "ctl" / "trajectory.csv"));
}

TEST(Cli, ControlWritesReportAndTargetLevel) {
  const fs::path d = fresh_dir("control");
  json j = json::parse(kReduced);
  j["controller"] = {{"mode", "fast_slow"}, {"targets", {"leftmost"}}};
  const Result r = run("control", write_config(d, j.dump()), d / "out");
  ASSERT_EQ(r.code, 0) << r.err;
  const json rep = json::parse(slurp(d / "out" / "report.json"));
  EXPECT_TRUE(rep["report"].contains("lyapunov_violations"));
  EXPECT_TRUE(rep["report"].contains("region_exits"));
  EXPECT_TRUE(rep["report"].contains("time_to_tol"));
  EXPECT_NEAR(rep["targets"][0]["x"].get<double>(), 0.6163, 1e-3);
  EXPECT_EQ(slurp(d / "out" / "target_level.csv").substr(0, 13), "target,x,y\n0,");
  // The resolved controller carries explicit coefficients.
  const json cfg = json::parse(slurp(d / "out" / "run.json"))["config"];
  EXPECT_TRUE(cfg["controller"]["targets"][0].is_object());
  EXPECT_EQ(cfg["controller"]["r"], 1.65);
}

TEST(Cli, FoldsReport) {
  const fs::path d = fresh_dir("folds");
  const Result r = run("folds", kConfigs / "folds.json", d / "out");
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(slurp(d / "out" / "folds.json"));
  ASSERT_EQ(j["folds"].size(), 2u);
  for (const char* key : {"x_star", "y_star", "k", "a_c", "b_c", "sigma", "residual"})
    EXPECT_TRUE(j["folds"][0].contains(key)) << key;
}

TEST(Cli, FoldsInAZeroFoldRegion) {
  const fs::path d = fresh_dir("folds0");
  json j = json::parse(kReduced);
  j["system"]["params"] = {{"alpha", 2.5}, {"beta", 1.0}, {"gamma", 4.25},
                           {"c", 3.0},     {"d", 1.3},    {"r", 1.6156}};
  const Result r = run("folds", write_config(d, j.dump()), d / "out");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(json::parse(r.out)["folds"].empty());
}

TEST(Cli, ExpandWithPlantPerturbation) {
  const fs::path d = fresh_dir("expand");
  const Result r = run("expand", kConfigs / "expand_perturbed.json", d / "out");
  ASSERT_EQ(r.code, 0) << r.err;
  const json f = json::parse(slurp(d / "out" / "expansion.json"))["folds"][0];
  EXPECT_EQ(f["robustness"], "satisfied");
  EXPECT_NEAR(f["delta_b"].get<double>(), 0.00743, 1e-4);
}

TEST(Cli, ExitCodes) {
  const fs::path d = fresh_dir("codes");
  json j = json::parse(kReduced);
  j["system"]["params"]["d"] = 0.9;
  EXPECT_EQ(run("folds", write_config(d, j.dump()), d / "o1").code, app::kConfigError);
  EXPECT_EQ(run("folds", write_config(d, "{ not json"), d / "o2").code, app::kConfigError);
  EXPECT_EQ(run("folds", d / "missing.json", d / "o3").code, app::kIoError);
  const fs::path blocker = d / "file";
  std::ofstream(blocker) << "x";
  EXPECT_EQ(run("simulate", write_config(d, kReduced), blocker / "sub").code, app::kIoError);

  // x' = x^2 + y blows up in finite time from (2, 0).
  j = json::parse(R"({"schema_version": 1,
      "system": {"kind": "normal_form", "params": {"a_c": 1.0, "b_c": 1.0}},
      "initial_state": {"x": 2.0, "y": 0.0},
      "integration": {"method": "rk45", "t_end": 5.0}})");
  const Result r = run("simulate", write_config(d, j.dump()), d / "o4");
  EXPECT_EQ(r.code, app::kNumericalError) << r.out;
  EXPECT_TRUE(fs::exists(d / "o4" / "trajectory.csv"));
  EXPECT_EQ(json::parse(slurp(d / "o4" / "run.json"))["status"], "integration_failed");
}

namespace {

const char* kSweep = R"({
  "schema_version": 1,
  "system": {"kind": "reduced", "params": {"alpha": 2.0, "beta": 1.0, "gamma": 0.5, "b": 30.0,
                                           "c": 3.0, "d": 1.3, "r": 1.6156, "epsilon": 0.01}},
  "sweep": {"x": {"param": "alpha", "lo": 0.0, "hi": 3.0, "n": 8},
            "y": {"param": "gamma", "lo": 0.0, "hi": 6.0, "n": 8}}
})";

}  // namespace

TEST(Cli, SweepIsIndependentOfWorkers) {
  const fs::path d = fresh_dir("sweep");
  const fs::path cfg = write_config(d, kSweep);
  ASSERT_EQ(run("sweep", cfg, d / "w1", 1).code, 0);
  ASSERT_EQ(run("sweep", cfg, d / "w8", 8).code, 0);
  EXPECT_EQ(slurp(d / "w1" / "regions.csv"), slurp(d / "w8" / "regions.csv"));
  const json s = json::parse(slurp(d / "w1" / "regions_summary.json"));
  EXPECT_TRUE(s.contains("histogram"));
  EXPECT_TRUE(s.contains("boundary_cells"));
}

TEST(Cli, WorkersFlagOverridesEnvironment) {
  const fs::path d = fresh_dir("env");
  const fs::path cfg = write_config(d, kSweep);
  ::setenv("CANARD_WORKERS", "3", 1);
  const Result a = run("sweep", cfg, d / "a");
  const Result b = run("sweep", cfg, d / "b", 2);
  ::setenv("CANARD_WORKERS", "zero", 1);
  const Result c = run("sweep", cfg, d / "c");
  ::unsetenv("CANARD_WORKERS");
  EXPECT_EQ(json::parse(a.out)["workers"], 3);
  EXPECT_EQ(json::parse(b.out)["workers"], 2);
  EXPECT_EQ(c.code, app::kConfigError);
}

TEST(Cli, SweepResumesFromItsCache) {
  const fs::path d = fresh_dir("resume");
  const fs::path cfg = write_config(d, kSweep);
  ASSERT_EQ(run("sweep", cfg, d / "ref", 1).code, 0);
  const std::string reference = slurp(d / "ref" / "regions.csv");

  // Keep 30 cached rows plus a torn line, as left by an interrupted run.
  fs::create_directories(d / "part");
  fs::copy_file(d / "ref" / "sweep_cache.json", d / "part" / "sweep_cache.json");
  {
    std::ifstream is(d / "ref" / "sweep_cache.csv");
    std::ofstream os(d / "part" / "sweep_cache.csv");
    std::string line;
    for (int i = 0; i <= 30 && std::getline(is, line); ++i) os << line << '\n';
    os << "5,3,1.2";
  }
  const Result r = run("sweep", cfg, d / "part", 2);
  ASSERT_EQ(r.code, 0) << r.err;
  const json s = json::parse(r.out);
  EXPECT_EQ(s["cells_reused"], 30);
  EXPECT_EQ(s["cells_computed"], 64 - 30);
  EXPECT_EQ(slurp(d / "part" / "regions.csv"), reference);

  // A changed spec invalidates the cache.
  json j = json::parse(kSweep);
  j["sweep"]["y_scan_hi"] = 50.0;
  const Result fresh = run("sweep", write_config(d, j.dump()), d / "part", 2);
  EXPECT_EQ(json::parse(fresh.out)["cells_reused"], 0);
}

#ifdef CANARD_CLI_PATH
TEST(Cli, BinaryExitCodes) {
  const fs::path d = fresh_dir("binary");
  const std::string exe = CANARD_CLI_PATH;
  const auto code = [&](const std::string& args) {
    const int s = std::system((exe + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  EXPECT_EQ(code("folds --config " + (kConfigs / "folds.json").string() + " --out " +
                 (d / "ok").string() + " --seedless"),
            0);
  EXPECT_EQ(code("folds --config " + (d / "nope.json").string() + " --out " + (d / "x").string()),
            4);
  EXPECT_EQ(code("folds --out " + (d / "x").string()), 2);
  EXPECT_EQ(code("bogus --config a --out b"), 2);
  EXPECT_TRUE(json::parse(slurp(d / "ok" / "run.json"))["seedless"].get<bool>());
}
#endif

TEST(Cli, RelaxationOscillationStaysInItsBand) {
  const fs::path d = fresh_dir("relaxation");
  const Result r = run("simulate", kConfigs / "relaxation_oscillation.json", d / "out");
  ASSERT_EQ(r.code, 0) << r.err;
  const Trajectory tr = read_trajectory_csv(d / "out" / "trajectory.csv");
  double lo = 1e9, hi = -1e9;
  int upward = 0;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    lo = std::min(lo, tr.states[i].y);
    hi = std::max(hi, tr.states[i].y);
    if (i > 0 && tr.states[i - 1].x < 0.8 && tr.states[i].x >= 0.8) ++upward;
  }
  EXPECT_GE(lo, 24.0);
  EXPECT_LE(hi, 30.0);
  EXPECT_GT(hi - lo, 1.0);
  EXPECT_GE(upward, 3);  // repeated fast jumps, not convergence
}

TEST(Cli, OptimalFoldCycleIsSmallAndCentred) {
  const fs::path d = fresh_dir("f2");
  const Result r = run("control", kConfigs / "canard_f2.json", d / "out");
  ASSERT_EQ(r.code, 0) << r.err;
  const json rep = json::parse(slurp(d / "out" / "report.json"));
  EXPECT_NEAR(rep["cycle_centre_x"].get<double>(), 0.977, 5e-3);
  EXPECT_EQ(rep["report"]["unrecovered_exits"], 0);
  const Trajectory tr = read_trajectory_csv(d / "out" / "trajectory.csv");
  for (std::size_t i = tr.size() / 2; i < tr.size(); ++i) EXPECT_NEAR(tr.states[i].x, 0.977, 0.02);
}

TEST(Cli, FastOnlyRunHasNoUnrecoveredExits) {
  const fs::path d = fresh_dir("fast_only");
  const Result r = run("control", kConfigs / "canard_fast_only.json", d / "out");
  ASSERT_EQ(r.code, 0) << r.err;
  const json rep = json::parse(r.out);
  EXPECT_EQ(rep["report"]["unrecovered_exits"], 0);
  EXPECT_EQ(rep["trajectory"]["status"], "completed");
}

TEST(Cli, EveryShippedConfigParses) {
  for (const auto& e : fs::directory_iterator(kConfigs)) {
    if (e.path().extension() != ".json") continue;
    EXPECT_NO_THROW(app::load_config(e.path())) << e.path();
  }
}
