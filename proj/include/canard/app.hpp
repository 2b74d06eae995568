#pragma once

// Subcommands behind the canard CLI. Each takes a parsed config and an output
// directory, writes its files plus run.json, and returns an exit code.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "canard/analysis.hpp"
#include "canard/config.hpp"
#include "canard/control.hpp"
#include "canard/error.hpp"
#include "canard/expansion.hpp"
#include "canard/integrator.hpp"
#include "canard/io.hpp"
#include "canard/manifold.hpp"
#include "canard/sweep.hpp"

namespace canard::app {

enum ExitCode : int { kOk = 0, kConfigError = 2, kNumericalError = 3, kIoError = 4 };

struct Options {
  std::filesystem::path config;
  std::filesystem::path out;
  std::optional<std::size_t> workers;
  bool seedless = false;
};

/// Reads a config file. Unreadable files are I/O errors, malformed JSON is a
/// config error.
inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("malformed JSON: ") + e.what());
  }
  return parse_config(doc);
}

// ---------------------------------------------------------------------------
// Fields and domains

/// Calls fn(field, domain, epsilon) with the fast field of a model.
template <class Fn>
decltype(auto) with_field(const PlantModel& m, const ManifoldSpec& ms, Fn&& fn) {
  const auto domain = [&](ScanDomain d) {
    d.cells = ms.cells;
    if (ms.x_lo) d.lo = *ms.x_lo;
    if (ms.x_hi) d.hi = *ms.x_hi;
    return d;
  };
  if (const auto* p = std::get_if<DecisionParamsReduced>(&m))
    return fn(DecisionField(*p), domain(scan_domain(*p, ms.cells)), p->epsilon);
  if (const auto* p = std::get_if<DecisionParamsFull>(&m))
    return fn(DecisionField(*p), domain(scan_domain(*p, ms.cells)), p->epsilon);
  if (const auto* p = std::get_if<NormalFormParams>(&m))
    return fn(NormalFormField(*p), domain({}), p->epsilon);
  const auto& pn = std::get<PerturbedNormalForm>(m);
  const NormalFormParams eff = NormalFormParams::make(pn.nf.a_c + pn.pert.delta_a,
                                                      pn.nf.b_c + pn.pert.delta_b, pn.nf.k,
                                                      pn.nf.epsilon);
  return fn(NormalFormField(eff), domain({}), eff.epsilon);
}

inline FoldReport model_folds(const PlantModel& m, const RunConfig& c) {
  return with_field(m, c.manifold, [&](const auto& field, const ScanDomain& dom, double) {
    return find_folds(field, dom, c.fold_search);
  });
}

inline Expansion model_expansion(const PlantModel& m, const RunConfig& c, const FoldPoint& f) {
  return with_field(m, c.manifold, [&](const auto& field, const ScanDomain&, double eps) {
    return expand_at_fold(field, f, eps, c.expansion);
  });
}

inline std::vector<TracePoint> model_trace(const PlantModel& m, const RunConfig& c) {
  return with_field(m, c.manifold, [&](const auto& field, const ScanDomain& dom, double) {
    return trace_manifold(field, dom, c.manifold.y_lo, c.manifold.y_hi);
  });
}

// ---------------------------------------------------------------------------
// JSON views

inline json fold_json(const FoldPoint& f) {
  return {{"x_star", f.x_star}, {"y_star", f.y_star},   {"k", f.k},
          {"a_c", f.a_c},       {"b_c", f.b_c},         {"sigma", f.sigma},
          {"residual", f.residual}, {"converged", f.converged}};
}

inline json expansion_json(const Expansion& e) {
  json j = fold_json(e.fold);
  j["derivatives"] = e.derivatives;
  j["scale"] = e.scale;
  j["warnings"] = e.warnings;
  return j;
}

inline json target_json(const ControlTarget& t, const std::string& label) {
  return {{"label", label},        {"x", t.fold.x},   {"y", t.fold.y},
          {"a_c", t.nf.a_c},       {"b_c", t.nf.b_c}, {"k", t.nf.k},
          {"sigma", t.nf.sigma},   {"h", t.h.value},  {"log_abs_h", t.h.log_abs},
          {"h_underflow", t.h.underflow}};
}

inline json report_json(const ConvergenceReport& r) {
  return {{"time_to_tol", r.time_to_tol ? json(*r.time_to_tol) : json(nullptr)},
          {"threshold", r.threshold},
          {"max_abs_H_err_after_transient", r.max_abs_H_err_after_transient},
          {"final_abs_H_err", r.final_abs_H_err},
          {"lyapunov_violations", r.lyapunov_violations},
          {"region_exits", r.region_exits},
          {"unrecovered_exits", r.unrecovered_exits},
          {"overflow_samples", r.overflow_samples}};
}

// ---------------------------------------------------------------------------
// Targets

struct ResolvedController {
  ControllerConfig config;
  std::vector<std::string> labels;
  ControllerSpec spec;  // with every target explicit
};

inline ResolvedController resolve_controller(const RunConfig& c) {
  if (!c.controller) throw ConfigError("controller", "is required");
  const ControllerSpec& spec = *c.controller;
  const bool decision = is_decision_model(c.system);
  std::vector<TargetSpec> wanted = spec.targets;
  if (wanted.empty()) wanted.push_back(parse_target(decision ? "leftmost" : "origin", "controller.targets[0]"));

  std::optional<FoldReport> folds;
  const auto fold_at = [&](const TargetSpec& t, const std::string& path) -> FoldPoint {
    if (!decision) throw ConfigError(path, "fold targets need a decision model; use origin");
    if (!folds) folds = model_folds(c.system, c);
    if (folds->folds.empty()) throw NumericalError("no folds found for the controller targets");
    if (t.kind == TargetSpec::Kind::leftmost) return folds->folds.front();
    if (t.kind == TargetSpec::Kind::rightmost) return folds->folds.back();
    if (t.index >= folds->folds.size())
      throw ConfigError(path, "fold index " + std::to_string(t.index) + " out of range (" +
                                  std::to_string(folds->folds.size()) + " folds)");
    return folds->folds[t.index];
  };

  const double eps = plant_epsilon(c.system);
  ResolvedController out;
  out.spec = spec;
  out.spec.targets.clear();
  for (std::size_t i = 0; i < wanted.size(); ++i) {
    const TargetSpec& t = wanted[i];
    const std::string path = "controller.targets[" + std::to_string(i) + "]";
    ControlTarget ct;
    switch (t.kind) {
      case TargetSpec::Kind::origin: {
        if (decision) throw ConfigError(path, "origin is only meaningful for normal forms");
        const NormalFormParams nf = std::holds_alternative<NormalFormParams>(c.system)
                                        ? std::get<NormalFormParams>(c.system)
                                        : std::get<PerturbedNormalForm>(c.system).nf;
        ct = make_target({0.0, 0.0}, nf, spec.c_c);
        break;
      }
      case TargetSpec::Kind::explicit_fold:
        ct = make_target({t.x, t.y}, NormalFormParams::make(t.a_c, t.b_c, t.k, eps), spec.c_c);
        break;
      default: {
        const Expansion e = model_expansion(c.system, c, fold_at(t, path));
        ct = make_target({e.fold.x_star, e.fold.y_star}, e.normal_form, spec.c_c);
      }
    }
    if (spec.h) ct.h = target_level_from_value(*spec.h);
    out.config.targets.push_back(ct);
    out.labels.push_back(t.label);

    TargetSpec ex;
    ex.kind = TargetSpec::Kind::explicit_fold;
    ex.x = ct.fold.x;
    ex.y = ct.fold.y;
    ex.a_c = ct.nf.a_c;
    ex.b_c = ct.nf.b_c;
    ex.k = ct.nf.k;
    ex.label = t.label;
    out.spec.targets.push_back(ex);
  }

  out.config.B_c = spec.B_c;
  out.config.c_c = spec.c_c;
  out.config.mode = spec.mode;
  out.config.target = spec.target;
  out.config.schedule = spec.schedule;
  out.config.max_dx = spec.max_dx;
  if (decision) {
    const double r = spec.r.value_or(std::holds_alternative<DecisionParamsReduced>(c.system)
                                         ? std::get<DecisionParamsReduced>(c.system).r
                                         : std::get<DecisionParamsFull>(c.system).r);
    out.config.r = r;
    out.spec.r = r;
    if (!out.config.max_dx) out.config.max_dx = kDecisionMaxDx;
  } else {
    out.config.r = spec.r;
  }
  out.spec.max_dx = out.config.max_dx;
  out.config.validate();
  return out;
}

// ---------------------------------------------------------------------------
// Run bookkeeping

class Run {
 public:
  Run(std::string command, const Options& opt, RunConfig cfg)
      : command_(std::move(command)), opt_(opt), cfg_(std::move(cfg)) {
    std::error_code ec;
    std::filesystem::create_directories(opt_.out, ec);
    if (ec || !std::filesystem::is_directory(opt_.out))
      throw IoError("cannot create output directory '" + opt_.out.string() + "'");
  }

  std::filesystem::path file(const std::string& name) {
    outputs_.push_back(name);
    return opt_.out / name;
  }

  RunConfig& config() { return cfg_; }
  void warn(std::string w) { warnings_.push_back(std::move(w)); }

  /// Writes run.json and returns the stdout summary.
  json finish(const std::string& status, json summary) {
    json run;
    run["schema_version"] = kSchemaVersion;
    run["command"] = command_;
    run["seedless"] = opt_.seedless;
    run["status"] = status;
    run["config"] = to_json(cfg_);
    run["outputs"] = outputs_;
    run["warnings"] = warnings_;
    write_json(opt_.out / "run.json", run);
    summary["command"] = command_;
    summary["status"] = status;
    summary["outputs"] = outputs_;
    summary["warnings"] = warnings_;
    return summary;
  }

 private:
  std::string command_;
  Options opt_;
  RunConfig cfg_;
  std::vector<std::string> outputs_;
  std::vector<std::string> warnings_;
};

inline void write_manifold(Run& run, const PlantModel& m) {
  try {
    write_manifold_csv(run.file("manifold.csv"), model_trace(m, run.config()));
  } catch (const NumericalError& e) {
    run.warn(std::string("manifold.csv skipped: ") + e.what());
  } catch (const PoleError& e) {
    run.warn(std::string("manifold.csv skipped: ") + e.what());
  }
}

inline State require_state(const RunConfig& c) {
  if (!c.initial_state) throw ConfigError("initial_state", "is required");
  return *c.initial_state;
}

inline const IntegrationConfig& require_integration(const RunConfig& c) {
  if (!c.integration) throw ConfigError("integration", "is required");
  return *c.integration;
}

// ---------------------------------------------------------------------------
// Commands

inline int cmd_simulate(const RunConfig& cfg, const Options& opt, std::ostream& out) {
  Run run("simulate", opt, cfg);
  const PlantModel plant = cfg.plant();
  const State s0 = require_state(cfg);
  const IntegrationConfig& icfg = require_integration(cfg);
  const Trajectory tr = integrate([&](double, State s) { return open_loop(s, plant); }, s0, icfg);
  write_trajectory_csv(run.file("trajectory.csv"), tr);
  write_manifold(run, plant);
  json summary = run.finish(tr.ok() ? "ok" : "integration_failed", trajectory_summary(tr));
  out << summary.dump(2) << '\n';
  return tr.ok() ? kOk : kNumericalError;
}

inline int cmd_folds(const RunConfig& cfg, const Options& opt, std::ostream& out) {
  Run run("folds", opt, cfg);
  const PlantModel plant = cfg.plant();
  const FoldReport rep = model_folds(plant, cfg);
  json j;
  j["converged"] = rep.converged;
  j["folds"] = json::array();
  for (const FoldPoint& f : rep.folds) {
    json fj;
    try {
      fj = expansion_json(model_expansion(plant, cfg, f));
    } catch (const NumericalError& e) {
      fj = fold_json(f);
      fj["expansion_error"] = e.what();
    }
    j["folds"].push_back(fj);
  }
  write_json(run.file("folds.json"), j);
  write_manifold(run, plant);
  out << run.finish("ok", j).dump(2) << '\n';
  return kOk;
}

/// Expansion at every fold of the plant. With a plant perturbation, each
/// perturbed fold is paired with the nearest nominal fold and the coefficient
/// shifts are checked against the robustness condition.
inline int cmd_expand(const RunConfig& cfg, const Options& opt, std::ostream& out) {
  Run run("expand", opt, cfg);
  const PlantModel plant = cfg.plant();
  const bool perturbed = !cfg.plant_perturbation.empty();
  const FoldReport rep = model_folds(plant, cfg);
  std::optional<FoldReport> nominal;
  if (perturbed) nominal = model_folds(cfg.system, cfg);

  json j;
  j["converged"] = rep.converged;
  j["folds"] = json::array();
  for (const FoldPoint& f : rep.folds) {
    const Expansion e = model_expansion(plant, cfg, f);
    json fj = expansion_json(e);
    if (perturbed && nominal && !nominal->folds.empty()) {
      const FoldPoint* best = &nominal->folds.front();
      for (const FoldPoint& g : nominal->folds)
        if (std::abs(g.x_star - f.x_star) < std::abs(best->x_star - f.x_star)) best = &g;
      const Expansion en = model_expansion(cfg.system, cfg, *best);
      if (en.normal_form.k == e.normal_form.k) {
        const PerturbationSpec d{e.normal_form.a_c - en.normal_form.a_c,
                                 e.normal_form.b_c - en.normal_form.b_c};
        fj["nominal"] = expansion_json(en);
        fj["delta_a"] = d.delta_a;
        fj["delta_b"] = d.delta_b;
        fj["robustness"] = to_string(robustness_check(en.normal_form, d));
      } else {
        fj["nominal"] = expansion_json(en);
        fj["robustness"] = "contact_order_changed";
      }
    }
    j["folds"].push_back(fj);
  }
  write_json(run.file("expansion.json"), j);
  out << run.finish("ok", j).dump(2) << '\n';
  return kOk;
}

inline int cmd_control(const RunConfig& cfg, const Options& opt, std::ostream& out) {
  const ResolvedController rc = resolve_controller(cfg);
  RunConfig resolved = cfg;
  resolved.controller = rc.spec;
  Run run("control", opt, resolved);

  const PlantModel plant = cfg.plant();
  const State s0 = require_state(cfg);
  const IntegrationConfig& icfg = require_integration(cfg);
  ConvergenceOptions copt;
  copt.tol = cfg.report.tol;
  copt.rtol = icfg.rtol;
  copt.atol = icfg.atol;
  copt.transient_fraction = cfg.report.transient_fraction;
  const ClosedLoopRun res = run_closed_loop(plant, rc.config, s0, icfg, copt);
  const Trajectory& tr = res.trajectory;

  write_trajectory_csv(run.file("trajectory.csv"), tr);
  write_manifold(run, plant);
  std::vector<std::vector<LevelPoint>> curves;
  for (const ControlTarget& t : rc.config.targets) {
    const bool shifted = rc.config.mode == ControlMode::fast_only && rc.config.r;
    curves.push_back(target_level_curve(t, shifted ? 1.0 / *rc.config.r : t.fold.x));
  }
  write_target_level_csv(run.file("target_level.csv"), curves);

  json rep;
  rep["report"] = report_json(res.report);
  rep["trajectory"] = trajectory_summary(tr);
  rep["targets"] = json::array();
  for (std::size_t i = 0; i < rc.config.targets.size(); ++i)
    rep["targets"].push_back(target_json(rc.config.targets[i], rc.labels[i]));
  const double t_from = icfg.t_start + cfg.report.transient_fraction * (icfg.t_end - icfg.t_start);
  const auto centre = cycle_centre_x(tr, t_from);
  const auto mean = time_mean_x(tr, t_from, icfg.t_end);
  rep["cycle_centre_x"] = centre ? json(*centre) : json(nullptr);
  rep["mean_x_after_transient"] = mean ? json(*mean) : json(nullptr);
  write_json(run.file("report.json"), rep);

  out << run.finish(tr.ok() ? "ok" : "integration_failed", rep).dump(2) << '\n';
  return tr.ok() ? kOk : kNumericalError;
}

/// Worker count: --workers, then CANARD_WORKERS, then the hardware.
inline std::size_t resolve_workers(const std::optional<std::size_t>& flag) {
  if (flag) {
    if (*flag == 0) throw ConfigError("--workers", "must be >= 1");
    return *flag;
  }
  if (const char* env = std::getenv("CANARD_WORKERS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) throw ConfigError("CANARD_WORKERS", "must be a positive integer");
    return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Cells from a previous run of the same sweep. Rows that fail to parse (a
/// write cut short) or fall outside the grid are recomputed.
inline std::vector<CellResult> load_sweep_cache(const std::filesystem::path& csv,
                                                const std::filesystem::path& fp,
                                                const json& fingerprint, const SweepSpec& spec) {
  std::vector<CellResult> done;
  if (!std::filesystem::exists(csv) || !std::filesystem::exists(fp)) return done;
  json old;
  try {
    old = read_json(fp);
  } catch (const IoError&) {
    return done;
  }
  if (old != fingerprint) return done;
  std::ifstream is(csv);
  std::string line;
  if (!std::getline(is, line) || line != kRegionHeader) return done;
  std::set<std::size_t> seen;
  while (std::getline(is, line)) {
    try {
      CellResult c = parse_region_row(line);
      if (c.ix >= spec.x.n || c.iy >= spec.y.n) continue;
      if (!seen.insert(c.iy * spec.x.n + c.ix).second) continue;
      done.push_back(std::move(c));
    } catch (const IoError&) {
    }
  }
  return done;
}

inline int cmd_sweep(const RunConfig& cfg, const Options& opt, std::ostream& out) {
  if (!cfg.sweep) throw ConfigError("sweep", "is required");
  const std::size_t workers = resolve_workers(opt.workers);
  Run run("sweep", opt, cfg);
  const SweepSpec& spec = *cfg.sweep;

  const json fingerprint = {{"system", system_to_json(cfg.system)}, {"sweep", sweep_to_json(spec)}};
  const auto cache_csv = run.file("sweep_cache.csv");
  const auto cache_fp = run.file("sweep_cache.json");
  SweepOptions so;
  so.workers = workers;
  so.done = load_sweep_cache(cache_csv, cache_fp, fingerprint, spec);
  const std::size_t reused = so.done.size();

  // Rewrite the cache with the reusable rows, then append as cells finish.
  std::ofstream cache(cache_csv, std::ios::binary | std::ios::trunc);
  if (!cache) throw IoError("cannot open '" + cache_csv.string() + "' for writing");
  cache << kRegionHeader << '\n';
  for (const CellResult& c : so.done) cache << region_row(c) << '\n';
  cache.flush();
  write_json(cache_fp, fingerprint);
  so.on_cell = [&](const CellResult& c) { cache << region_row(c) << '\n' << std::flush; };

  const RegionMap map = sweep(spec, so);
  close_checked(cache, cache_csv);

  write_region_csv(run.file("regions.csv"), map);
  json summary = region_summary(map);
  write_json(run.file("regions_summary.json"), summary);
  summary["workers"] = workers;
  summary["cells_reused"] = reused;
  summary["cells_computed"] = map.cells.size() - reused;
  summary.erase("boundary_cells");
  out << run.finish("ok", summary).dump(2) << '\n';
  return kOk;
}

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> c = {"simulate", "folds", "expand", "control", "sweep"};
  return c;
}

/// Runs one subcommand and maps errors to exit codes.
inline int run(const std::string& command, const Options& opt, std::ostream& out,
               std::ostream& err) {
  try {
    const RunConfig cfg = load_config(opt.config);
    if (command == "simulate") return cmd_simulate(cfg, opt, out);
    if (command == "folds") return cmd_folds(cfg, opt, out);
    if (command == "expand") return cmd_expand(cfg, opt, out);
    if (command == "control") return cmd_control(cfg, opt, out);
    if (command == "sweep") return cmd_sweep(cfg, opt, out);
    err << "unknown command '" << command << "'\n";
    return kConfigError;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kIoError;
  } catch (const Error& e) {
    err << "numerical error: " << e.what() << '\n';
    return kNumericalError;
  } catch (const std::bad_alloc&) {
    err << "numerical error: out of memory\n";
    return kNumericalError;
  }
}

}  // namespace canard::app
