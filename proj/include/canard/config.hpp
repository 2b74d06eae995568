#pragma once

// JSON run configuration: parsing with field-path errors and unknown-key
// rejection, and the inverse mapping used to write the resolved config.

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "canard/control.hpp"
#include "canard/dynamics.hpp"
#include "canard/error.hpp"
#include "canard/expansion.hpp"
#include "canard/integrator.hpp"
#include "canard/manifold.hpp"
#include "canard/sweep.hpp"

namespace canard {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// Read-only view of a JSON object that records which keys were consumed so
/// that leftovers (typos) can be rejected.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json* raw(const std::string& key) {
    used_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  template <class T>
  std::optional<T> opt(const std::string& key) {
    const json* v = raw(key);
    if (!v || v->is_null()) return std::nullopt;
    return convert<T>(*v, at(key));
  }

  template <class T>
  T get(const std::string& key, T fallback) {
    return opt<T>(key).value_or(fallback);
  }

  template <class T>
  T req(const std::string& key) {
    auto v = opt<T>(key);
    if (!v) throw ConfigError(at(key), "is required");
    return *v;
  }

  /// Throws for any key that was never asked for.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw ConfigError(at(it.key()), "unknown key");
  }

  template <class T>
  static T convert(const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ConfigError(path, "expected a number");
      return v.get<double>();
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(path, "expected true or false");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(path, "expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
      if constexpr (std::is_unsigned_v<T>)
        if (v.get<long long>() < 0) throw ConfigError(path, "must be >= 0");
      return v.get<T>();
    } else {
      static_assert(sizeof(T) == 0, "unsupported field type");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

// ---------------------------------------------------------------------------
// Parameter tables

template <class P>
struct ParamEntry {
  const char* name;
  double P::*member;
};

inline const std::vector<ParamEntry<DecisionParamsReduced>>& reduced_table() {
  using P = DecisionParamsReduced;
  static const std::vector<ParamEntry<P>> t = {
      {"alpha", &P::alpha}, {"beta", &P::beta}, {"gamma", &P::gamma}, {"b", &P::b},
      {"c", &P::c},         {"d", &P::d},       {"r", &P::r},         {"epsilon", &P::epsilon}};
  return t;
}

inline const std::vector<ParamEntry<DecisionParamsFull>>& full_table() {
  using P = DecisionParamsFull;
  static const std::vector<ParamEntry<P>> t = {
      {"alpha1", &P::alpha1}, {"alpha2", &P::alpha2}, {"beta1", &P::beta1},
      {"beta2", &P::beta2},   {"gamma1", &P::gamma1}, {"gamma2", &P::gamma2},
      {"eta1", &P::eta1},     {"eta2", &P::eta2},     {"b", &P::b},
      {"c", &P::c},           {"d", &P::d},           {"r", &P::r},
      {"epsilon", &P::epsilon}};
  return t;
}

template <class P>
void read_table(Fields& f, P& p, const std::vector<ParamEntry<P>>& table) {
  for (const auto& e : table) p.*e.member = f.get<double>(e.name, p.*e.member);
}

template <class P>
json write_table(const P& p, const std::vector<ParamEntry<P>>& table) {
  json j = json::object();
  for (const auto& e : table) j[e.name] = p.*e.member;
  return j;
}

inline const char* system_kind(const PlantModel& m) {
  switch (m.index()) {
    case 0: return "reduced";
    case 1: return "full";
    case 2: return "normal_form";
    default: return "perturbed_normal_form";
  }
}

inline PlantModel parse_system(const json& j) {
  Fields f(j, "system");
  const std::string kind = f.req<std::string>("kind");
  const json* pj = f.raw("params");
  const json empty = json::object();
  Fields p(pj ? *pj : empty, "system.params");
  PlantModel out;
  if (kind == "reduced") {
    DecisionParamsReduced q;
    read_table(p, q, reduced_table());
    validate(q);
    out = q;
  } else if (kind == "full") {
    DecisionParamsFull q;
    read_table(p, q, full_table());
    validate(q);
    out = q;
  } else if (kind == "normal_form" || kind == "perturbed_normal_form") {
    const double a = p.get<double>("a_c", 1.0);
    const double b = p.get<double>("b_c", -1.0);
    const int k = p.get<int>("k", 1);
    const double eps = p.get<double>("epsilon", 0.01);
    if (k < 1 || k > 3) throw ConfigError("system.params.k", "must lie in [1, 3]");
    NormalFormParams nf = NormalFormParams::make(a, b, k, eps);
    nf.validate();
    if (kind == "normal_form") {
      out = nf;
    } else {
      PerturbationSpec pert;
      pert.delta_a = p.get<double>("delta_a", 0.0);
      pert.delta_b = p.get<double>("delta_b", 0.0);
      if (nf.a_c + pert.delta_a == 0.0 || nf.b_c + pert.delta_b == 0.0)
        throw ConfigError("system.params", "perturbed coefficients must be non-zero");
      out = PerturbedNormalForm{nf, pert};
    }
  } else {
    throw ConfigError("system.kind",
                      "must be one of reduced, full, normal_form, perturbed_normal_form");
  }
  p.finish();
  f.finish();
  return out;
}

inline json system_to_json(const PlantModel& m) {
  json params = std::visit(
      [](const auto& p) -> json {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, DecisionParamsReduced>)
          return write_table(p, reduced_table());
        else if constexpr (std::is_same_v<T, DecisionParamsFull>)
          return write_table(p, full_table());
        else if constexpr (std::is_same_v<T, NormalFormParams>)
          return {{"a_c", p.a_c}, {"b_c", p.b_c}, {"k", p.k}, {"epsilon", p.epsilon}};
        else
          return {{"a_c", p.nf.a_c},     {"b_c", p.nf.b_c},
                  {"k", p.nf.k},         {"epsilon", p.nf.epsilon},
                  {"delta_a", p.pert.delta_a}, {"delta_b", p.pert.delta_b}};
      },
      m);
  return {{"kind", system_kind(m)}, {"params", params}};
}

/// Adds named deltas to the parameters of a decision model.
inline PlantModel perturb_plant(const PlantModel& m, const std::map<std::string, double>& deltas) {
  if (deltas.empty()) return m;
  PlantModel out = m;
  const auto apply = [&](auto& p, const auto& table) {
    for (const auto& [name, delta] : deltas) {
      bool found = false;
      for (const auto& e : table)
        if (name == e.name) {
          p.*e.member += delta;
          found = true;
        }
      if (!found) throw ConfigError("plant_perturbation." + name, "unknown parameter");
    }
    validate(p);
  };
  if (auto* r = std::get_if<DecisionParamsReduced>(&out))
    apply(*r, reduced_table());
  else if (auto* f = std::get_if<DecisionParamsFull>(&out))
    apply(*f, full_table());
  else
    throw ConfigError("plant_perturbation",
                      "only for decision models; use perturbed_normal_form for normal forms");
  return out;
}

// ---------------------------------------------------------------------------
// Integration

inline IntegrationConfig parse_integration(const json& j) {
  Fields f(j, "integration");
  IntegrationConfig c;
  const std::string m = f.get<std::string>("method", "rk4");
  if (m == "rk4")
    c.method = Method::rk4_fixed;
  else if (m == "rk45")
    c.method = Method::rk45_adaptive;
  else
    throw ConfigError("integration.method", "must be rk4 or rk45");
  c.dt = f.get("dt", c.dt);
  c.rtol = f.get("rtol", c.rtol);
  c.atol = f.get("atol", c.atol);
  c.dt_min = f.get("dt_min", c.dt_min);
  c.dt_max = f.get("dt_max", c.dt_max);
  c.t_start = f.get("t_start", c.t_start);
  c.t_end = f.req<double>("t_end");
  c.sample_stride = f.get<std::size_t>("sample_stride", c.sample_stride);
  c.max_steps = f.get<std::size_t>("max_steps", c.max_steps);
  f.finish();
  c.validate();
  return c;
}

inline json integration_to_json(const IntegrationConfig& c) {
  return {{"method", c.method == Method::rk4_fixed ? "rk4" : "rk45"},
          {"dt", c.dt},
          {"rtol", c.rtol},
          {"atol", c.atol},
          {"dt_min", c.dt_min},
          {"dt_max", c.dt_max},
          {"t_start", c.t_start},
          {"t_end", c.t_end},
          {"sample_stride", c.sample_stride},
          {"max_steps", c.max_steps}};
}

// ---------------------------------------------------------------------------
// Controller

inline ControlMode parse_mode(const std::string& s, const std::string& path) {
  if (s == "off") return ControlMode::off;
  if (s == "fast_only") return ControlMode::fast_only;
  if (s == "fast_slow") return ControlMode::fast_slow;
  throw ConfigError(path, "must be off, fast_only or fast_slow");
}

/// Unresolved controller target: a fold picked by name or index (found and
/// expanded at run time), the normal-form origin, or explicit coefficients.
struct TargetSpec {
  enum class Kind { leftmost, rightmost, index, origin, explicit_fold };
  Kind kind = Kind::leftmost;
  std::size_t index = 0;
  double x = 0.0, y = 0.0, a_c = 0.0, b_c = 0.0;
  int k = 1;
  std::string label;
};

inline TargetSpec parse_target(const json& j, const std::string& path) {
  TargetSpec t;
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    t.label = s;
    if (s == "leftmost")
      t.kind = TargetSpec::Kind::leftmost;
    else if (s == "rightmost")
      t.kind = TargetSpec::Kind::rightmost;
    else if (s == "origin")
      t.kind = TargetSpec::Kind::origin;
    else
      throw ConfigError(path, "must be leftmost, rightmost, origin, an index or an object");
    return t;
  }
  if (j.is_number_integer()) {
    t.kind = TargetSpec::Kind::index;
    t.index = Fields::convert<std::size_t>(j, path);
    t.label = "fold " + std::to_string(t.index);
    return t;
  }
  Fields f(j, path);
  t.kind = TargetSpec::Kind::explicit_fold;
  t.x = f.req<double>("x");
  t.y = f.req<double>("y");
  t.a_c = f.req<double>("a_c");
  t.b_c = f.req<double>("b_c");
  t.k = f.get<int>("k", 1);
  t.label = f.get<std::string>("label", "");
  f.finish();
  if (t.a_c == 0.0 || t.b_c == 0.0) throw ConfigError(path, "a_c and b_c must be non-zero");
  if (t.k < 1 || t.k > 3) throw ConfigError(path + ".k", "must lie in [1, 3]");
  return t;
}

inline json target_to_json(const TargetSpec& t) {
  switch (t.kind) {
    case TargetSpec::Kind::leftmost: return "leftmost";
    case TargetSpec::Kind::rightmost: return "rightmost";
    case TargetSpec::Kind::origin: return "origin";
    case TargetSpec::Kind::index: return t.index;
    case TargetSpec::Kind::explicit_fold: break;
  }
  json j = {{"x", t.x}, {"y", t.y}, {"a_c", t.a_c}, {"b_c", t.b_c}, {"k", t.k}};
  if (!t.label.empty()) j["label"] = t.label;
  return j;
}

struct ControllerSpec {
  ControlMode mode = ControlMode::fast_slow;
  double B_c = 1000.0;
  double c_c = 3.0;
  std::optional<double> h;  // overrides the level derived from c_c
  std::optional<double> r;  // defaults to the plant's r for decision models
  std::optional<double> max_dx;
  std::size_t target = 0;
  std::vector<TargetSpec> targets;
  std::vector<ScheduleEntry> schedule;
};

inline ControllerSpec parse_controller(const json& j) {
  Fields f(j, "controller");
  ControllerSpec c;
  c.mode = parse_mode(f.get<std::string>("mode", "fast_slow"), f.at("mode"));
  c.B_c = f.get("B_c", c.B_c);
  c.c_c = f.get("c_c", c.c_c);
  c.h = f.opt<double>("h");
  c.r = f.opt<double>("r");
  c.max_dx = f.opt<double>("max_dx");
  c.target = f.get<std::size_t>("target", 0);
  if (const json* t = f.raw("targets")) {
    if (!t->is_array()) throw ConfigError("controller.targets", "expected an array");
    for (std::size_t i = 0; i < t->size(); ++i)
      c.targets.push_back(parse_target((*t)[i], "controller.targets[" + std::to_string(i) + "]"));
  }
  if (const json* s = f.raw("schedule")) {
    if (!s->is_array()) throw ConfigError("controller.schedule", "expected an array");
    for (std::size_t i = 0; i < s->size(); ++i) {
      Fields e((*s)[i], "controller.schedule[" + std::to_string(i) + "]");
      ScheduleEntry se;
      se.time = e.req<double>("time");
      se.mode = parse_mode(e.req<std::string>("mode"), e.at("mode"));
      se.target = e.get<std::size_t>("target", c.target);
      e.finish();
      c.schedule.push_back(se);
    }
  }
  f.finish();
  if (!(c.B_c > 0.0)) throw ConfigError("controller.B_c", "must be > 0");
  if (!(c.c_c > 0.0)) throw ConfigError("controller.c_c", "must be > 0");
  return c;
}

inline json controller_to_json(const ControllerSpec& c) {
  json j = {{"mode", to_string(c.mode)}, {"B_c", c.B_c}, {"c_c", c.c_c}, {"target", c.target}};
  j["h"] = c.h ? json(*c.h) : json(nullptr);
  j["r"] = c.r ? json(*c.r) : json(nullptr);
  j["max_dx"] = c.max_dx ? json(*c.max_dx) : json(nullptr);
  j["targets"] = json::array();
  for (const auto& t : c.targets) j["targets"].push_back(target_to_json(t));
  j["schedule"] = json::array();
  for (const auto& s : c.schedule)
    j["schedule"].push_back({{"time", s.time}, {"mode", to_string(s.mode)}, {"target", s.target}});
  return j;
}

// ---------------------------------------------------------------------------
// Analysis sections

struct ManifoldSpec {
  std::optional<double> x_lo, x_hi;  // default: the decision model's scan domain
  double y_lo = 0.0;
  double y_hi = 60.0;
  std::size_t cells = 2000;
};

struct ReportSpec {
  double tol = 1e-8;
  double transient_fraction = 0.5;
};

struct RunConfig {
  PlantModel system;
  std::map<std::string, double> plant_perturbation;
  std::optional<State> initial_state;
  std::optional<IntegrationConfig> integration;
  std::optional<ControllerSpec> controller;
  ManifoldSpec manifold;
  FoldSearch fold_search;
  ExpansionOptions expansion;
  ReportSpec report;
  std::optional<SweepSpec> sweep;

  PlantModel plant() const { return perturb_plant(system, plant_perturbation); }
};

inline Axis parse_axis(const json& j, const std::string& path) {
  Fields f(j, path);
  Axis a;
  a.param = f.req<std::string>("param");
  a.lo = f.req<double>("lo");
  a.hi = f.req<double>("hi");
  a.n = f.get<std::size_t>("n", 60);
  f.finish();
  return a;
}

inline SweepSpec parse_sweep(const json& j, const PlantModel& system) {
  const auto* base = std::get_if<DecisionParamsReduced>(&system);
  if (!base) throw ConfigError("sweep", "sweeps need system.kind = reduced");
  Fields f(j, "sweep");
  SweepSpec s;
  s.base = *base;
  s.x = parse_axis(f.raw("x") ? *f.raw("x") : json(), "sweep.x");
  s.y = parse_axis(f.raw("y") ? *f.raw("y") : json(), "sweep.y");
  s.y_scan_lo = f.get("y_scan_lo", s.y_scan_lo);
  s.y_scan_hi = f.get("y_scan_hi", s.y_scan_hi);
  s.y_floor = f.get("y_floor", s.y_floor);
  s.x_cells = f.get<std::size_t>("x_cells", s.x_cells);
  f.finish();
  s.validate();
  return s;
}

inline json sweep_to_json(const SweepSpec& s) {
  const auto axis = [](const Axis& a) {
    return json{{"param", a.param}, {"lo", a.lo}, {"hi", a.hi}, {"n", a.n}};
  };
  return {{"x", axis(s.x)},           {"y", axis(s.y)},
          {"y_scan_lo", s.y_scan_lo}, {"y_scan_hi", s.y_scan_hi},
          {"y_floor", s.y_floor},     {"x_cells", s.x_cells}};
}

/// Accepts either a config or a run.json written by a previous run.
inline RunConfig parse_config(const json& doc) {
  const json* root = &doc;
  if (doc.is_object() && doc.contains("config") && doc.contains("command")) root = &doc["config"];
  Fields f(*root, "");
  const int version = f.req<int>("schema_version");
  if (version != kSchemaVersion)
    throw ConfigError("schema_version", "unsupported version " + std::to_string(version));
  const json* sys = f.raw("system");
  if (!sys) throw ConfigError("system", "is required");

  RunConfig c;
  c.system = parse_system(*sys);
  if (const json* p = f.raw("plant_perturbation"); p && !p->is_null()) {
    Fields pf(*p, "plant_perturbation");
    for (auto it = p->begin(); it != p->end(); ++it)
      c.plant_perturbation[it.key()] = pf.req<double>(it.key());
    pf.finish();
    (void)c.plant();  // validates names and the perturbed parameters
  }
  if (const json* s = f.raw("initial_state"); s && !s->is_null()) {
    Fields sf(*s, "initial_state");
    c.initial_state = State{sf.req<double>("x"), sf.req<double>("y")};
    sf.finish();
    if (!c.initial_state->finite()) throw ConfigError("initial_state", "must be finite");
  }
  if (const json* s = f.raw("integration"); s && !s->is_null())
    c.integration = parse_integration(*s);
  if (const json* s = f.raw("controller"); s && !s->is_null())
    c.controller = parse_controller(*s);

  const bool decision = is_decision_model(c.system);
  if (!decision) {
    c.manifold.y_lo = -10.0;
    c.manifold.y_hi = 10.0;
    c.fold_search.y_lo = -10.0;
    c.fold_search.y_hi = 10.0;
  }
  if (const json* s = f.raw("manifold"); s && !s->is_null()) {
    Fields mf(*s, "manifold");
    c.manifold.x_lo = mf.opt<double>("x_lo");
    c.manifold.x_hi = mf.opt<double>("x_hi");
    c.manifold.y_lo = mf.get("y_lo", c.manifold.y_lo);
    c.manifold.y_hi = mf.get("y_hi", c.manifold.y_hi);
    c.manifold.cells = mf.get<std::size_t>("cells", c.manifold.cells);
    mf.finish();
  }
  if (!decision && (!c.manifold.x_lo || !c.manifold.x_hi)) {
    c.manifold.x_lo = c.manifold.x_lo.value_or(-1.0);
    c.manifold.x_hi = c.manifold.x_hi.value_or(1.0);
  }
  if (c.manifold.x_lo && c.manifold.x_hi && !(*c.manifold.x_hi > *c.manifold.x_lo))
    throw ConfigError("manifold.x_hi", "must exceed x_lo");
  if (!(c.manifold.y_hi > c.manifold.y_lo)) throw ConfigError("manifold.y_hi", "must exceed y_lo");
  if (c.manifold.cells < 2) throw ConfigError("manifold.cells", "must be >= 2");

  if (const json* s = f.raw("fold_search"); s && !s->is_null()) {
    Fields ff(*s, "fold_search");
    c.fold_search.y_lo = ff.get("y_lo", c.fold_search.y_lo);
    c.fold_search.y_hi = ff.get("y_hi", c.fold_search.y_hi);
    c.fold_search.newton_tol = ff.get("newton_tol", c.fold_search.newton_tol);
    c.fold_search.max_newton = ff.get("max_newton", c.fold_search.max_newton);
    ff.finish();
  }
  if (!(c.fold_search.y_hi > c.fold_search.y_lo))
    throw ConfigError("fold_search.y_hi", "must exceed y_lo");

  if (const json* s = f.raw("expansion"); s && !s->is_null()) {
    Fields ef(*s, "expansion");
    c.expansion.k_max = ef.get("k_max", c.expansion.k_max);
    c.expansion.theta = ef.get("theta", c.expansion.theta);
    c.expansion.radius = ef.get("radius", c.expansion.radius);
    c.expansion.forced_k = ef.opt<int>("forced_k");
    ef.finish();
  }
  if (const json* s = f.raw("report"); s && !s->is_null()) {
    Fields rf(*s, "report");
    c.report.tol = rf.get("tol", c.report.tol);
    c.report.transient_fraction = rf.get("transient_fraction", c.report.transient_fraction);
    rf.finish();
    if (!(c.report.tol > 0.0)) throw ConfigError("report.tol", "must be > 0");
    if (!(c.report.transient_fraction >= 0.0 && c.report.transient_fraction < 1.0))
      throw ConfigError("report.transient_fraction", "must lie in [0, 1)");
  }
  if (const json* s = f.raw("sweep"); s && !s->is_null()) c.sweep = parse_sweep(*s, c.system);
  f.finish();
  return c;
}

inline json to_json(const RunConfig& c) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["system"] = system_to_json(c.system);
  j["plant_perturbation"] = json::object();
  for (const auto& [k, v] : c.plant_perturbation) j["plant_perturbation"][k] = v;
  j["initial_state"] =
      c.initial_state ? json{{"x", c.initial_state->x}, {"y", c.initial_state->y}} : json(nullptr);
  j["integration"] = c.integration ? integration_to_json(*c.integration) : json(nullptr);
  j["controller"] = c.controller ? controller_to_json(*c.controller) : json(nullptr);
  j["manifold"] = {{"x_lo", c.manifold.x_lo ? json(*c.manifold.x_lo) : json(nullptr)},
                   {"x_hi", c.manifold.x_hi ? json(*c.manifold.x_hi) : json(nullptr)},
                   {"y_lo", c.manifold.y_lo},
                   {"y_hi", c.manifold.y_hi},
                   {"cells", c.manifold.cells}};
  j["fold_search"] = {{"y_lo", c.fold_search.y_lo},
                      {"y_hi", c.fold_search.y_hi},
                      {"newton_tol", c.fold_search.newton_tol},
                      {"max_newton", c.fold_search.max_newton}};
  j["expansion"] = {{"k_max", c.expansion.k_max},
                    {"theta", c.expansion.theta},
                    {"radius", c.expansion.radius},
                    {"forced_k", c.expansion.forced_k ? json(*c.expansion.forced_k) : json(nullptr)}};
  j["report"] = {{"tol", c.report.tol}, {"transient_fraction", c.report.transient_fraction}};
  j["sweep"] = c.sweep ? sweep_to_json(*c.sweep) : json(nullptr);
  return j;
}

}  // namespace canard
