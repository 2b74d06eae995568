#pragma once

// Hamiltonian level-set control of canard cycles: Hamiltonians of the
// (perturbed) normal form, the target level, the compatible fast and
// fast-slow feedback laws and scheduled closed-loop simulation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "canard/dynamics.hpp"
#include "canard/error.hpp"
#include "canard/integrator.hpp"

namespace canard {

/// Largest |exponent| passed to exp() by the control code.
inline constexpr double kExpLimit = 700.0;

/// A value together with an overflow flag. When the flag is set the value is
/// +-inf or NaN and must not be used.
struct Checked {
  double value = 0.0;
  bool overflow = false;
};

struct Origin {
  double x = 0.0;
  double y = 0.0;
};

inline Checked hamiltonian_classic(State s, double eps) {
  const double ex = -2.0 * s.y / eps;
  if (ex > kExpLimit) return {std::numeric_limits<double>::quiet_NaN(), true};
  return {0.5 * std::exp(ex) * (s.y / eps - s.x * s.x / eps + 0.5), false};
}

namespace detail {

/// (sigma/2) e^{2 dy/(sigma eps)} (b dy/eps + a dx^{2k}/eps - sigma b/2)
inline Checked hamiltonian_ab(double a, double b, int k, int sigma, double eps, double dx,
                              double dy) {
  const double ex = 2.0 * dy / (sigma * eps);
  if (ex > kExpLimit) return {std::numeric_limits<double>::quiet_NaN(), true};
  const double bracket = b * dy / eps + a * ipow(dx, 2 * k) / eps - sigma * b / 2.0;
  return {0.5 * sigma * std::exp(ex) * bracket, false};
}

}  // namespace detail

inline Checked hamiltonian_general(State s, const NormalFormParams& nf, Origin o = {}) {
  return detail::hamiltonian_ab(nf.a_c, nf.b_c, nf.k, nf.sigma, nf.epsilon, s.x - o.x, s.y - o.y);
}

/// Hamiltonian of the perturbed form; sigma and k stay those of `nf`.
inline Checked hamiltonian_perturbed(State s, const NormalFormParams& nf,
                                     const PerturbationSpec& pert, Origin o = {}) {
  return detail::hamiltonian_ab(nf.a_c + pert.delta_a, nf.b_c + pert.delta_b, nf.k, nf.sigma,
                                nf.epsilon, s.x - o.x, s.y - o.y);
}

/// H_delta, so that H = H_p - H_delta.
inline Checked hamiltonian_delta(State s, const NormalFormParams& nf, const PerturbationSpec& pert,
                                 Origin o = {}) {
  return detail::hamiltonian_ab(pert.delta_a, pert.delta_b, nf.k, nf.sigma, nf.epsilon, s.x - o.x,
                                s.y - o.y);
}

/// h = -(1/4) sign(b_c) e^{-c_c/eps}, kept as (sign, log|h|) as well so that
/// it stays usable after the plain value underflows.
struct TargetLevel {
  double value = 0.0;
  double log_abs = -std::numeric_limits<double>::infinity();
  int sign = 0;
  bool underflow = false;
};

inline TargetLevel target_h(const NormalFormParams& nf, double c_c) {
  if (!(c_c > 0.0) || !std::isfinite(c_c)) throw ConfigError("c_c", "must be finite and > 0");
  TargetLevel h;
  h.sign = nf.b_c > 0.0 ? -1 : 1;
  h.log_abs = std::log(0.25) - c_c / nf.epsilon;
  const double mag = std::exp(h.log_abs);
  h.value = h.sign * mag;  // signed zero on underflow
  h.underflow = mag == 0.0;
  return h;
}

inline TargetLevel target_level_from_value(double h) {
  TargetLevel t;
  t.value = h;
  t.sign = h > 0.0 ? 1 : (h < 0.0 ? -1 : 0);
  t.log_abs = h == 0.0 ? -std::numeric_limits<double>::infinity() : std::log(std::abs(h));
  return t;
}

namespace detail {

/// eps (H - h) e^{-2 dy/(sigma eps)}, with the exponentials cancelled:
/// (sigma/2)(b dy + a dx^{2k} - sigma b eps/2) - eps h e^{-2 dy/(sigma eps)}.
/// Log-magnitude of the eps h e^{-2 dy/(sigma eps)} term.
inline double residual_exponent(const NormalFormParams& nf, const TargetLevel& h, double dy) {
  return std::log(nf.epsilon) + h.log_abs - 2.0 * dy / (nf.sigma * nf.epsilon);
}

inline double scaled_error(const NormalFormParams& nf, const TargetLevel& h, double dx, double dy) {
  const double bracket =
      0.5 * nf.sigma * (nf.b_c * dy + nf.a_c * ipow(dx, 2 * nf.k) - nf.sigma * nf.b_c * nf.epsilon / 2.0);
  double residual = 0.0;
  if (h.sign != 0) residual = h.sign * std::exp(residual_exponent(nf, h, dy));
  return bracket - residual;
}

/// H - h from the scaled error.
inline Checked error_from_scaled(const NormalFormParams& nf, double scaled, double dy) {
  const double ex = 2.0 * dy / (nf.sigma * nf.epsilon);
  if (ex > kExpLimit) return {std::numeric_limits<double>::quiet_NaN(), true};
  return {std::exp(ex) * scaled / nf.epsilon, false};  // underflows harmlessly for ex << 0
}

}  // namespace detail

/// u = -(eps B (x - x*))/(sigma k a) (H - h) e^{-2(y - y*)/(sigma eps)},
/// evaluated in factored form.
inline double fast_control_u(State s, const NormalFormParams& nf, Origin o, double B_c,
                             const TargetLevel& h) {
  const double dx = s.x - o.x;
  const double dy = s.y - o.y;
  return -(B_c * dx) / (nf.sigma * nf.k * nf.a_c) * detail::scaled_error(nf, h, dx, dy);
}

/// Fast-only law for the decision model: the cycle is centred at x = 1/r
/// (where the uncontrolled slow flow vanishes) and the fold curvature is
/// moved there by -a (x - x*)^{2k} + a (x - 1/r)^{2k}.
inline double fast_control_shifted(State s, const NormalFormParams& nf, Origin o, double B_c,
                                   const TargetLevel& h, double r) {
  const double xc = 1.0 / r;
  const double shift = -nf.a_c * ipow(s.x - o.x, 2 * nf.k) + nf.a_c * ipow(s.x - xc, 2 * nf.k);
  return shift + fast_control_u(s, nf, Origin{xc, o.y}, B_c, h);
}

struct FastSlowControl {
  double u = 0.0;
  double v = 0.0;
};

inline constexpr double kSlowFloor = 1e-9;

/// Joint law: u centred at the fold, constant slow input v = -(1 - r x*),
/// switched off on {y <= y_floor}.
inline FastSlowControl joint_fast_slow(State s, const NormalFormParams& nf, Origin o, double B_c,
                                       const TargetLevel& h, double r) {
  FastSlowControl c;
  c.u = fast_control_u(s, nf, o, B_c, h);
  c.v = s.y <= kSlowFloor ? 0.0 : -(1.0 - r * o.x);
  return c;
}

enum class Robustness { satisfied, violated, not_applicable };

inline const char* to_string(Robustness r) {
  switch (r) {
    case Robustness::satisfied: return "satisfied";
    case Robustness::violated: return "violated";
    case Robustness::not_applicable: return "not_applicable";
  }
  return "unknown";
}

/// sigma delta_a < delta_b |a_c / b_c|, only derived for delta_b > 0.
inline Robustness robustness_check(const NormalFormParams& nf, const PerturbationSpec& pert) {
  if (!(pert.delta_b > 0.0)) return Robustness::not_applicable;
  return nf.sigma * pert.delta_a < pert.delta_b * std::abs(nf.a_c / nf.b_c) ? Robustness::satisfied
                                                                            : Robustness::violated;
}

inline Checked lyapunov_value(State s, const NormalFormParams& nf, Origin o, const TargetLevel& h) {
  const double dy = s.y - o.y;
  const Checked e = detail::error_from_scaled(nf, detail::scaled_error(nf, h, s.x - o.x, dy), dy);
  if (e.overflow) return e;
  return {0.5 * e.value * e.value, false};
}

// ---------------------------------------------------------------------------
// Controller configuration and closed loop

enum class ControlMode { off, fast_only, fast_slow };

inline const char* to_string(ControlMode m) {
  switch (m) {
    case ControlMode::off: return "off";
    case ControlMode::fast_only: return "fast_only";
    case ControlMode::fast_slow: return "fast_slow";
  }
  return "unknown";
}

/// One fold the controller can be pointed at.
struct ControlTarget {
  Origin fold;
  NormalFormParams nf;  // a_c, b_c, k, sigma, epsilon at the fold
  TargetLevel h;
};

struct ScheduleEntry {
  double time = 0.0;
  ControlMode mode = ControlMode::off;
  std::size_t target = 0;
};

struct ControllerConfig {
  double B_c = 1000.0;
  double c_c = 3.0;
  ControlMode mode = ControlMode::fast_slow;  // in force from t_start
  std::size_t target = 0;
  std::vector<ControlTarget> targets;
  std::optional<double> r;  // harvesting rate; enables the 1/r shift and v
  std::vector<ScheduleEntry> schedule;
  /// Validity region half-width in x. Unset: 0.5 for the decision model,
  /// unbounded for the normal forms, where the expansion is exact.
  std::optional<double> max_dx;

  void validate() const {
    if (!(B_c > 0.0) || !std::isfinite(B_c)) throw ConfigError("controller.B_c", "must be > 0");
    if (!(c_c > 0.0) || !std::isfinite(c_c)) throw ConfigError("controller.c_c", "must be > 0");
    if (targets.empty()) throw ConfigError("controller.targets", "at least one target required");
    for (const auto& t : targets) {
      t.nf.validate();
      if (!(std::abs(t.h.value) < 0.25)) throw ConfigError("controller.h", "must lie in (-1/4, 1/4)");
    }
    if (target >= targets.size()) throw ConfigError("controller.target", "index out of range");
    for (std::size_t i = 0; i < schedule.size(); ++i) {
      if (schedule[i].target >= targets.size())
        throw ConfigError("controller.schedule", "target index out of range");
      if (i > 0 && !(schedule[i].time > schedule[i - 1].time))
        throw ConfigError("controller.schedule", "times must be strictly increasing");
    }
    if (r && !(*r > 0.0)) throw ConfigError("controller.r", "must be > 0");
    if (max_dx && !(*max_dx > 0.0)) throw ConfigError("controller.max_dx", "must be > 0");
  }
};

/// Target built from a fold and its expansion, with h from c_c.
inline ControlTarget make_target(Origin fold, const NormalFormParams& nf, double c_c) {
  return {fold, nf, target_h(nf, c_c)};
}

struct ControlOutput {
  double u = 0.0;
  double v = 0.0;
  double H = 0.0;      // Hamiltonian in the controller's coordinates
  double H_err = 0.0;  // H - h
  bool active = false;    // mode != off and inside the validity region
  bool in_region = true;  // state inside the validity region
  bool overflow = false;  // H not representable
};

/// Evaluates the configured law for one mode and target.
inline ControlOutput evaluate_control(State s, const ControllerConfig& cfg, ControlMode mode,
                                      std::size_t target) {
  const ControlTarget& tg = cfg.targets[target];
  const NormalFormParams& nf = tg.nf;
  ControlOutput out;

  const bool shifted = mode == ControlMode::fast_only && cfg.r.has_value();
  const Origin centre{shifted ? 1.0 / *cfg.r : tg.fold.x, tg.fold.y};
  const double dx = s.x - centre.x;
  const double dy = s.y - centre.y;
  const double scaled = detail::scaled_error(nf, tg.h, dx, dy);
  const Checked err = detail::error_from_scaled(nf, scaled, dy);
  out.overflow = err.overflow || (tg.h.sign != 0 && detail::residual_exponent(nf, tg.h, dy) > kExpLimit);
  out.H_err = err.value;
  out.H = err.value + tg.h.value;
  out.in_region = !out.overflow && std::abs(s.x - tg.fold.x) <=
                                        cfg.max_dx.value_or(std::numeric_limits<double>::infinity());

  if (mode == ControlMode::off || !out.in_region) return out;
  out.active = true;
  if (mode == ControlMode::fast_only) {
    out.u = shifted ? fast_control_shifted(s, nf, tg.fold, cfg.B_c, tg.h, *cfg.r)
                    : fast_control_u(s, nf, tg.fold, cfg.B_c, tg.h);
  } else if (cfg.r) {
    const FastSlowControl c = joint_fast_slow(s, nf, tg.fold, cfg.B_c, tg.h, *cfg.r);
    out.u = c.u;
    out.v = c.v;
  } else {
    out.u = fast_control_u(s, nf, tg.fold, cfg.B_c, tg.h);
  }
  return out;
}

/// The open-loop system the controller acts on.
struct PerturbedNormalForm {
  NormalFormParams nf;
  PerturbationSpec pert;
};

using PlantModel =
    std::variant<DecisionParamsReduced, DecisionParamsFull, NormalFormParams, PerturbedNormalForm>;

inline State open_loop(State s, const PlantModel& plant) {
  return std::visit(
      [&](const auto& p) -> State {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, DecisionParamsReduced>)
          return eval_reduced(s, p);
        else if constexpr (std::is_same_v<T, DecisionParamsFull>)
          return eval_full(s, p);
        else if constexpr (std::is_same_v<T, NormalFormParams>)
          return eval_normal_form(s, p);
        else
          return eval_perturbed_normal_form(s, p.nf, p.pert);
      },
      plant);
}

inline double plant_epsilon(const PlantModel& plant) {
  return std::visit(
      [](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, PerturbedNormalForm>)
          return p.nf.epsilon;
        else
          return p.epsilon;
      },
      plant);
}

inline bool is_decision_model(const PlantModel& plant) {
  return std::holds_alternative<DecisionParamsReduced>(plant) ||
         std::holds_alternative<DecisionParamsFull>(plant);
}

/// Adds the control inputs to the open-loop field. The decision model takes
/// the slow input as eps * y * v, which vanishes on {y = 0}; the normal
/// forms take it inside their -eps (...) bracket.
inline State apply_control(State f, State s, const PlantModel& plant, const ControlOutput& c) {
  f.x += c.u;
  if (c.v != 0.0) {
    const double eps = plant_epsilon(plant);
    f.y += is_decision_model(plant) ? eps * s.y * c.v : -eps * c.v;
  }
  return f;
}

inline constexpr double kDecisionMaxDx = 0.5;

/// Right-hand side of the controlled system. The active mode and target are
/// changed only through `switch_to`, which the integrator calls at schedule
/// breakpoints, so they stay fixed within a step.
class ClosedLoop {
 public:
  ClosedLoop(PlantModel plant, ControllerConfig cfg)
      : plant_(std::move(plant)), cfg_(std::move(cfg)), mode_(cfg_.mode), target_(cfg_.target) {
    if (!cfg_.max_dx && is_decision_model(plant_)) cfg_.max_dx = kDecisionMaxDx;
    if (cfg_.mode != ControlMode::off || !cfg_.schedule.empty()) cfg_.validate();
    if (cfg_.mode != ControlMode::off && is_decision_model(plant_))
      check_slow_floor(cfg_.mode, cfg_.target);
  }

  State operator()(double, State s) const {
    const State f = open_loop(s, plant_);
    if (mode_ == ControlMode::off) return f;
    return apply_control(f, s, plant_, evaluate_control(s, cfg_, mode_, target_));
  }

  ControlOutput control(State s) const {
    if (cfg_.targets.empty()) return {};
    return evaluate_control(s, cfg_, mode_, target_);
  }

  void switch_to(const ScheduleEntry& e) {
    if (e.mode != ControlMode::off && is_decision_model(plant_)) check_slow_floor(e.mode, e.target);
    mode_ = e.mode;
    target_ = e.target;
  }

  ControlMode mode() const { return mode_; }
  std::size_t target() const { return target_; }
  const ControllerConfig& config() const { return cfg_; }
  const PlantModel& plant() const { return plant_; }

 private:
  void check_slow_floor(ControlMode mode, std::size_t target) const {
    if (mode == ControlMode::fast_slow && cfg_.targets[target].fold.y <= 100.0 * kSlowFloor)
      throw ConfigError("controller.targets",
                        "fold too close to {y = 0} for the fast-slow controller");
  }

  PlantModel plant_;
  ControllerConfig cfg_;
  ControlMode mode_;
  std::size_t target_;
};

struct ConvergenceOptions {
  double tol = 1e-8;  // |H - h| target, relative to max(1, |H_err(0)|)
  // Integrator tolerances used by the L check (local error rtol |s| + atol).
  double rtol = 1e-10;
  double atol = 1e-12;
  double transient_fraction = 0.0;  // skip this fraction of the run for max_H_err
};

struct ConvergenceReport {
  std::optional<double> time_to_tol;  // first time after which |H_err| stays below tol
  double threshold = 0.0;
  double max_abs_H_err_after_transient = 0.0;
  double final_abs_H_err = 0.0;
  std::size_t lyapunov_violations = 0;
  std::size_t region_exits = 0;
  std::size_t unrecovered_exits = 0;  // exits with no later re-entry
  std::size_t overflow_samples = 0;
};

struct ClosedLoopRun {
  Trajectory trajectory;
  std::vector<ControlOutput> controls;  // one per sample
  std::vector<ControlMode> modes;       // mode in force at each sample
  std::vector<std::size_t> targets;     // target in force at each sample
  ConvergenceReport report;
};

namespace detail {

/// Size of the change in H - h that one integrator step may introduce
/// without any change in the true trajectory: the local error bound
/// rtol |s| + atol pushed through grad H, plus the rounding error of the
/// factored bracket (three terms of a few ulps, scaled by e^{2 dy/(sigma eps)}/eps).
inline double error_band(State s, const ControllerConfig& cfg, ControlMode mode,
                         std::size_t target, double rtol, double atol) {
  const ControlTarget& tg = cfg.targets[target];
  const NormalFormParams& nf = tg.nf;
  const bool shifted = mode == ControlMode::fast_only && cfg.r.has_value();
  const double dx = s.x - (shifted ? 1.0 / *cfg.r : tg.fold.x);
  const double dy = s.y - tg.fold.y;
  const double ex = 2.0 * dy / (nf.sigma * nf.epsilon);
  if (ex > kExpLimit) return std::numeric_limits<double>::infinity();
  const double g = 0.5 * std::exp(ex) / nf.epsilon;
  const double bracket = nf.b_c * dy + nf.a_c * ipow(dx, 2 * nf.k) - nf.sigma * nf.b_c * nf.epsilon / 2.0;
  const double h_x = g * std::abs(2.0 * nf.k * nf.a_c * ipow(dx, 2 * nf.k - 1));
  const double h_y = g * std::abs(2.0 * bracket / (nf.sigma * nf.epsilon) + nf.b_c);
  const double terms = std::abs(nf.b_c * dy) + std::abs(nf.a_c * ipow(dx, 2 * nf.k)) +
                       std::abs(nf.b_c * nf.epsilon / 2.0);
  const double roundoff = 8.0 * std::numeric_limits<double>::epsilon() * terms * g;
  return h_x * (rtol * std::abs(s.x) + atol) + h_y * (rtol * std::abs(s.y) + atol) + roundoff;
}

}  // namespace detail

inline ConvergenceReport convergence_report(const ClosedLoopRun& run, const ControllerConfig& cfg,
                                            const ConvergenceOptions& opt) {
  ConvergenceReport rep;
  const auto& tr = run.trajectory;
  const std::size_t n = tr.size();
  if (n == 0) return rep;
  const double e0 = run.controls[0].overflow ? 0.0 : std::abs(run.controls[0].H_err);
  rep.threshold = opt.tol * std::max(1.0, e0);

  std::optional<std::size_t> last_bad;
  const double t0 = tr.times.front();
  const double t_transient = t0 + opt.transient_fraction * (tr.times.back() - t0);
  bool was_in = run.controls[0].in_region;
  std::size_t pending_exits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const ControlOutput& c = run.controls[i];
    if (c.overflow) ++rep.overflow_samples;
    const double e = c.overflow ? std::numeric_limits<double>::infinity() : std::abs(c.H_err);
    if (!(e < rep.threshold)) last_bad = i;
    if (tr.times[i] >= t_transient && run.modes[i] != ControlMode::off)
      rep.max_abs_H_err_after_transient = std::max(rep.max_abs_H_err_after_transient, e);
    if (run.modes[i] != ControlMode::off) {
      if (was_in && !c.in_region) {
        ++rep.region_exits;
        ++pending_exits;
      }
      if (!was_in && c.in_region) pending_exits = 0;
    }
    was_in = c.in_region;

    if (i > 0 && run.modes[i] != ControlMode::off && run.modes[i - 1] == run.modes[i] &&
        run.targets[i - 1] == run.targets[i] &&
        !c.overflow && !run.controls[i - 1].overflow) {
      const double L0 = 0.5 * run.controls[i - 1].H_err * run.controls[i - 1].H_err;
      const double L1 = 0.5 * c.H_err * c.H_err;
      const double band = detail::error_band(tr.states[i - 1], cfg, run.modes[i - 1],
                                             run.targets[i - 1], opt.rtol, opt.atol);
      const double e_prev = std::abs(run.controls[i - 1].H_err);
      // L = e^2/2 may grow by at most e * band + band^2 / 2 from step error alone.
      const double slack = e_prev * band + 0.5 * band * band + std::numeric_limits<double>::min();
      if (L1 - L0 > 10.0 * slack) ++rep.lyapunov_violations;
    }
  }
  rep.unrecovered_exits = pending_exits;
  if (!last_bad)
    rep.time_to_tol = tr.times.front();
  else if (*last_bad + 1 < n)
    rep.time_to_tol = tr.times[*last_bad + 1];
  rep.final_abs_H_err = run.controls.back().overflow ? std::numeric_limits<double>::infinity()
                                                     : std::abs(run.controls.back().H_err);
  return rep;
}

/// Integrates the closed loop, switching modes at the schedule times, and
/// records the controls at every output sample.
inline ClosedLoopRun run_closed_loop(const PlantModel& plant, const ControllerConfig& cfg, State s0,
                                     const IntegrationConfig& icfg,
                                     const ConvergenceOptions& copt = {}) {
  ClosedLoop loop(plant, cfg);
  ClosedLoopRun run;
  std::vector<Event> region_events;
  bool was_in = true;

  Hooks hooks;
  for (const auto& e : cfg.schedule) hooks.breakpoints.push_back(e.time);
  hooks.on_breakpoint = [&](double t, std::size_t i) {
    loop.switch_to(cfg.schedule[i]);
    region_events.push_back({t, "mode", std::string(to_string(cfg.schedule[i].mode)) +
                                            " target=" + std::to_string(cfg.schedule[i].target)});
  };
  hooks.observe = [&](double t, const State& s) {
    const ControlOutput c = loop.control(s);
    run.controls.push_back(c);
    run.modes.push_back(loop.mode());
    run.targets.push_back(loop.target());
    if (loop.mode() != ControlMode::off) {
      if (was_in && !c.in_region) region_events.push_back({t, "region_exit", ""});
      if (!was_in && c.in_region) region_events.push_back({t, "region_entry", ""});
    }
    was_in = c.in_region;
    SampleExtras x;
    if (loop.mode() != ControlMode::off) {
      x.u = c.u;
      x.v = c.v;
      if (!c.overflow) x.H = c.H;
    }
    return x;
  };

  run.trajectory = integrate(loop, s0, icfg, hooks);
  auto& ev = run.trajectory.events;
  ev.insert(ev.end(), region_events.begin(), region_events.end());
  std::stable_sort(ev.begin(), ev.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
  run.report = convergence_report(run, cfg, copt);
  return run;
}

}  // namespace canard
