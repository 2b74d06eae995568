#pragma once

// Explicit Runge-Kutta integration (classic RK4 with a fixed step and
// Dormand-Prince 5(4) with step-size control) of planar systems, with
// scheduled breakpoints and strided sample output.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "canard/dynamics.hpp"
#include "canard/error.hpp"

namespace canard {

enum class Method { rk4_fixed, rk45_adaptive };

struct IntegrationConfig {
  Method method = Method::rk4_fixed;
  double dt = 1e-3;  // fixed step, also the initial step of the adaptive method
  double rtol = 1e-8;
  double atol = 1e-10;
  double dt_min = 1e-12;
  double dt_max = 1.0;
  double t_start = 0.0;
  double t_end = 1.0;
  std::size_t sample_stride = 1;
  std::size_t max_steps = 500'000'000;

  void validate() const {
    if (!(dt > 0.0)) throw ConfigError("integration.dt", "must be > 0");
    if (!(rtol > 0.0)) throw ConfigError("integration.rtol", "must be > 0");
    if (!(atol > 0.0)) throw ConfigError("integration.atol", "must be > 0");
    if (!(dt_min > 0.0) || !(dt_min <= dt_max))
      throw ConfigError("integration.dt_min", "need 0 < dt_min <= dt_max");
    if (!std::isfinite(t_start) || !std::isfinite(t_end) || t_end < t_start)
      throw ConfigError("integration.t_end", "must be finite and >= t_start");
    if (sample_stride == 0) throw ConfigError("integration.sample_stride", "must be >= 1");
  }
};

/// Per-sample quantities supplied by an observer (controls, Hamiltonian).
struct SampleExtras {
  std::optional<double> u;
  std::optional<double> v;
  std::optional<double> H;
};

struct Event {
  double t = 0.0;
  std::string kind;
  std::string detail;
};

enum class IntegrationStatus { completed, pole_error, step_underflow, non_finite, max_steps };

inline const char* to_string(IntegrationStatus s) {
  switch (s) {
    case IntegrationStatus::completed: return "completed";
    case IntegrationStatus::pole_error: return "pole_error";
    case IntegrationStatus::step_underflow: return "step_underflow";
    case IntegrationStatus::non_finite: return "non_finite";
    case IntegrationStatus::max_steps: return "max_steps";
  }
  return "unknown";
}

struct Trajectory {
  std::vector<double> times;
  std::vector<State> states;
  std::vector<SampleExtras> extras;  // empty unless an observer was attached
  std::vector<Event> events;
  IntegrationStatus status = IntegrationStatus::completed;
  std::string message;

  std::size_t size() const { return times.size(); }
  bool ok() const { return status == IntegrationStatus::completed; }
};

struct Hooks {
  /// Strictly increasing times at which `on_breakpoint` fires. Fixed-step runs
  /// fire at the first step boundary at or after the time; adaptive runs
  /// shorten the step to land on it.
  std::vector<double> breakpoints;
  std::function<void(double t, std::size_t index)> on_breakpoint;
  std::function<SampleExtras(double t, const State& s)> observe;
};

template <class S>
concept PlanarSystem = requires(const S& sys, double t, State s) {
  { sys(t, s) } -> std::convertible_to<State>;
};

namespace detail {

class Recorder {
 public:
  Recorder(Trajectory& out, const Hooks& hooks) : out_(out), hooks_(hooks) {}

  void record(double t, const State& s) {
    if (!out_.times.empty() && t <= out_.times.back()) return;
    out_.times.push_back(t);
    out_.states.push_back(s);
    if (hooks_.observe) out_.extras.push_back(hooks_.observe(t, s));
  }

 private:
  Trajectory& out_;
  const Hooks& hooks_;
};

class BreakpointCursor {
 public:
  BreakpointCursor(const Hooks& hooks, Trajectory& out) : hooks_(hooks), out_(out) {
    for (std::size_t i = 1; i < hooks_.breakpoints.size(); ++i)
      if (!(hooks_.breakpoints[i] > hooks_.breakpoints[i - 1]))
        throw ConfigError("schedule", "breakpoint times must be strictly increasing");
  }

  /// Fires every breakpoint with time <= t + slack.
  void fire_due(double t, double slack) {
    while (next_ < hooks_.breakpoints.size() && hooks_.breakpoints[next_] <= t + slack) {
      if (hooks_.on_breakpoint) hooks_.on_breakpoint(t, next_);
      out_.events.push_back({t, "breakpoint", std::to_string(next_)});
      ++next_;
    }
  }

  double next_time() const {
    return next_ < hooks_.breakpoints.size() ? hooks_.breakpoints[next_]
                                             : std::numeric_limits<double>::infinity();
  }

 private:
  const Hooks& hooks_;
  Trajectory& out_;
  std::size_t next_ = 0;
};

template <PlanarSystem System>
State rk4_step(const System& sys, double t, State s, double h) {
  const State k1 = sys(t, s);
  const State k2 = sys(t + 0.5 * h, s + (0.5 * h) * k1);
  const State k3 = sys(t + 0.5 * h, s + (0.5 * h) * k2);
  const State k4 = sys(t + h, s + h * k3);
  return s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

inline void fail(Trajectory& out, IntegrationStatus status, double t, std::string msg) {
  out.status = status;
  out.message = std::move(msg);
  out.events.push_back({t, to_string(status), out.message});
}

template <PlanarSystem System>
void run_fixed(const System& sys, State s, const IntegrationConfig& cfg, const Hooks& hooks,
               Trajectory& out) {
  Recorder rec(out, hooks);
  BreakpointCursor bps(hooks, out);
  const double span = cfg.t_end - cfg.t_start;
  const auto n_steps = static_cast<std::size_t>(std::ceil(span / cfg.dt - 1e-9));
  const double slack = 1e-9 * cfg.dt;

  double t = cfg.t_start;
  bps.fire_due(t, slack);
  rec.record(t, s);
  for (std::size_t n = 0; n < n_steps; ++n) {
    const double t_next =
        (n + 1 == n_steps) ? cfg.t_end : cfg.t_start + static_cast<double>(n + 1) * cfg.dt;
    State next;
    try {
      next = rk4_step(sys, t, s, t_next - t);
    } catch (const PoleError& e) {
      rec.record(t, s);
      fail(out, IntegrationStatus::pole_error, t, e.what());
      return;
    }
    if (!next.finite()) {
      rec.record(t, s);
      fail(out, IntegrationStatus::non_finite, t, "state became non-finite");
      return;
    }
    s = next;
    t = t_next;
    bps.fire_due(t, slack);
    if ((n + 1) % cfg.sample_stride == 0 || n + 1 == n_steps) rec.record(t, s);
  }
}

// Dormand-Prince 5(4) tableau.
struct DormandPrince {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  // b - b_hat (error weights)
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
};

template <PlanarSystem System>
void run_adaptive(const System& sys, State s, const IntegrationConfig& cfg, const Hooks& hooks,
                  Trajectory& out) {
  using T = DormandPrince;
  Recorder rec(out, hooks);
  BreakpointCursor bps(hooks, out);
  const double time_eps = 1e-12 * std::max(1.0, std::abs(cfg.t_end));

  double t = cfg.t_start;
  double h = std::clamp(cfg.dt, cfg.dt_min, cfg.dt_max);
  bps.fire_due(t, time_eps);
  rec.record(t, s);

  std::size_t accepted = 0;
  std::size_t steps = 0;
  try {
    State k1 = sys(t, s);
    while (t < cfg.t_end - time_eps) {
      if (++steps > cfg.max_steps) {
        fail(out, IntegrationStatus::max_steps, t, "maximum number of steps exceeded");
        rec.record(t, s);
        return;
      }
      const double stop = std::min(cfg.t_end, bps.next_time());
      bool clipped = false;
      double step = h;
      if (t + step >= stop - time_eps) {
        step = stop - t;
        clipped = true;
      }

      const State k2 = sys(t + T::c2 * step, s + step * (T::a21 * k1));
      const State k3 = sys(t + T::c3 * step, s + step * (T::a31 * k1 + T::a32 * k2));
      const State k4 =
          sys(t + T::c4 * step, s + step * (T::a41 * k1 + T::a42 * k2 + T::a43 * k3));
      const State k5 = sys(t + T::c5 * step, s + step * (T::a51 * k1 + T::a52 * k2 +
                                                         T::a53 * k3 + T::a54 * k4));
      const State k6 = sys(t + step, s + step * (T::a61 * k1 + T::a62 * k2 + T::a63 * k3 +
                                                 T::a64 * k4 + T::a65 * k5));
      const State next = s + step * (T::b1 * k1 + T::b3 * k3 + T::b4 * k4 + T::b5 * k5 +
                                     T::b6 * k6);
      const State k7 = sys(t + step, next);
      const State err = step * (T::e1 * k1 + T::e3 * k3 + T::e4 * k4 + T::e5 * k5 +
                                T::e6 * k6 + T::e7 * k7);

      const double sx = cfg.atol + cfg.rtol * std::max(std::abs(s.x), std::abs(next.x));
      const double sy = cfg.atol + cfg.rtol * std::max(std::abs(s.y), std::abs(next.y));
      const double err_norm = std::max(std::abs(err.x) / sx, std::abs(err.y) / sy);

      if (!next.finite() || !std::isfinite(err_norm)) {
        if (step <= cfg.dt_min) {
          fail(out, IntegrationStatus::non_finite, t, "state became non-finite");
          rec.record(t, s);
          return;
        }
        h = std::max(cfg.dt_min, 0.25 * step);
        continue;
      }

      if (err_norm <= 1.0) {
        t = clipped ? stop : t + step;
        s = next;
        k1 = k7;
        ++accepted;
        bps.fire_due(t, time_eps);
        if (accepted % cfg.sample_stride == 0 || t >= cfg.t_end - time_eps) rec.record(t, s);
        if (clipped) k1 = sys(t, s);  // the system may have switched at a breakpoint
        const double grow = err_norm == 0.0 ? 5.0 : std::min(5.0, 0.9 * std::pow(err_norm, -0.2));
        if (!clipped) h = std::min(cfg.dt_max, step * grow);
      } else {
        const double shrink = std::max(0.2, 0.9 * std::pow(err_norm, -0.25));
        const double trial = step * shrink;
        if (trial < cfg.dt_min) {
          fail(out, IntegrationStatus::step_underflow, t,
               "step size fell below dt_min (stiff region?)");
          rec.record(t, s);
          return;
        }
        h = trial;
      }
    }
  } catch (const PoleError& e) {
    rec.record(t, s);
    fail(out, IntegrationStatus::pole_error, t, e.what());
    return;
  }
  rec.record(t, s);
}

}  // namespace detail

/// Integrates `sys` from `s0` over [cfg.t_start, cfg.t_end]. Failures do not
/// throw: the returned trajectory ends at the last good state and carries the
/// status. Invalid configurations throw ConfigError.
template <PlanarSystem System>
Trajectory integrate(const System& sys, State s0, const IntegrationConfig& cfg,
                     const Hooks& hooks = {}) {
  cfg.validate();
  if (!s0.finite()) throw ConfigError("initial_state", "must be finite");
  Trajectory out;
  if (cfg.t_end == cfg.t_start) return out;
  if (cfg.method == Method::rk4_fixed)
    detail::run_fixed(sys, s0, cfg, hooks, out);
  else
    detail::run_adaptive(sys, s0, cfg, hooks, out);
  return out;
}

/// Layer problem x' = f(x, y, 0) with y frozen at its initial value.
template <class Fast>
  requires std::invocable<const Fast&, double, double>
Trajectory integrate_layer(const Fast& fast, State s0, const IntegrationConfig& cfg) {
  auto layer = [&fast](double, State s) { return State{fast(s.x, s.y), 0.0}; };
  return integrate(layer, s0, cfg);
}

template <FastField Field>
Trajectory integrate_layer(const Field& field, State s0, const IntegrationConfig& cfg) {
  return integrate_layer([&field](double x, double y) { return field.value(x, y); }, s0, cfg);
}

}  // namespace canard
