#pragma once

// Post-processing of sampled trajectories: time averages and cycle periods.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "canard/integrator.hpp"

namespace canard {

/// Time-weighted (trapezoidal) mean of x over [t0, t1], with segments cut by
/// the window clipped by linear interpolation. Sample spacing may be
/// non-uniform. Returns nullopt when the samples do not overlap the window.
inline std::optional<double> time_mean_x(const Trajectory& tr, double t0, double t1) {
  double acc = 0.0, w = 0.0;
  for (std::size_t i = 1; i < tr.size(); ++i) {
    const double ta = tr.times[i - 1], tb = tr.times[i];
    const double a = std::max(ta, t0), b = std::min(tb, t1);
    if (!(b > a)) continue;
    const auto x_at = [&](double t) {
      const double s = (t - ta) / (tb - ta);
      return tr.states[i - 1].x + s * (tr.states[i].x - tr.states[i - 1].x);
    };
    acc += 0.5 * (b - a) * (x_at(a) + x_at(b));
    w += b - a;
  }
  if (!(w > 0.0)) return std::nullopt;
  return acc / w;
}

struct Window {
  double t0 = 0.0;
  double t1 = 0.0;
};

/// Times in [t_from, end] at which y crosses its window mean upwards.
inline std::vector<double> upward_crossings(const Trajectory& tr, double t_from) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < tr.size(); ++i)
    if (tr.times[i] >= t_from) {
      sum += tr.states[i].y;
      ++n;
    }
  std::vector<double> out;
  if (n < 2) return out;
  const double level = sum / static_cast<double>(n);
  for (std::size_t i = 1; i < tr.size(); ++i) {
    if (tr.times[i - 1] < t_from) continue;
    const double a = tr.states[i - 1].y - level;
    const double b = tr.states[i].y - level;
    if (a < 0.0 && b >= 0.0) {
      const double w = a / (a - b);
      out.push_back(tr.times[i - 1] + w * (tr.times[i] - tr.times[i - 1]));
    }
  }
  return out;
}

/// The last complete oscillation period after t_from, bounded by two
/// consecutive upward crossings of the mean of y.
inline std::optional<Window> last_period(const Trajectory& tr, double t_from) {
  const std::vector<double> c = upward_crossings(tr, t_from);
  if (c.size() < 2) return std::nullopt;
  return Window{c[c.size() - 2], c.back()};
}

/// Mean x over the last complete period after t_from.
inline std::optional<double> cycle_centre_x(const Trajectory& tr, double t_from) {
  const auto w = last_period(tr, t_from);
  if (!w) return std::nullopt;
  return time_mean_x(tr, w->t0, w->t1);
}

}  // namespace canard
