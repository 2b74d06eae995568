#pragma once

// Local normal-form data at a fold: contact order k and the coefficients of
// a_c x^{2k} + b_c y, from finite differences of the fast field.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "canard/dynamics.hpp"
#include "canard/error.hpp"
#include "canard/manifold.hpp"

namespace canard {

struct FdResult {
  double value = 0.0;
  double disagreement = 0.0;  // relative gap between the last two Richardson levels
  bool precision_warning = false;
};

inline constexpr double kRichardsonWarn = 1e-4;

/// Default base step for an n-th derivative at `at`. Higher orders use larger
/// steps so that the 1/h^n roundoff amplification stays bounded.
inline double fd_base_step(double at, int order) {
  const double h = std::max(1e-4, 1e-3 * std::abs(at));
  return order <= 2 ? h : h * std::pow(10.0, 0.5 * (order - 2));
}

namespace detail {

inline double binomial(int n, int k) {
  double out = 1.0;
  for (int i = 1; i <= k; ++i) out = out * (n - k + i) / i;
  return out;
}

/// Central difference of order n with nodes at (n/2 - j) h, j = 0..n.
template <class F>
double central_difference(const F& f, double at, int n, double h) {
  double acc = 0.0;
  for (int j = 0; j <= n; ++j) {
    const double sign = (j % 2 == 0) ? 1.0 : -1.0;
    acc += sign * binomial(n, j) * f(at + (0.5 * n - j) * h);
  }
  return acc / std::pow(h, n);
}

}  // namespace detail

/// n-th derivative by central differences with two Richardson levels.
template <class F>
FdResult fd_derivative(const F& f, double at, int order, std::optional<double> step = {}) {
  if (order < 1 || order > 6) throw ConfigError("order", "must lie in [1, 6]");
  const double h = step.value_or(fd_base_step(at, order));
  const double d0 = detail::central_difference(f, at, order, h);
  const double d1 = detail::central_difference(f, at, order, 0.5 * h);
  const double d2 = detail::central_difference(f, at, order, 0.25 * h);
  // Error expansion is even in h.
  const double r10 = (4.0 * d1 - d0) / 3.0;
  const double r11 = (4.0 * d2 - d1) / 3.0;
  const double r2 = (16.0 * r11 - r10) / 15.0;
  FdResult out;
  out.value = r2;
  // Values below the rounding noise of the widest stencil count as zero.
  double fmax = 0.0;
  for (int j = 0; j <= order; ++j) fmax = std::max(fmax, std::abs(f(at + (0.5 * order - j) * h)));
  const double noise = 1e-8 * fmax / std::pow(h, order);
  const double scale = std::max({std::abs(r11), std::abs(r2), noise, 1e-300});
  out.disagreement = std::abs(r2 - r11) / scale;
  out.precision_warning = out.disagreement > kRichardsonWarn;
  return out;
}

struct ExpansionOptions {
  int k_max = 3;
  double theta = 1e-5;   // relative to max|F| on the neighbourhood
  double radius = 0.05;  // neighbourhood half-width in x
  std::optional<int> forced_k;
};

struct Expansion {
  FoldPoint fold;             // with k, a_c, b_c, sigma filled in
  NormalFormParams normal_form;
  std::vector<double> derivatives;  // d^n F / dx^n at the fold, n = 1..2 k_max
  double scale = 0.0;               // max|F| on the neighbourhood
  std::vector<std::string> warnings;
};

/// Expands F(., y*) about x*. The contact order k is the smallest k for which
/// the Taylor term |F^(2k)| rho^(2k) / (2k)! exceeds theta * max|F| while all
/// lower-order terms stay below it.
template <FastField Field>
Expansion expand_at_fold(const Field& field, const FoldPoint& fold, double epsilon,
                         const ExpansionOptions& opt = {}) {
  if (opt.k_max < 1 || opt.k_max > 3) throw ConfigError("k_max", "must lie in [1, 3]");
  if (opt.forced_k && (*opt.forced_k < 1 || *opt.forced_k > 3))
    throw ConfigError("forced_k", "must lie in [1, 3]");
  const double x0 = fold.x_star;
  const double y0 = fold.y_star;
  const auto f = [&](double x) { return field.value(x, y0); };

  Expansion out;
  out.fold = fold;

  for (int i = 0; i <= 100; ++i) {
    const double x = x0 - opt.radius + 2.0 * opt.radius * i / 100.0;
    try {
      out.scale = std::max(out.scale, std::abs(f(x)));
    } catch (const PoleError&) {
    }
  }
  const double threshold = opt.theta * out.scale;

  const int n_max = 2 * std::max(opt.k_max, opt.forced_k.value_or(1));
  double factorial = 1.0;
  std::vector<double> taylor;
  std::vector<FdResult> fd;
  for (int n = 1; n <= n_max; ++n) {
    factorial *= n;
    fd.push_back(fd_derivative(f, x0, n));
    const FdResult& d = fd.back();
    out.derivatives.push_back(d.value);
    taylor.push_back(std::abs(d.value) * std::pow(opt.radius, n) / factorial);
  }

  int k = 0;
  if (opt.forced_k) {
    k = *opt.forced_k;
  } else {
    for (int n = 1; n <= n_max; ++n) {
      if (taylor[n - 1] <= threshold) continue;
      if (n % 2 == 1)
        throw NumericalError("not a fold of even contact: derivative of order " +
                             std::to_string(n) + " is the first non-vanishing one");
      k = n / 2;
      break;
    }
    if (k == 0)
      throw NumericalError("fold is degenerate beyond k_max = " + std::to_string(opt.k_max));
  }

  // Lower orders are zero to within the threshold; only the leading one is used.
  if (fd[2 * k - 1].precision_warning)
    out.warnings.push_back("derivative of order " + std::to_string(2 * k) +
                           " lost precision (Richardson gap " +
                           std::to_string(fd[2 * k - 1].disagreement) + ")");

  double fact_2k = 1.0;
  for (int i = 2; i <= 2 * k; ++i) fact_2k *= i;
  const double a_c = out.derivatives[2 * k - 1] / fact_2k;
  const double b_c = field.dy(x0, y0);
  if (!(std::abs(b_c) > 1e-12 * std::max(1.0, out.scale)) || !std::isfinite(b_c))
    throw NumericalError("transversality fails: dF/dy vanishes at the fold");
  if (a_c == 0.0 || !std::isfinite(a_c))
    throw NumericalError("leading coefficient a_c vanishes at the chosen order");

  out.normal_form = NormalFormParams::make(a_c, b_c, k, epsilon);
  out.fold.k = k;
  out.fold.a_c = a_c;
  out.fold.b_c = b_c;
  out.fold.sigma = out.normal_form.sigma;
  return out;
}

inline Expansion expand_at_fold(const FoldPoint& fold, const DecisionParamsReduced& p,
                                const ExpansionOptions& opt = {}) {
  return expand_at_fold(DecisionField(p), fold, p.epsilon, opt);
}

inline Expansion expand_at_fold(const FoldPoint& fold, const DecisionParamsFull& p,
                                const ExpansionOptions& opt = {}) {
  return expand_at_fold(DecisionField(p), fold, p.epsilon, opt);
}

}  // namespace canard
