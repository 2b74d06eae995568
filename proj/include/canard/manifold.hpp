#pragma once

// Critical manifold {F(x, y, 0) = 0} of the decision model: roots at fixed
// y, their stability, fold points and the reduced slow flow.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "canard/dynamics.hpp"
#include "canard/error.hpp"

namespace canard {

struct Asymptotes {
  double x_L = 0.0;
  double x_R = 1.0;
};

/// Limits of the manifold as y -> -inf (x_L) and y -> +inf (x_R).
inline Asymptotes asymptotes(const DecisionParamsFull& p) {
  const double den_l = p.gamma1 * p.eta1 + p.gamma2;
  const double den_r = p.gamma1 + p.gamma2 * p.eta2;
  if (!(den_l > 0.0) || !(den_r > 0.0))
    throw ConfigError("params", "asymptote denominators must be positive");
  return {p.gamma1 * p.eta1 / den_l, p.gamma1 / den_r};
}

enum class Stability { attracting, repelling };

inline const char* to_string(Stability s) {
  return s == Stability::attracting ? "attracting" : "repelling";
}

struct ManifoldRoot {
  double x = 0.0;
  double dfdx = 0.0;
  Stability stability = Stability::attracting;
};

struct ManifoldSample {
  double y = 0.0;
  std::vector<ManifoldRoot> roots;  // sorted by x
};

/// Open x-interval searched for roots.
struct ScanDomain {
  double lo = 0.0;
  double hi = 1.0;
  std::size_t cells = 2000;
};

inline constexpr double kDomainMargin = 1e-6;

/// (x_L + mu, min(x_R, d - mu) - mu). When the asymptotes coincide (full
/// unconditional exploration) the manifold is the vertical line x = x_L and a
/// small bracket around it is returned instead.
inline ScanDomain scan_domain(const DecisionParamsFull& p, std::size_t cells = 2000) {
  const Asymptotes a = asymptotes(p);
  ScanDomain dom;
  dom.cells = cells;
  dom.lo = a.x_L + kDomainMargin;
  dom.hi = std::min(a.x_R, p.d - kDomainMargin) - kDomainMargin;
  if (!(dom.hi > dom.lo)) {
    const double w = 1e-3 * std::max(1e-3, a.x_R - a.x_L + 1e-3);
    dom.lo = a.x_L - w;
    dom.hi = std::min(a.x_R + w, p.d - kDomainMargin);
  }
  return dom;
}

inline ScanDomain scan_domain(const DecisionParamsReduced& p, std::size_t cells = 2000) {
  return scan_domain(p.to_full(), cells);
}

namespace detail {

inline constexpr double kRootTol = 1e-12;

template <class F>
double bisect(const F& f, double a, double b, double fa) {
  for (int it = 0; it < 200; ++it) {
    const double m = 0.5 * (a + b);
    if (m <= a || m >= b) break;
    const double fm = f(m);
    if (std::abs(fm) <= kRootTol && b - a < 1e-9) return m;
    if (fm == 0.0) return m;
    if ((fm < 0.0) == (fa < 0.0)) {
      a = m;
      fa = fm;
    } else {
      b = m;
    }
  }
  return 0.5 * (a + b);
}

/// Number of sign changes of f over a uniform grid; exact zeros count once.
template <class F>
std::size_t count_sign_changes(const F& f, const ScanDomain& dom) {
  const double h = (dom.hi - dom.lo) / static_cast<double>(dom.cells);
  std::size_t n = 0;
  double prev = f(dom.lo);
  for (std::size_t i = 1; i <= dom.cells; ++i) {
    const double x = (i == dom.cells) ? dom.hi : dom.lo + static_cast<double>(i) * h;
    const double cur = f(x);
    if (cur == 0.0) {
      ++n;
      continue;  // keep prev so the zero is not counted twice
    }
    if ((cur < 0.0) != (prev < 0.0) && prev != 0.0) ++n;
    prev = cur;
  }
  return n;
}

}  // namespace detail

/// All roots of F(., y) in the scan domain, each refined by bisection.
template <FastField Field>
ManifoldSample manifold_roots(const Field& field, double y, const ScanDomain& dom) {
  if (!std::isfinite(y)) throw ConfigError("y", "must be finite");
  ManifoldSample out;
  out.y = y;
  const auto f = [&](double x) { return field.value(x, y); };
  const double h = (dom.hi - dom.lo) / static_cast<double>(dom.cells);
  double xa = dom.lo;
  double fa = f(xa);
  auto push = [&](double x) {
    ManifoldRoot r;
    r.x = x;
    r.dfdx = field.dx(x, y);
    r.stability = r.dfdx < 0.0 ? Stability::attracting : Stability::repelling;
    out.roots.push_back(r);
  };
  if (fa == 0.0) push(xa);
  for (std::size_t i = 1; i <= dom.cells; ++i) {
    const double xb = (i == dom.cells) ? dom.hi : dom.lo + static_cast<double>(i) * h;
    const double fb = f(xb);
    if (fb == 0.0) {
      push(xb);
    } else if (fa != 0.0 && (fa < 0.0) != (fb < 0.0)) {
      push(detail::bisect(f, xa, xb, fa));
    }
    xa = xb;
    fa = fb;
  }
  return out;
}

template <FastField Field>
std::size_t count_roots(const Field& field, double y, const ScanDomain& dom) {
  return detail::count_sign_changes([&](double x) { return field.value(x, y); }, dom);
}

inline ManifoldSample manifold_roots(double y, const DecisionParamsFull& p) {
  return manifold_roots(DecisionField(p), y, scan_domain(p));
}

inline ManifoldSample manifold_roots(double y, const DecisionParamsReduced& p) {
  return manifold_roots(y, p.to_full());
}

/// Manifold sampled on `levels` equally spaced y values in [y_lo, y_hi].
template <FastField Field>
std::vector<ManifoldSample> sample_manifold(const Field& field, const ScanDomain& dom,
                                            double y_lo, double y_hi, std::size_t levels) {
  std::vector<ManifoldSample> out;
  out.reserve(levels);
  for (std::size_t i = 0; i < levels; ++i) {
    const double y = levels == 1 ? y_lo
                                 : y_lo + (y_hi - y_lo) * static_cast<double>(i) /
                                              static_cast<double>(levels - 1);
    out.push_back(manifold_roots(field, y, dom));
  }
  return out;
}

/// Slow field restricted to a manifold branch: y (1 - r x(y)).
inline double reduced_slow_flow(double y, double branch_root, double r) {
  return y * (1.0 - r * branch_root);
}

struct FoldPoint {
  double x_star = 0.0;
  double y_star = 0.0;
  int k = 1;
  double a_c = 0.0;
  double b_c = 0.0;
  int sigma = 0;
  double residual = 0.0;  // max(|F|, |F_x|) at the returned point
  bool converged = false;
};

struct FoldSearch {
  double y_lo = 0.0;
  double y_hi = 60.0;
  double newton_tol = 1e-10;
  int max_newton = 60;
};

/// Point of the manifold traced as a graph y = Y(x).
struct TracePoint {
  double x = 0.0;
  double y = 0.0;
  double dfdx = 0.0;
};

/// Traces {F = 0} over the x grid of `dom`, keeping points with y in
/// [y_lo, y_hi]. F must be strictly monotone in y, which holds for the
/// decision models (gamma > 0) and the normal forms (b_c != 0); a sign change
/// of F_y along the trace throws.
template <FastField Field>
std::vector<TracePoint> trace_manifold(const Field& field, const ScanDomain& dom, double y_lo,
                                       double y_hi) {
  if (!std::isfinite(y_lo) || !std::isfinite(y_hi) || !(y_hi > y_lo))
    throw ConfigError("y_range", "must be finite and non-degenerate");
  std::vector<TracePoint> out;
  const double h = (dom.hi - dom.lo) / static_cast<double>(dom.cells);
  int fy_sign = 0;
  for (std::size_t i = 0; i <= dom.cells; ++i) {
    const double x = (i == dom.cells) ? dom.hi : dom.lo + static_cast<double>(i) * h;
    const double f_lo = field.value(x, y_lo);
    const double f_hi = field.value(x, y_hi);
    double y;
    if (f_lo == 0.0)
      y = y_lo;
    else if (f_hi == 0.0)
      y = y_hi;
    else if ((f_lo < 0.0) != (f_hi < 0.0))
      y = detail::bisect([&](double yy) { return field.value(x, yy); }, y_lo, y_hi, f_lo);
    else
      continue;
    const int s = field.dy(x, y) > 0.0 ? 1 : -1;
    if (fy_sign != 0 && s != fy_sign)
      throw NumericalError("critical manifold is not a graph over x (dF/dy changes sign)");
    fy_sign = s;
    out.push_back({x, y, field.dx(x, y)});
  }
  return out;
}

namespace detail {

template <FastField Field>
double second_x(const Field& field, double x, double y) {
  const double h = 1e-5 * std::max(1.0, std::abs(x));
  return (field.dx(x + h, y) - field.dx(x - h, y)) / (2.0 * h);
}

template <FastField Field>
double mixed_xy(const Field& field, double x, double y) {
  const double h = 1e-5 * std::max(1.0, std::abs(y));
  return (field.dx(x, y + h) - field.dx(x, y - h)) / (2.0 * h);
}

/// Damped Newton on {F = 0, F_x = 0}.
template <FastField Field>
FoldPoint newton_fold(const Field& field, double x, double y, const FoldSearch& opt) {
  auto residual = [&](double xx, double yy) {
    return std::max(std::abs(field.value(xx, yy)), std::abs(field.dx(xx, yy)));
  };
  FoldPoint fp;
  double res = residual(x, y);
  for (int it = 0; it < opt.max_newton && res > opt.newton_tol; ++it) {
    const double f = field.value(x, y);
    const double fx = field.dx(x, y);
    const double fy = field.dy(x, y);
    const double fxx = second_x(field, x, y);
    const double fxy = mixed_xy(field, x, y);
    const double det = fx * fxy - fy * fxx;
    if (det == 0.0 || !std::isfinite(det)) break;
    const double dx = (f * fxy - fy * fx) / det;
    const double dy = (fx * fx - f * fxx) / det;
    double lambda = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 30; ++ls) {
      const double xn = x - lambda * dx;
      const double yn = y - lambda * dy;
      double rn = std::numeric_limits<double>::infinity();
      try {
        rn = residual(xn, yn);
      } catch (const PoleError&) {
      }
      if (rn < res) {
        x = xn;
        y = yn;
        res = rn;
        moved = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!moved) break;
  }
  fp.x_star = x;
  fp.y_star = y;
  fp.residual = res;
  fp.converged = res <= opt.newton_tol;
  return fp;
}

}  // namespace detail

struct FoldReport {
  std::vector<FoldPoint> folds;  // sorted by x
  bool converged = true;         // every fold reached the Newton tolerance
};

/// Folds of the manifold with y in [y_lo, y_hi]: sign changes of F_x along
/// the traced graph y = Y(x), isolated by bisection in x and refined by
/// Newton on {F, F_x}. Tangencies of F_x without a sign change are not
/// reported.
template <FastField Field>
FoldReport find_folds(const Field& field, const ScanDomain& dom, const FoldSearch& opt = {}) {
  const std::vector<TracePoint> tr = trace_manifold(field, dom, opt.y_lo, opt.y_hi);
  const auto on_graph = [&](double x) {
    const double f_lo = field.value(x, opt.y_lo);
    return detail::bisect([&](double yy) { return field.value(x, yy); }, opt.y_lo, opt.y_hi, f_lo);
  };
  const auto slope = [&](double x) { return field.dx(x, on_graph(x)); };

  FoldReport rep;
  const double h = (dom.hi - dom.lo) / static_cast<double>(dom.cells);
  for (std::size_t i = 0; i + 1 < tr.size(); ++i) {
    const TracePoint& a = tr[i];
    const TracePoint& b = tr[i + 1];
    if (b.x - a.x > 1.5 * h) continue;  // the trace left the y window in between
    if (a.dfdx == 0.0 && i > 0) continue;  // counted with the previous cell
    if (a.dfdx != 0.0 && b.dfdx != 0.0 && (a.dfdx < 0.0) == (b.dfdx < 0.0)) continue;
    double x = a.dfdx == 0.0 ? a.x : b.dfdx == 0.0 ? b.x : detail::bisect(slope, a.x, b.x, a.dfdx);
    const double y = on_graph(x);
    FoldPoint fp = detail::newton_fold(field, x, y, opt);
    if (!(std::abs(fp.x_star - x) <= h) || !std::isfinite(fp.y_star)) {
      // Newton wandered off; keep the bracketed point.
      fp.x_star = x;
      fp.y_star = y;
      fp.residual = std::max(std::abs(field.value(x, y)), std::abs(field.dx(x, y)));
      fp.converged = fp.residual <= opt.newton_tol;
    }
    rep.converged = rep.converged && fp.converged;
    rep.folds.push_back(fp);
  }
  return rep;
}

inline FoldReport find_folds(const DecisionParamsReduced& p, const FoldSearch& opt = {}) {
  return find_folds(DecisionField(p), scan_domain(p), opt);
}

inline FoldReport find_folds(const DecisionParamsFull& p, const FoldSearch& opt = {}) {
  return find_folds(DecisionField(p), scan_domain(p), opt);
}

}  // namespace canard
