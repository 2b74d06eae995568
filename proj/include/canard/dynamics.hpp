#pragma once

// Right-hand sides of the two-strategy resource-consumption model, its
// reduced (homogeneous) variant and the generalized quadratic normal form.

#include <cmath>
#include <concepts>
#include <cstdlib>

#include "canard/error.hpp"

namespace canard {

/// Phase-space point. x is the share of agents exploiting the limited
/// resource, y the resource stock. Also used for time derivatives.
struct State {
  double x = 0.0;
  double y = 0.0;

  friend State operator+(State a, State b) { return {a.x + b.x, a.y + b.y}; }
  friend State operator-(State a, State b) { return {a.x - b.x, a.y - b.y}; }
  friend State operator*(double k, State a) { return {k * a.x, k * a.y}; }
  friend bool operator==(const State&, const State&) = default;

  bool finite() const { return std::isfinite(x) && std::isfinite(y); }
};

struct DecisionParamsFull {
  double alpha1 = 2.0, alpha2 = 2.0;
  double beta1 = 1.0, beta2 = 1.0;
  double gamma1 = 1.0, gamma2 = 1.0;
  double eta1 = 0.0, eta2 = 0.0;
  double b = 30.0;
  double c = 2.5;
  double d = 1.18;
  double r = 1.62;
  double epsilon = 0.01;
};

/// eta1 = eta2 = 0, alpha1 = alpha2, beta1 = beta2, gamma = gamma1/gamma2.
/// epsilon is taken as already rescaled by gamma2.
struct DecisionParamsReduced {
  double alpha = 2.0;
  double beta = 0.75;
  double gamma = 0.5;
  double b = 30.0;
  double c = 2.5;
  double d = 1.18;
  double r = 1.62;
  double epsilon = 0.01;

  DecisionParamsFull to_full() const {
    DecisionParamsFull f;
    f.alpha1 = f.alpha2 = alpha;
    f.beta1 = f.beta2 = beta;
    f.gamma1 = gamma;
    f.gamma2 = 1.0;
    f.eta1 = f.eta2 = 0.0;
    f.b = b;
    f.c = c;
    f.d = d;
    f.r = r;
    f.epsilon = epsilon;
    return f;
  }
};

/// Generalized quadratic normal form
///   x' = a_c x^{2k} + b_c y,   y' = -eps sigma k a_c x^{2k-1}.
struct NormalFormParams {
  double a_c = 1.0;
  double b_c = -1.0;
  int k = 1;
  int sigma = -1;
  double epsilon = 0.01;

  static NormalFormParams make(double a_c, double b_c, int k, double epsilon) {
    NormalFormParams nf;
    nf.a_c = a_c;
    nf.b_c = b_c;
    nf.k = k;
    nf.sigma = (a_c * b_c > 0.0) ? 1 : -1;
    nf.epsilon = epsilon;
    return nf;
  }

  /// Classic canard point x' = -y + x^2, y' = eps x.
  static NormalFormParams classic(double epsilon) { return make(1.0, -1.0, 1, epsilon); }

  void validate() const {
    if (a_c == 0.0 || !std::isfinite(a_c)) throw ConfigError("a_c", "must be finite and non-zero");
    if (b_c == 0.0 || !std::isfinite(b_c)) throw ConfigError("b_c", "must be finite and non-zero");
    if (k < 1) throw ConfigError("k", "contact order must be >= 1");
    if (sigma != ((a_c * b_c > 0.0) ? 1 : -1)) throw ConfigError("sigma", "must equal sign(a_c*b_c)");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon", "must be > 0");
  }
};

struct PerturbationSpec {
  double delta_a = 0.0;
  double delta_b = 0.0;
};

namespace detail {
inline void require(bool ok, const char* path, const char* what) {
  if (!ok) throw ConfigError(path, what);
}
}  // namespace detail

/// Checks the model's parameter bounds. The relaxed variant admits the closed
/// boundary (zero rates, d = 1) that parameter sweeps touch at their edges.
inline void validate(const DecisionParamsReduced& p, bool strict = true) {
  using detail::require;
  const bool finite = std::isfinite(p.alpha) && std::isfinite(p.beta) && std::isfinite(p.gamma) &&
                      std::isfinite(p.b) && std::isfinite(p.c) && std::isfinite(p.d) &&
                      std::isfinite(p.r) && std::isfinite(p.epsilon);
  require(finite, "params", "all parameters must be finite");
  if (strict) {
    require(p.alpha > 0.0, "params.alpha", "must be > 0");
    require(p.beta > 0.0, "params.beta", "must be > 0");
    require(p.gamma > 0.0, "params.gamma", "must be > 0");
    require(p.b > 1.0, "params.b", "must be > 1");
    require(p.c > 0.0, "params.c", "must be > 0");
    require(p.d > 1.0, "params.d", "must be > 1");
    require(p.r > 0.0, "params.r", "must be > 0");
  } else {
    require(p.alpha >= 0.0, "params.alpha", "must be >= 0");
    require(p.beta >= 0.0, "params.beta", "must be >= 0");
    require(p.gamma >= 0.0, "params.gamma", "must be >= 0");
    require(p.b > 0.0, "params.b", "must be > 0");
    require(p.c >= 0.0, "params.c", "must be >= 0");
    require(p.d >= 1.0, "params.d", "must be >= 1");
    require(p.r >= 0.0, "params.r", "must be >= 0");
  }
  require(p.epsilon > 0.0 && p.epsilon < 1.0, "params.epsilon", "must lie in (0, 1)");
}

inline void validate(const DecisionParamsFull& p, bool strict = true) {
  using detail::require;
  require(p.alpha1 > 0.0 && p.alpha2 > 0.0, "params.alpha", "offsets must be > 0");
  require(p.beta1 > 0.0 && p.beta2 > 0.0, "params.beta", "inverse temperatures must be > 0");
  require(p.gamma1 > 0.0 && p.gamma2 > 0.0, "params.gamma", "switching rates must be > 0");
  require(p.eta1 >= 0.0 && p.eta1 <= 1.0, "params.eta1", "must lie in [0, 1]");
  require(p.eta2 >= 0.0 && p.eta2 <= 1.0, "params.eta2", "must lie in [0, 1]");
  require(p.b > 1.0, "params.b", "must be > 1");
  require(p.c > 0.0, "params.c", "must be > 0");
  require(strict ? p.d > 1.0 : p.d >= 1.0, "params.d", "must be > 1");
  require(p.r > 0.0, "params.r", "must be > 0");
  require(p.epsilon > 0.0 && p.epsilon < 1.0, "params.epsilon", "must lie in (0, 1)");
}

inline constexpr double kPoleThreshold = 1e-12;

/// Logistic function evaluated without overflow for any finite argument.
inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double profit_difference(State s, double c, double d, double b) {
  const double gap = d - s.x;
  if (std::abs(gap) < kPoleThreshold) throw PoleError(s.x, d);
  return s.y + c / gap - b;
}

/// Integer power for the x^{2k} terms; exact for small k.
inline double ipow(double base, int n) {
  double out = 1.0;
  for (int i = 0; i < n; ++i) out *= base;
  return out;
}

inline State eval_full(State s, const DecisionParamsFull& p) {
  const double delta = profit_difference(s, p.c, p.d, p.b);
  const double to_limited =
      p.eta1 + (1.0 - p.eta1) * sigmoid(p.beta1 * (p.alpha1 + delta));
  const double to_unlimited =
      p.eta2 + (1.0 - p.eta2) * sigmoid(p.beta2 * (p.alpha2 - delta));
  return {p.gamma1 * (1.0 - s.x) * to_limited - p.gamma2 * s.x * to_unlimited,
          p.epsilon * s.y * (1.0 - p.r * s.x)};
}

inline State eval_reduced(State s, const DecisionParamsReduced& p) {
  const double delta = profit_difference(s, p.c, p.d, p.b);
  return {p.gamma * (1.0 - s.x) * sigmoid(p.beta * (p.alpha + delta)) -
              s.x * sigmoid(p.beta * (p.alpha - delta)),
          p.epsilon * s.y * (1.0 - p.r * s.x)};
}

inline State eval_normal_form(State s, const NormalFormParams& nf) {
  return {nf.a_c * ipow(s.x, 2 * nf.k) + nf.b_c * s.y,
          -nf.epsilon * nf.sigma * nf.k * nf.a_c * ipow(s.x, 2 * nf.k - 1)};
}

inline NormalFormParams perturbed(const NormalFormParams& nf, const PerturbationSpec& pert) {
  NormalFormParams out = nf;
  out.a_c += pert.delta_a;
  out.b_c += pert.delta_b;
  return out;  // sigma and k stay those of the nominal form
}

inline State eval_perturbed_normal_form(State s, const NormalFormParams& nf,
                                        const PerturbationSpec& pert) {
  return eval_normal_form(s, perturbed(nf, pert));
}

// ---------------------------------------------------------------------------
// Fast fields: F(x, y) at eps = 0 together with its first partials. The
// manifold and expansion code is written against this concept so that
// synthetic fields can be analysed with the same machinery.

template <class T>
concept FastField = requires(const T& f, double x, double y) {
  { f.value(x, y) } -> std::convertible_to<double>;
  { f.dx(x, y) } -> std::convertible_to<double>;
  { f.dy(x, y) } -> std::convertible_to<double>;
};

/// Fast component of the full model with analytic partial derivatives.
class DecisionField {
 public:
  explicit DecisionField(DecisionParamsFull p) : p_(p) {}
  explicit DecisionField(const DecisionParamsReduced& p) : p_(p.to_full()) {}

  const DecisionParamsFull& params() const { return p_; }

  double value(double x, double y) const { return eval_full({x, y}, p_).x; }

  double dx(double x, double y) const {
    const Parts q = parts(x, y);
    const double ddelta = p_.c / ((p_.d - x) * (p_.d - x));
    const double dp1 = (1.0 - p_.eta1) * p_.beta1 * q.s1 * (1.0 - q.s1) * ddelta;
    const double dp2 = -(1.0 - p_.eta2) * p_.beta2 * q.s2 * (1.0 - q.s2) * ddelta;
    return -p_.gamma1 * q.p1 + p_.gamma1 * (1.0 - x) * dp1 - p_.gamma2 * q.p2 -
           p_.gamma2 * x * dp2;
  }

  double dy(double x, double y) const {
    const Parts q = parts(x, y);
    const double dp1 = (1.0 - p_.eta1) * p_.beta1 * q.s1 * (1.0 - q.s1);
    const double dp2 = -(1.0 - p_.eta2) * p_.beta2 * q.s2 * (1.0 - q.s2);
    return p_.gamma1 * (1.0 - x) * dp1 - p_.gamma2 * x * dp2;
  }

  /// Slow field g(x, y) = y (1 - r x), without the eps factor.
  double slow(double x, double y) const { return y * (1.0 - p_.r * x); }

 private:
  struct Parts {
    double s1, s2, p1, p2;
  };
  Parts parts(double x, double y) const {
    const double delta = profit_difference({x, y}, p_.c, p_.d, p_.b);
    Parts q{};
    q.s1 = sigmoid(p_.beta1 * (p_.alpha1 + delta));
    q.s2 = sigmoid(p_.beta2 * (p_.alpha2 - delta));
    q.p1 = p_.eta1 + (1.0 - p_.eta1) * q.s1;
    q.p2 = p_.eta2 + (1.0 - p_.eta2) * q.s2;
    return q;
  }

  DecisionParamsFull p_;
};

/// Fast component of the (possibly perturbed) normal form.
class NormalFormField {
 public:
  explicit NormalFormField(NormalFormParams nf) : nf_(nf) {}
  double value(double x, double y) const { return eval_normal_form({x, y}, nf_).x; }
  double dx(double x, double) const {
    return 2.0 * nf_.k * nf_.a_c * ipow(x, 2 * nf_.k - 1);
  }
  double dy(double, double) const { return nf_.b_c; }

 private:
  NormalFormParams nf_;
};

}  // namespace canard
