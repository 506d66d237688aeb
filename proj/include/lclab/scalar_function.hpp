#pragma once

// Real scalar functions with derivative access.
//
// Every function is represented by its jet map x -> (f(x), f'(x), ...).
// Built-in families (smooth steps, bumps, polynomials) evaluate their jets
// exactly through Taylor arithmetic; wrapped user callables fall back to
// high-order central differences.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "lclab/errors.hpp"
#include "lclab/taylor.hpp"

namespace lclab {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Closed interval, possibly unbounded or empty (lo > hi).
struct Interval {
  double lo = -kInf;
  double hi = kInf;

  static Interval empty() { return {1.0, -1.0}; }
  static Interval whole() { return {}; }
  bool is_empty() const { return lo > hi; }
  bool bounded() const { return std::isfinite(lo) && std::isfinite(hi); }
  bool contains(double x) const { return x >= lo && x <= hi; }
  double length() const { return is_empty() ? 0.0 : hi - lo; }

  Interval hull(const Interval& o) const {
    if (is_empty()) return o;
    if (o.is_empty()) return *this;
    return {std::min(lo, o.lo), std::max(hi, o.hi)};
  }
  Interval intersect(const Interval& o) const {
    Interval r{std::max(lo, o.lo), std::min(hi, o.hi)};
    return r.is_empty() ? empty() : r;
  }
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Where a function and its derivative can be nonzero (closures, conservative).
struct Support {
  Interval value = Interval::whole();
  Interval derivative = Interval::whole();
};

class ScalarFunction {
 public:
  using JetFn = std::function<Jet(double, int)>;

  ScalarFunction() : ScalarFunction([](double, int order) { return Jet(0.0, order); },
                                    {Interval::empty(), Interval::empty()}, "zero") {}

  ScalarFunction(JetFn fn, Support support, std::string name)
      : fn_(std::make_shared<JetFn>(std::move(fn))), support_(support), name_(std::move(name)) {}

  Jet jet(double x, int order) const { return (*fn_)(x, order); }
  double operator()(double x) const { return jet(x, 0).value(); }
  double derivative(double x, int k) const { return jet(x, k).derivative(k); }
  std::vector<double> derivatives(double x, int kmax) const { return jet(x, kmax).derivatives(); }

  const Support& support() const { return support_; }
  const std::string& name() const { return name_; }

  /// x -> f((x - shift) / scale), scale > 0.
  ScalarFunction rescaled(double shift, double scale) const {
    require(scale > 0.0, "rescaled: scale must be positive");
    auto fn = fn_;
    auto map = [=](const Interval& iv) {
      if (iv.is_empty()) return iv;
      return Interval{shift + scale * iv.lo, shift + scale * iv.hi};
    };
    return ScalarFunction(
        [fn, shift, scale](double x, int order) {
          Jet j = (*fn)((x - shift) / scale, order);
          double f = 1.0;
          for (int k = 1; k <= order; ++k) {
            f /= scale;
            j[k] *= f;
          }
          return j;
        },
        {map(support_.value), map(support_.derivative)}, name_ + "_rescaled");
  }

  /// k-th derivative as a function in its own right.
  ScalarFunction derivative_function(int k) const {
    auto fn = fn_;
    Support s{k >= 1 ? support_.derivative : support_.value,
              k >= 1 ? support_.derivative : support_.derivative};
    return ScalarFunction(
        [fn, k](double x, int order) {
          Jet full = (*fn)(x, order + k);
          Jet r(0.0, order);
          // d^m/dx^m f^(k) = f^(k+m); store normalized coefficients.
          for (int m = 0; m <= order; ++m) {
            double num = 1.0;
            for (int i = m + 1; i <= m + k; ++i) num *= i;
            r[m] = full[m + k] * num;
          }
          return r;
        },
        s, name_ + "^(" + std::to_string(k) + ")");
  }

  ScalarFunction scaled(double a) const {
    auto fn = fn_;
    Support s = a == 0.0 ? Support{Interval::empty(), Interval::empty()} : support_;
    return ScalarFunction([fn, a](double x, int order) { return (*fn)(x, order) * a; }, s,
                          name_);
  }

  friend ScalarFunction operator*(const ScalarFunction& f, const ScalarFunction& g) {
    auto a = f.fn_;
    auto b = g.fn_;
    Interval v = f.support_.value.intersect(g.support_.value);
    Interval d = f.support_.derivative.hull(g.support_.derivative).intersect(v);
    return ScalarFunction([a, b](double x, int order) { return (*a)(x, order) * (*b)(x, order); },
                          {v, d}, f.name_ + "*" + g.name_);
  }

  friend ScalarFunction operator+(const ScalarFunction& f, const ScalarFunction& g) {
    auto a = f.fn_;
    auto b = g.fn_;
    return ScalarFunction([a, b](double x, int order) { return (*a)(x, order) + (*b)(x, order); },
                          {f.support_.value.hull(g.support_.value),
                           f.support_.derivative.hull(g.support_.derivative)},
                          f.name_ + "+" + g.name_);
  }

 private:
  std::shared_ptr<JetFn> fn_;
  Support support_;
  std::string name_;
};

namespace detail {

// Below this argument exp(-1/t) is < 1e-290 and treated as exactly zero; this
// also keeps the jet coefficients (which grow like t^-2k) finite.
inline constexpr double kFlatThreshold = 1.5e-3;

/// exp(-1/t) for t > 0, 0 otherwise.
inline Jet flat_exp(const Jet& t) {
  if (t[0] <= kFlatThreshold) return Jet::zero(t.order());
  return exp(-(1.0 / t));
}

/// Smooth step 0 on (-inf, 0], 1 on [1, inf).
inline Jet unit_step(const Jet& t) {
  const int n = t.order();
  if (t[0] <= kFlatThreshold) return Jet::zero(n);
  if (t[0] >= 1.0 - kFlatThreshold) return Jet(1.0, n);
  Jet a = flat_exp(t);
  Jet b = flat_exp(1.0 - t);
  return a / (a + b);
}

/// exp(-1 / (1 - u^2)) on |u| < 1, 0 otherwise.
inline Jet unit_bump(const Jet& u) {
  Jet q = 1.0 - u * u;
  if (q[0] <= kFlatThreshold) return Jet::zero(u.order());
  return exp(-(1.0 / q));
}

/// Central-difference weights for the k-th derivative on the stencil
/// -m..m (unit spacing), from the Vandermonde moment conditions.
inline std::vector<double> central_weights(int k, int m) {
  const int n = 2 * m + 1;
  std::vector<double> a(static_cast<std::size_t>(n * n));
  std::vector<double> rhs(static_cast<std::size_t>(n), 0.0);
  auto at = [&](int r, int c) -> double& { return a[static_cast<std::size_t>(r * n + c)]; };
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) at(r, c) = std::pow(static_cast<double>(c - m), r);
  }
  double fact = 1.0;
  for (int i = 2; i <= k; ++i) fact *= i;
  rhs[static_cast<std::size_t>(k)] = fact;
  for (int c = 0; c < n; ++c) {
    int piv = c;
    for (int r = c + 1; r < n; ++r)
      if (std::abs(at(r, c)) > std::abs(at(piv, c))) piv = r;
    if (piv != c) {
      for (int j = 0; j < n; ++j) std::swap(at(c, j), at(piv, j));
      std::swap(rhs[static_cast<std::size_t>(c)], rhs[static_cast<std::size_t>(piv)]);
    }
    for (int r = c + 1; r < n; ++r) {
      const double f = at(r, c) / at(c, c);
      if (f == 0.0) continue;
      for (int j = c; j < n; ++j) at(r, j) -= f * at(c, j);
      rhs[static_cast<std::size_t>(r)] -= f * rhs[static_cast<std::size_t>(c)];
    }
  }
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int c = n - 1; c >= 0; --c) {
    double acc = rhs[static_cast<std::size_t>(c)];
    for (int j = c + 1; j < n; ++j) acc -= at(c, j) * w[static_cast<std::size_t>(j)];
    w[static_cast<std::size_t>(c)] = acc / at(c, c);
  }
  return w;
}

/// Jet of an arbitrary callable by 4th-order-accurate central differences.
/// The first derivative uses step h; higher derivatives widen the step to
/// balance truncation against cancellation.
inline Jet finite_difference_jet(const std::function<double(double)>& f, double x, int order,
                                 double h) {
  Jet r(f(x), order);
  double fact = 1.0;
  for (int k = 1; k <= order; ++k) {
    fact *= k;
    const int m = (k + 1) / 2 + 2;
    const double hk = k == 1 ? h : std::max(h, 1e4 * h * std::pow(1e-16, 1.0 / (k + 4)));
    const std::vector<double> w = central_weights(k, m);
    double acc = 0.0;
    for (int i = -m; i <= m; ++i) acc += w[static_cast<std::size_t>(i + m)] * f(x + i * hk);
    r[k] = acc / std::pow(hk, k) / fact;
  }
  return r;
}

}  // namespace detail

namespace functions {

inline ScalarFunction constant(double c) {
  Support s{c == 0.0 ? Interval::empty() : Interval::whole(), Interval::empty()};
  return ScalarFunction([c](double, int order) { return Jet(c, order); }, s, "constant");
}

inline ScalarFunction identity() {
  return ScalarFunction([](double x, int order) { return Jet::variable(x, order); },
                        {Interval::whole(), Interval::whole()}, "identity");
}

/// sum_k coeffs[k] x^k
inline ScalarFunction polynomial(std::vector<double> coeffs) {
  return ScalarFunction(
      [coeffs](double x, int order) {
        Jet t = Jet::variable(x, order);
        Jet r(0.0, order);
        for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) r = r * t + *it;
        return r;
      },
      {Interval::whole(), Interval::whole()}, "polynomial");
}

/// C-infinity step: 0 for x <= a, 1 for x >= b.
inline ScalarFunction smooth_step(double a, double b) {
  require(b > a, "smooth_step: need a < b");
  return ScalarFunction(
      [a, b](double x, int order) {
        return detail::unit_step((Jet::variable(x, order) - a) / (b - a));
      },
      {Interval{a, kInf}, Interval{a, b}}, "smooth_step");
}

/// C-infinity step: 1 for x <= a, 0 for x >= b.
inline ScalarFunction smooth_drop(double a, double b) {
  require(b > a, "smooth_drop: need a < b");
  return ScalarFunction(
      [a, b](double x, int order) {
        return detail::unit_step((b - Jet::variable(x, order)) / (b - a));
      },
      {Interval{-kInf, b}, Interval{a, b}}, "smooth_drop");
}

/// Unnormalized bump exp(-1/(1-u^2)), u = (x-center)/radius, peak value e^-1.
inline ScalarFunction bump(double center, double radius) {
  require(radius > 0.0, "bump: radius must be positive");
  Interval iv{center - radius, center + radius};
  return ScalarFunction(
      [center, radius](double x, int order) {
        return detail::unit_bump((Jet::variable(x, order) - center) / radius);
      },
      {iv, iv}, "bump");
}

/// Plateau: 1 on [a, b], 0 outside [a - w, b + w], smooth in between.
inline ScalarFunction plateau(double a, double b, double w) {
  require(b >= a && w > 0.0, "plateau: need a <= b and w > 0");
  ScalarFunction f = smooth_step(a - w, a) * smooth_drop(b, b + w);
  return ScalarFunction([f](double x, int order) { return f.jet(x, order); },
                        {Interval{a - w, b + w}, Interval{a - w, b + w}}, "plateau");
}

/// Wrap an arbitrary callable; derivatives come from central differences with
/// step 1e-4 * scale.
inline ScalarFunction from_callable(std::function<double(double)> f, double scale = 1.0,
                                    std::string name = "callable") {
  const double h = 1e-4 * scale;
  return ScalarFunction(
      [f = std::move(f), h](double x, int order) {
        return detail::finite_difference_jet(f, x, order, h);
      },
      {Interval::whole(), Interval::whole()}, std::move(name));
}

}  // namespace functions
}  // namespace lclab
