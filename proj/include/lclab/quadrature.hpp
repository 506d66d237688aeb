#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <map>
#include <mutex>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "lclab/errors.hpp"

namespace lclab::quad {

/// Gauss-Legendre rule on [-1, 1].
struct Rule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

inline Rule compute_gauss_legendre(int n) {
  require(n >= 1, "gauss_legendre: need at least one node");
  Rule r;
  r.nodes.resize(static_cast<std::size_t>(n));
  r.weights.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    r.nodes[static_cast<std::size_t>(i)] = -x;
    r.nodes[static_cast<std::size_t>(n - 1 - i)] = x;
    r.weights[static_cast<std::size_t>(i)] = w;
    r.weights[static_cast<std::size_t>(n - 1 - i)] = w;
  }
  return r;
}

/// Cached rule; safe to call concurrently.
inline const Rule& gauss_legendre(int n) {
  static std::mutex mu;
  static std::map<int, Rule> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, compute_gauss_legendre(n)).first;
  return it->second;
}

/// Deterministic pairwise (tree) summation.
template <class T>
T pairwise_sum(std::span<const T> v) {
  if (v.empty()) return T(0);
  if (v.size() <= 8) {
    T acc = T(0);
    for (const T& x : v) acc += x;
    return acc;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

template <class T>
T pairwise_sum(const std::vector<T>& v) {
  return pairwise_sum(std::span<const T>(v.data(), v.size()));
}

/// Composite Gauss-Legendre over the given breakpoints.
template <class T, class F>
T composite(F&& f, std::span<const double> breaks, int order) {
  const Rule& r = gauss_legendre(order);
  std::vector<T> terms;
  terms.reserve(breaks.size() * static_cast<std::size_t>(order));
  for (std::size_t p = 0; p + 1 < breaks.size(); ++p) {
    const double a = breaks[p], b = breaks[p + 1];
    if (!(b > a)) continue;
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    for (std::size_t i = 0; i < r.nodes.size(); ++i) terms.push_back(f(c + h * r.nodes[i]) * (h * r.weights[i]));
  }
  return pairwise_sum(terms);
}

/// Uniform panels on [a, b].
inline std::vector<double> uniform_breaks(double a, double b, int panels) {
  std::vector<double> out(static_cast<std::size_t>(panels) + 1);
  for (int i = 0; i <= panels; ++i) out[static_cast<std::size_t>(i)] = a + (b - a) * i / panels;
  return out;
}

/// Adaptive Gauss-Kronrod on a finite interval. Throws QuadratureFailure when
/// the error estimate does not meet the tolerance.
inline double adaptive(const std::function<double(double)>& f, double a, double b,
                       double rel_tol = 1e-10, double abs_tol = 1e-14, unsigned max_depth = 30) {
  if (!(b > a)) return 0.0;
  double err = 0.0;
  double l1 = 0.0;
  const double val = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      f, a, b, max_depth, rel_tol, &err, &l1);
  if (!std::isfinite(val) || err > std::max(abs_tol, 1e3 * rel_tol * std::max(l1, std::abs(val))))
    throw QuadratureFailure("adaptive quadrature did not converge on [" + std::to_string(a) + ", " +
                            std::to_string(b) + "], error estimate " + std::to_string(err));
  return val;
}

/// Integral over [a, inf) via exp-sinh.
inline double adaptive_half_line(const std::function<double(double)>& f, double a,
                                 double rel_tol = 1e-10) {
  boost::math::quadrature::exp_sinh<double> integrator;
  double err = 0.0, l1 = 0.0;
  const double val = integrator.integrate([&](double t) { return f(a + t); }, 0.0,
                                          std::numeric_limits<double>::infinity(), rel_tol, &err, &l1);
  if (!std::isfinite(val) || err > 1e3 * rel_tol * std::max(l1, 1e-300) + 1e-14)
    throw QuadratureFailure("half-line quadrature did not converge");
  return val;
}

}  // namespace lclab::quad
