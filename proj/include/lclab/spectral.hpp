#pragma once

// Functional calculus for Hermitian matrices: exact (eigenbasis) evaluation
// and the almost-analytic resolvent representation, with the weighted norms
// and remainder integrals that control the latter.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "lclab/errors.hpp"
#include "lclab/linalg.hpp"
#include "lclab/parallel.hpp"
#include "lclab/quadrature.hpp"
#include "lclab/scalar_function.hpp"

namespace lclab {

struct SpectralDecomposition {
  RealVector eigenvalues;  // ascending
  Matrix eigenvectors;     // columns, unitary

  Eigen::Index dim() const { return eigenvalues.size(); }

  /// U diag(values) U*.
  Matrix synthesize(const RealVector& values) const {
    return eigenvectors * values.cast<Complex>().asDiagonal() * eigenvectors.adjoint();
  }
  Matrix synthesize(const ComplexVector& values) const {
    return eigenvectors * values.asDiagonal() * eigenvectors.adjoint();
  }
};

inline SpectralDecomposition decompose(const HermitianOperator& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a.matrix());
  if (es.info() != Eigen::Success) throw NumericalFailure("decompose: eigensolver did not converge");
  return {es.eigenvalues(), es.eigenvectors()};
}

template <class F>
HermitianOperator apply_function_exact(const SpectralDecomposition& dec, F&& f, std::string label = {}) {
  RealVector v(dec.dim());
  for (Eigen::Index i = 0; i < dec.dim(); ++i) v(i) = f(dec.eigenvalues(i));
  return HermitianOperator::symmetrized(dec.synthesize(v), std::move(label));
}

/// g(mu) = 1 for mu <= E - width, 0 for mu >= E, nonincreasing in between.
class SmoothCutoff {
 public:
  SmoothCutoff(double energy, double width) : energy_(energy), width_(width) {
    require(width > 0.0, "SmoothCutoff: width must be positive");
    fn_ = functions::smooth_drop(energy - width, energy);
  }

  double energy() const { return energy_; }
  double width() const { return width_; }
  const ScalarFunction& function() const { return fn_; }
  double operator()(double mu) const { return fn_(mu); }
  double derivative(double mu, int k) const { return fn_.derivative(mu, k); }

  /// The cutoff times a rising ramp on [floor - ramp, floor]. Agrees with the
  /// cutoff on [floor, inf) and has compact support.
  ScalarFunction compactified(double floor, double ramp) const {
    require(ramp > 0.0 && floor < energy_, "SmoothCutoff::compactified: need ramp > 0 and floor < E");
    ScalarFunction f = fn_ * functions::smooth_step(floor - ramp, floor);
    return ScalarFunction([f](double x, int order) { return f.jet(x, order); },
                          {Interval{floor - ramp, energy_}, Interval{floor - ramp, energy_}},
                          "cutoff_compact");
  }

 private:
  double energy_;
  double width_;
  ScalarFunction fn_;
};

inline SmoothCutoff build_cutoff(double energy, double width) { return SmoothCutoff(energy, width); }

/// f~(x+iy) = eta(y/<x>) sum_{k<=nu+1} f^(k)(x) (iy)^k / k!
class AlmostAnalyticExtension {
 public:
  AlmostAnalyticExtension(ScalarFunction f, int nu)
      : f_(std::move(f)), nu_(nu), eta_(functions::smooth_drop(1.0, 2.0)) {
    require(nu >= 0, "almost analytic extension: nu must be >= 0");
  }

  const ScalarFunction& base() const { return f_; }
  int nu() const { return nu_; }

  /// eta on |mu|, 1 for |mu| <= 1 and 0 for |mu| >= 2.
  double eta(double mu) const {
    const double a = std::abs(mu);
    if (a <= 1.0) return 1.0;
    if (a >= 2.0) return 0.0;
    return eta_(a);
  }
  double eta_derivative(double mu) const {
    const double a = std::abs(mu);
    if (a <= 1.0 || a >= 2.0) return 0.0;
    const double d = eta_.derivative(a, 1);
    return mu < 0 ? -d : d;
  }

  Complex value(double x, double y) const {
    const double bx = std::sqrt(1.0 + x * x);
    const double e = eta(y / bx);
    if (e == 0.0) return 0.0;
    return e * taylor_sum(f_.jet(x, nu_ + 1), y, nu_ + 1);
  }

  /// d/dz-bar = (d/dx + i d/dy) / 2 applied to the extension.
  Complex dbar(double x, double y) const { return dbar_from_jet(f_.jet(x, nu_ + 2), x, y); }

  /// Density of the measure d f~ with respect to dx dy, normalized so that
  /// the resolvent representation reproduces f exactly.
  Complex measure_density(double x, double y) const { return -dbar(x, y) / std::numbers::pi; }

  /// dbar given the jet of f at x to order nu + 2.
  Complex dbar_from_jet(const Jet& j, double x, double y) const {
    const double mu = y / std::sqrt(1.0 + x * x);
    if (std::abs(mu) >= 2.0) return 0.0;
    return dbar_with_cutoff(j, x, y, eta(mu), eta_derivative(mu));
  }

  /// dbar with eta(y/<x>) and its derivative supplied by the caller.
  Complex dbar_with_cutoff(const Jet& j, double x, double y, double e, double de) const {
    const double bx = std::sqrt(1.0 + x * x);
    const Complex iy(0.0, y);
    Complex out = 0.0;
    if (e != 0.0) {
      Complex power = iy;
      for (int k = 0; k < nu_; ++k) power *= iy;
      out += 0.5 * e * (nu_ + 2.0) * j[nu_ + 2] * power;
    }
    if (de != 0.0) {
      const Complex chain(-y * x / (bx * bx * bx), 1.0 / bx);
      out += 0.5 * de * chain * taylor_sum(j, y, nu_ + 1);
    }
    return out;
  }

 private:
  // sum_{k<=kmax} c_k (iy)^k with c_k = f^(k)/k!.
  static Complex taylor_sum(const Jet& j, double y, int kmax) {
    Complex acc = 0.0;
    for (int k = kmax; k >= 0; --k) acc = acc * Complex(0.0, y) + j[k];
    return acc;
  }

  ScalarFunction f_;
  int nu_;
  ScalarFunction eta_;
};

inline AlmostAnalyticExtension almost_analytic_extension(const ScalarFunction& f, int nu) {
  return AlmostAnalyticExtension(f, nu);
}

struct WeightedNormReport {
  std::string function;
  int p = 0;
  int nu = 0;
  double value = 0.0;
  bool finite = true;
};

namespace detail {

// Sum over m <= nu+2 of <x>^{m-p-1} |f^(m)(x)|.
inline double weighted_integrand(const ScalarFunction& f, double x, int p, int nu) {
  const std::vector<double> d = f.derivatives(x, nu + 2);
  const double bx = std::sqrt(1.0 + x * x);
  double acc = 0.0;
  for (int m = 0; m <= nu + 2; ++m) {
    const double dm = d[static_cast<std::size_t>(m)];
    if (dm != 0.0) acc += std::pow(bx, m - p - 1) * std::abs(dm);
  }
  return acc;
}

// Local power-law exponent of |h| along x = start * 2^k; a tail is declared
// non-integrable when the decay is not faster than 1/x.
inline bool tail_integrable(const std::function<double(double)>& h, double start, double direction) {
  const double base = std::max(1.0, std::abs(start));
  double prev = std::abs(h(direction * base * 1024.0));
  double worst = kInf;
  for (int k = 11; k <= 18; ++k) {
    const double cur = std::abs(h(direction * base * std::ldexp(1.0, k)));
    if (prev == 0.0 && cur == 0.0) return true;
    if (prev > 0.0 && cur > 0.0) worst = std::min(worst, std::log2(prev / cur));
    else if (cur > 0.0) worst = -kInf;
    prev = cur;
  }
  if (prev == 0.0) return true;
  return worst > 1.0 + 1e-3;
}

// Region where f or f' can be nonzero.
inline Interval active_region(const ScalarFunction& f) {
  return f.support().value.hull(f.support().derivative);
}

}  // namespace detail

/// N(f, p) = sum_{m=0}^{nu+2} int <x>^{m-p-1} |f^(m)(x)| dx, or +inf when a tail
/// fails the integrability test.
inline WeightedNormReport weighted_norm(const ScalarFunction& f, int p, int nu, double rel_tol = 1e-9) {
  require(p >= 0, "weighted_norm: p must be >= 0");
  require(nu >= 0, "weighted_norm: nu must be >= 0");
  WeightedNormReport rep{f.name(), p, nu, 0.0, true};
  const Interval region = detail::active_region(f);
  if (region.is_empty()) return rep;
  auto h = [&](double x) { return detail::weighted_integrand(f, x, p, nu); };

  const Interval& ds = f.support().derivative;
  double lo = std::isfinite(region.lo) ? region.lo : (ds.bounded() ? ds.lo : -1.0);
  double hi = std::isfinite(region.hi) ? region.hi : (ds.bounded() ? ds.hi : 1.0);
  if (!std::isfinite(region.lo) && !detail::tail_integrable(h, lo, -1.0)) return {f.name(), p, nu, kInf, false};
  if (!std::isfinite(region.hi) && !detail::tail_integrable(h, hi, 1.0)) return {f.name(), p, nu, kInf, false};

  // Split the core at the derivative support edges so kinks sit on breakpoints.
  std::vector<double> breaks{lo, hi};
  if (!ds.is_empty()) {
    if (ds.lo > lo && ds.lo < hi) breaks.push_back(ds.lo);
    if (ds.hi > lo && ds.hi < hi) breaks.push_back(ds.hi);
  }
  std::sort(breaks.begin(), breaks.end());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const int pieces = 16;
    for (int k = 0; k < pieces; ++k) {
      const double a = breaks[i] + (breaks[i + 1] - breaks[i]) * k / pieces;
      const double b = breaks[i] + (breaks[i + 1] - breaks[i]) * (k + 1) / pieces;
      total += quad::adaptive(h, a, b, rel_tol, 1e-15);
    }
  }
  if (!std::isfinite(region.hi)) total += quad::adaptive_half_line(h, hi, 1e-10);
  if (!std::isfinite(region.lo))
    total += quad::adaptive_half_line([&](double x) { return h(-x); }, -lo, 1e-10);
  rep.value = total;
  return rep;
}

/// Resolution of the contour quadrature. Each refinement level doubles the
/// x panels and the panels across the eta transition.
struct HsQuadrature {
  int x_panels = 192;
  int x_order = 10;
  int mu_order = 10;
  int eta_panels = 16;
  double y_min = 1e-6;
  int tail_octaves = 48;
  int tail_panels = 2;  // panels per tail octave
  int threads = 1;

  HsQuadrature refined(int level) const {
    HsQuadrature q = *this;
    for (int i = 0; i < level; ++i) {
      q.x_panels *= 2;
      q.eta_panels *= 2;
      q.tail_panels *= 2;
    }
    return q;
  }
};

namespace detail {

struct HsNode {
  double x;
  double y;
  Complex weight;  // measure density times quadrature weight
};

// x breakpoints: uniform panels over the bounded core plus geometric panels
// on tails where f is a nonzero constant.
inline std::vector<double> hs_x_breaks(const ScalarFunction& f, const HsQuadrature& q, bool& left_tail,
                                       bool& right_tail) {
  const Interval region = active_region(f);
  const Interval& ds = f.support().derivative;
  if (region.is_empty()) return {};
  require(ds.is_empty() || ds.bounded(),
          "contour quadrature: derivative support of '" + f.name() + "' must be bounded");
  double lo = std::isfinite(region.lo) ? region.lo : ds.lo;
  double hi = std::isfinite(region.hi) ? region.hi : ds.hi;
  if (ds.is_empty()) lo = hi = 0.0;
  left_tail = !std::isfinite(region.lo);
  right_tail = !std::isfinite(region.hi);
  std::vector<double> core = quad::uniform_breaks(lo, hi, hi > lo ? q.x_panels : 1);
  std::vector<double> out;
  // Offsets scale * (2^u - 1) for u on a grid of tail_panels steps per octave.
  const double scale = std::max(1.0, hi - lo);
  const int steps = q.tail_octaves * std::max(1, q.tail_panels);
  auto offset = [&](int i) { return scale * (std::exp2(static_cast<double>(i) / std::max(1, q.tail_panels)) - 1.0); };
  if (left_tail)
    for (int i = steps; i >= 1; --i) out.push_back(lo - offset(i));
  out.insert(out.end(), core.begin(), core.end());
  if (right_tail)
    for (int i = 1; i <= steps; ++i) out.push_back(hi + offset(i));
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// mu = y/<x> panels: dyadic on (mu_min, 1] where eta = 1, uniform on [1, 2].
inline std::vector<double> hs_mu_breaks(double mu_min, int eta_panels) {
  std::vector<double> out;
  double m = 1.0;
  while (m > mu_min) {
    out.push_back(m);
    m *= 0.5;
  }
  out.push_back(mu_min);
  std::reverse(out.begin(), out.end());
  for (int k = 1; k <= eta_panels; ++k) out.push_back(1.0 + static_cast<double>(k) / eta_panels);
  return out;
}

// Quadrature nodes over the upper half plane for the measure d f~.
inline std::vector<HsNode> hs_nodes(const AlmostAnalyticExtension& ext, const HsQuadrature& q) {
  bool lt = false, rt = false;
  const std::vector<double> xb = hs_x_breaks(ext.base(), q, lt, rt);
  std::vector<HsNode> nodes;
  if (xb.size() < 2) return nodes;
  const quad::Rule& rx = quad::gauss_legendre(q.x_order);
  const quad::Rule& rm = quad::gauss_legendre(q.mu_order);
  const int nu = ext.nu();
  // The transition panels of mu are the same for every x, so eta is tabulated once.
  const std::size_t nm = rm.nodes.size();
  const std::vector<double> tb = hs_mu_breaks(0.5, q.eta_panels);
  const std::size_t first_transition = tb.size() - 1 - static_cast<std::size_t>(q.eta_panels);
  std::vector<double> eta_tab, deta_tab;
  for (std::size_t pm = first_transition; pm + 1 < tb.size(); ++pm)
    for (std::size_t im = 0; im < nm; ++im) {
      const double mu = 0.5 * (tb[pm] + tb[pm + 1]) + 0.5 * (tb[pm + 1] - tb[pm]) * rm.nodes[im];
      eta_tab.push_back(ext.eta(mu));
      deta_tab.push_back(ext.eta_derivative(mu));
    }
  for (std::size_t i = 0; i + 1 < xb.size(); ++i) {
    const double a = xb[i], b = xb[i + 1];
    const double cx = 0.5 * (a + b), hx = 0.5 * (b - a);
    for (std::size_t ix = 0; ix < rx.nodes.size(); ++ix) {
      const double x = cx + hx * rx.nodes[ix];
      const double wx = hx * rx.weights[ix];
      const double bx = std::sqrt(1.0 + x * x);
      const Jet j = ext.base().jet(x, nu + 2);
      const std::vector<double> mb = hs_mu_breaks(std::min(0.5, q.y_min / bx), q.eta_panels);
      const std::size_t transition = mb.size() - 1 - static_cast<std::size_t>(q.eta_panels);
      for (std::size_t pm = 0; pm + 1 < mb.size(); ++pm) {
        const double ma = mb[pm], mbnd = mb[pm + 1];
        const double cm = 0.5 * (ma + mbnd), hm = 0.5 * (mbnd - ma);
        for (std::size_t im = 0; im < nm; ++im) {
          const double mu = cm + hm * rm.nodes[im];
          const double y = bx * mu;
          const std::size_t t = (pm - transition) * nm + im;
          const Complex d = pm < transition ? ext.dbar_with_cutoff(j, x, y, 1.0, 0.0)
                                            : ext.dbar_with_cutoff(j, x, y, eta_tab[t], deta_tab[t]);
          if (d == 0.0) continue;
          const double w = wx * hm * rm.weights[im] * bx;  // dy = <x> dmu
          nodes.push_back({x, y, -d / std::numbers::pi * w});
        }
      }
    }
  }
  return nodes;
}

}  // namespace detail

/// int |d f~(z)| |Im z|^{-(p+1)} over the plane. Returns +inf when the weighted
/// norm N(f, p) diverges.
inline double remainder_integral(const AlmostAnalyticExtension& ext, int p, const HsQuadrature& q = {}) {
  require(p >= 0, "remainder_integral: p must be >= 0");
  if (p > ext.nu())
    throw InvalidArgument("remainder_integral: p = " + std::to_string(p) + " exceeds nu = " +
                          std::to_string(ext.nu()));
  if (!weighted_norm(ext.base(), p, ext.nu(), 1e-6).finite) return kInf;
  bool lt = false, rt = false;
  const std::vector<double> xb = detail::hs_x_breaks(ext.base(), q, lt, rt);
  if (xb.size() < 2) return 0.0;
  const quad::Rule& rx = quad::gauss_legendre(q.x_order);
  const quad::Rule& rm = quad::gauss_legendre(q.mu_order);
  const int nu = ext.nu();
  double fact = 1.0;
  for (int k = 2; k <= nu + 1; ++k) fact *= k;
  std::vector<double> terms;
  for (std::size_t i = 0; i + 1 < xb.size(); ++i) {
    const double a = xb[i], b = xb[i + 1];
    const double cx = 0.5 * (a + b), hx = 0.5 * (b - a);
    for (std::size_t ix = 0; ix < rx.nodes.size(); ++ix) {
      const double x = cx + hx * rx.nodes[ix];
      const double wx = hx * rx.weights[ix];
      const double bx = std::sqrt(1.0 + x * x);
      const Jet j = ext.base().jet(x, nu + 2);
      // eta = 1 on 0 < y < <x>: only the top Taylor term survives, integrated exactly.
      const double top = std::abs(j.derivative(nu + 2));
      double inner = 0.5 * top / fact * std::pow(bx, nu - p + 1) / (nu - p + 1);
      // <x> < y < 2<x>: transition of eta.
      const double hm = 0.5 / q.eta_panels;
      for (int pm = 0; pm < q.eta_panels; ++pm) {
        const double cm = 1.0 + (2.0 * pm + 1.0) * hm;
        for (std::size_t im = 0; im < rm.nodes.size(); ++im) {
          const double y = bx * (cm + hm * rm.nodes[im]);
          inner += hm * rm.weights[im] * bx * std::abs(ext.dbar_from_jet(j, x, y)) * std::pow(y, -(p + 1));
        }
      }
      terms.push_back(wx * inner);
    }
  }
  // Both half planes contribute equally; 1/pi from the measure normalization.
  return 2.0 * quad::pairwise_sum(terms) / std::numbers::pi;
}

/// f^(p)(A)/p! through int d f~(z) (z - A)^{-(p+1)}, with resolvents taken in
/// the eigenbasis of A.
inline HermitianOperator hs_apply(const AlmostAnalyticExtension& ext, const SpectralDecomposition& dec, int p,
                                  const HsQuadrature& q = {}) {
  require(p >= 0, "hs_apply: p must be >= 0");
  if (p > ext.nu())
    throw InvalidArgument("hs_apply: p = " + std::to_string(p) + " exceeds nu = " + std::to_string(ext.nu()));
  if (!weighted_norm(ext.base(), p, ext.nu(), 1e-6).finite)
    throw InvalidArgument("hs_apply: weighted norm of '" + ext.base().name() + "' diverges for p = " +
                          std::to_string(p));
  const std::vector<detail::HsNode> nodes = detail::hs_nodes(ext, q);
  RealVector values = RealVector::Zero(dec.dim());
  parallel_for(static_cast<std::size_t>(dec.dim()), q.threads, [&](std::size_t idx) {
    const double lambda = dec.eigenvalues(static_cast<Eigen::Index>(idx));
    // Neumaier-compensated sum over the nodes.
    double sum = 0.0, carry = 0.0;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      // Explicit reciprocal; Im z >= y_min > 0 keeps it well scaled and it
      // avoids the library's guarded complex division in this hot loop.
      const double a = nodes[k].x - lambda, b = nodes[k].y, inv = 1.0 / (a * a + b * b);
      const Complex r(a * inv, -b * inv);
      Complex rp = r;
      for (int e = 0; e < p; ++e) rp *= r;
      // The lower half plane contributes the complex conjugate.
      const double term = 2.0 * (nodes[k].weight * rp).real();
      const double next = sum + term;
      carry += std::abs(sum) >= std::abs(term) ? (sum - next) + term : (term - next) + sum;
      sum = next;
    }
    values(static_cast<Eigen::Index>(idx)) = sum + carry;
  });
  return HermitianOperator::symmetrized(dec.synthesize(values), "hs_apply");
}

}  // namespace lclab
