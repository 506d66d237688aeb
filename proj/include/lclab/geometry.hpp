#pragma once

// Regions, smoothed distance functions and the ASTLO cutoff class.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lclab/errors.hpp"
#include "lclab/lattice.hpp"
#include "lclab/linalg.hpp"
#include "lclab/quadrature.hpp"
#include "lclab/scalar_function.hpp"
#include "lclab/spectral.hpp"

namespace lclab {

struct Box {
  std::array<double, 2> lo{0.0, 0.0};
  std::array<double, 2> hi{0.0, 0.0};
};

/// Finite union of closed intervals (1D) or axis-aligned boxes (2D).
class RegionSpec {
 public:
  static RegionSpec intervals(const std::vector<std::pair<double, double>>& ivs) {
    std::vector<Box> boxes;
    for (const auto& [a, b] : ivs) boxes.push_back(Box{{a, 0.0}, {b, 0.0}});
    return RegionSpec(1, std::move(boxes));
  }
  static RegionSpec boxes(std::vector<Box> bs) { return RegionSpec(2, std::move(bs)); }

  int dimension() const { return dim_; }
  const std::vector<Box>& parts() const { return boxes_; }

  bool contains(double x, double y = 0.0) const { return distance(x, y) == 0.0; }

  /// Euclidean distance to the region.
  double distance(double x, double y = 0.0) const {
    double best = kInf;
    for (const Box& b : boxes_) {
      const double dx = std::max({0.0, b.lo[0] - x, x - b.hi[0]});
      const double dy = dim_ == 1 ? 0.0 : std::max({0.0, b.lo[1] - y, y - b.hi[1]});
      best = std::min(best, std::hypot(dx, dy));
    }
    return best;
  }

  /// Throws unless every part lies inside the grid box.
  void check_inside(const Grid& grid) const {
    require(grid.dimension() == dim_, "RegionSpec: dimension does not match the grid");
    const double lim = grid.halfwidth();
    for (const Box& b : boxes_)
      for (int a = 0; a < dim_; ++a)
        require(b.lo[a] >= -lim && b.hi[a] <= lim, "RegionSpec: region leaves the grid box");
  }

  /// Coordinates along an axis where the distance function can fail to be
  /// smooth: part edges and midpoints of gaps between parts.
  std::vector<double> kinks(int axis) const {
    std::vector<std::pair<double, double>> spans;
    for (const Box& b : boxes_) spans.emplace_back(b.lo[axis], b.hi[axis]);
    std::sort(spans.begin(), spans.end());
    std::vector<double> out;
    for (std::size_t i = 0; i < spans.size(); ++i) {
      out.push_back(spans[i].first);
      out.push_back(spans[i].second);
      if (i + 1 < spans.size() && spans[i + 1].first > spans[i].second)
        out.push_back(0.5 * (spans[i].second + spans[i + 1].first));
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  /// 0/1 diagonal of the complement indicator on the grid.
  RealVector complement_mask(const Grid& grid) const {
    RealVector m(grid.sites());
    for (int s = 0; s < grid.sites(); ++s) {
      auto p = grid.point(s);
      m(s) = contains(p[0], p[1]) ? 0.0 : 1.0;
    }
    return m;
  }

 private:
  RegionSpec(int dim, std::vector<Box> boxes) : dim_(dim), boxes_(std::move(boxes)) {
    require(!boxes_.empty(), "RegionSpec: region must be nonempty");
    for (const Box& b : boxes_)
      for (int a = 0; a < dim_; ++a) require(b.hi[a] >= b.lo[a], "RegionSpec: part with hi < lo");
  }

  int dim_;
  std::vector<Box> boxes_;
};

struct DistanceBounds {
  double c1 = 0.0;  // min of mollified/true distance where the latter is >= eps0/4
  double c2 = 0.0;  // max of the same ratio
  std::vector<double> derivative_constants;  // C_k, k = 0..order
  int samples = 0;
};

namespace detail {

inline double bump_mass() {
  static const double z = [] {
    std::vector<double> br = quad::uniform_breaks(-1.0, 1.0, 16);
    return quad::composite<double>(
        [](double u) { return unit_bump(Jet(u, 0)).value(); }, std::span<const double>(br), 32);
  }();
  return z;
}

// Jet in t of the normalized kernel r^-1 phi((u + t) / r).
inline Jet kernel_jet(double u, double r, int order) {
  return unit_bump(Jet::variable(u, order) / r) / (r * bump_mass());
}

}  // namespace detail

/// d_X = f(delta_X) where delta_X is dist_X mollified at radius eps0/4 and
/// f(t) = (t - eps0) S((t - eps0)/eps0) with S a smooth unit step. Hence
/// d_X = 0 wherever delta_X <= eps0 and d_X = delta_X - eps0 once
/// delta_X >= 2 eps0.
class SmoothedDistance {
 public:
  SmoothedDistance(RegionSpec region, double eps0) : region_(std::move(region)), eps0_(eps0) {
    require(eps0 > 0.0, "smoothed_distance: eps0 must be positive");
    kinks_x_ = region_.kinks(0);
    if (region_.dimension() == 2) kinks_y_ = region_.kinks(1);
  }

  const RegionSpec& region() const { return region_; }
  double eps0() const { return eps0_; }
  double mollifier_radius() const { return 0.25 * eps0_; }
  int dimension() const { return region_.dimension(); }

  /// Mollified distance along the line p + t*e as a jet in t.
  Jet delta_jet(double x, double y, int order, std::array<double, 2> e = {1.0, 0.0}) const {
    return dimension() == 1 ? delta_jet_1d(x, order) : delta_jet_2d(x, y, e, order);
  }

  /// d_X along p + t*e as a jet in t.
  Jet jet(double x, double y, int order, std::array<double, 2> e = {1.0, 0.0}) const {
    const Jet d = delta_jet(x, y, order, e);
    const Jet shifted = d - eps0_;
    if (shifted[0] <= 0.0) return Jet::zero(order);
    return shifted * detail::unit_step(shifted / eps0_);
  }

  double delta(double x, double y = 0.0) const { return delta_jet(x, y, 0).value(); }
  double operator()(double x, double y = 0.0) const { return jet(x, y, 0).value(); }

  /// 1D view as a ScalarFunction with exact derivatives.
  ScalarFunction as_function() const {
    require(dimension() == 1, "SmoothedDistance::as_function is 1D only");
    SmoothedDistance self = *this;
    return ScalarFunction([self](double x, int order) { return self.jet(x, 0.0, order); },
                          {Interval::whole(), Interval::whole()}, "smoothed_distance");
  }

  /// Samples the sandwich constants and the derivative constants
  /// C_k = max |d^k d_X| dist^{k-1} (directional in 2D).
  DistanceBounds measure_bounds(const std::vector<std::array<double, 2>>& points, int order) const {
    DistanceBounds b;
    b.c1 = kInf;
    b.c2 = 0.0;
    b.derivative_constants.assign(static_cast<std::size_t>(order) + 1, 0.0);
    std::vector<std::array<double, 2>> dirs{{1.0, 0.0}};
    if (dimension() == 2) {
      const double s = std::sqrt(0.5);
      dirs = {{1.0, 0.0}, {0.0, 1.0}, {s, s}, {s, -s}};
    }
    for (const auto& p : points) {
      const double dist = region_.distance(p[0], p[1]);
      if (dist >= mollifier_radius()) {
        const double ratio = delta(p[0], p[1]) / dist;
        b.c1 = std::min(b.c1, ratio);
        b.c2 = std::max(b.c2, ratio);
      }
      for (const auto& e : dirs) {
        const Jet j = jet(p[0], p[1], order, e);
        const std::vector<double> d = j.derivatives();
        for (int k = 0; k <= order; ++k) {
          const double dk = std::abs(d[static_cast<std::size_t>(k)]);
          if (dk == 0.0) continue;
          const double w = std::pow(dist, k - 1);
          b.derivative_constants[static_cast<std::size_t>(k)] =
              std::max(b.derivative_constants[static_cast<std::size_t>(k)], dk * w);
        }
      }
    }
    b.samples = static_cast<int>(points.size());
    if (!std::isfinite(b.c1)) b.c1 = 0.0;
    return b;
  }

 private:
  Jet delta_jet_1d(double x, int order) const {
    const double r = mollifier_radius();
    std::vector<double> br{x - r};
    for (double k : kinks_x_)
      if (k > x - r && k < x + r) br.push_back(k);
    br.push_back(x + r);
    if (br.size() == 2) {
      // dist is affine on the kernel support, which the symmetric kernel preserves.
      const double h = 1e-3 * r;
      Jet out(region_.distance(x), order);
      if (order >= 1) out[1] = (region_.distance(x + h) - region_.distance(x - h)) / (2.0 * h);
      return out;
    }
    const quad::Rule& rule = quad::gauss_legendre(kNodes);
    Jet acc = Jet::zero(order);
    for (std::size_t i = 0; i + 1 < br.size(); ++i) {
      for (int half = 0; half < 2; ++half) {
        const double a = br[i] + 0.5 * half * (br[i + 1] - br[i]);
        const double b = a + 0.5 * (br[i + 1] - br[i]);
        const double c = 0.5 * (a + b), h = 0.5 * (b - a);
        for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
          const double yq = c + h * rule.nodes[q];
          const double dist = region_.distance(yq);
          if (dist == 0.0) continue;
          acc += detail::kernel_jet(x - yq, r, order) * (dist * h * rule.weights[q]);
        }
      }
    }
    return acc;
  }

  Jet delta_jet_2d(double x, double y, std::array<double, 2> e, int order) const {
    const double r = mollifier_radius();
    auto breaks = [&](double c, const std::vector<double>& ks) {
      std::vector<double> br{c - r};
      for (double k : ks)
        if (k > c - r && k < c + r) br.push_back(k);
      br.push_back(c + r);
      return br;
    };
    const std::vector<double> bx = breaks(x, kinks_x_);
    const std::vector<double> by = breaks(y, kinks_y_);
    const quad::Rule& rule = quad::gauss_legendre(kNodes2d);
    Jet acc = Jet::zero(order);
    for (std::size_t i = 0; i + 1 < bx.size(); ++i) {
      const double cx = 0.5 * (bx[i] + bx[i + 1]), hx = 0.5 * (bx[i + 1] - bx[i]);
      for (std::size_t j = 0; j + 1 < by.size(); ++j) {
        const double cy = 0.5 * (by[j] + by[j + 1]), hy = 0.5 * (by[j + 1] - by[j]);
        for (std::size_t qx = 0; qx < rule.nodes.size(); ++qx) {
          const double ux = cx + hx * rule.nodes[qx];
          const Jet kx = detail::kernel_jet(x - ux, r, order);
          for (std::size_t qy = 0; qy < rule.nodes.size(); ++qy) {
            const double uy = cy + hy * rule.nodes[qy];
            const double dist = region_.distance(ux, uy);
            if (dist == 0.0) continue;
            // Kernel at (x,y) + t e: scale each factor's jet variable by e.
            const Jet ky = detail::kernel_jet(y - uy, r, order);
            acc += scale_jet(kx, e[0]) * scale_jet(ky, e[1]) *
                   (dist * hx * hy * rule.weights[qx] * rule.weights[qy]);
          }
        }
      }
    }
    return acc;
  }

  // g(t) -> g(a t) on normalized coefficients.
  static Jet scale_jet(Jet j, double a) {
    double f = 1.0;
    for (int k = 1; k <= j.order(); ++k) {
      f *= a;
      j[k] *= f;
    }
    return j;
  }

  static constexpr int kNodes = 20;
  static constexpr int kNodes2d = 12;

  RegionSpec region_;
  double eps0_;
  std::vector<double> kinks_x_;
  std::vector<double> kinks_y_;
};

/// Builds d_X and verifies it on the supplied samples. When `limits` is given,
/// measured derivative constants above the limits raise ConstructionFailure.
inline std::pair<SmoothedDistance, DistanceBounds> smoothed_distance(
    const RegionSpec& region, double eps0, const std::vector<std::array<double, 2>>& samples, int order,
    const std::optional<std::vector<double>>& limits = std::nullopt) {
  SmoothedDistance d(region, eps0);
  DistanceBounds b = d.measure_bounds(samples, order);
  for (const auto& p : samples) {
    const double v = d(p[0], p[1]);
    if (v < 0.0) throw ConstructionFailure("smoothed_distance: negative value");
    if (region.contains(p[0], p[1]) && v != 0.0)
      throw ConstructionFailure("smoothed_distance: nonzero on the region");
  }
  if (limits) {
    for (std::size_t k = 0; k < limits->size() && k < b.derivative_constants.size(); ++k)
      if (b.derivative_constants[k] > (*limits)[k])
        throw ConstructionFailure("smoothed_distance: derivative constant C_" + std::to_string(k) + " = " +
                                  std::to_string(b.derivative_constants[k]) + " exceeds limit " +
                                  std::to_string((*limits)[k]));
  }
  return {std::move(d), std::move(b)};
}

/// A member of the ASTLO class: chi >= 0 nondecreasing, chi' supported in
/// (0, delta/2), sqrt(chi') smooth.
class AstloFunction {
 public:
  AstloFunction(double delta, ScalarFunction chi, ScalarFunction root_derivative)
      : delta_(delta), chi_(std::move(chi)), u_(std::move(root_derivative)) {}

  double delta() const { return delta_; }
  const ScalarFunction& function() const { return chi_; }
  /// u = sqrt(chi').
  const ScalarFunction& root_derivative() const { return u_; }
  double operator()(double mu) const { return chi_(mu); }
  double derivative(double mu, int k) const { return chi_.derivative(mu, k); }

 private:
  double delta_;
  ScalarFunction chi_;
  ScalarFunction u_;
};

namespace detail {

// int_{a}^{x} w(s)^2 ds by composite Gauss-Legendre.
inline double integrate_square(const ScalarFunction& w, double a, double x) {
  if (x <= a) return 0.0;
  std::vector<double> br = quad::uniform_breaks(a, x, 8);
  return quad::composite<double>([&](double s) { const double v = w(s); return v * v; },
                                 std::span<const double>(br), 24);
}

}  // namespace detail

/// chi = normalized antiderivative of w^2, w a bump on [lo, hi] within (0, delta/2).
inline AstloFunction astlo_on(double delta, double lo, double hi) {
  require(delta > 0.0, "astlo: delta must be positive");
  require(lo >= 0.0 && hi <= 0.5 * delta && hi > lo, "astlo: bump window must lie in [0, delta/2]");
  const ScalarFunction w = functions::bump(0.5 * (lo + hi), 0.5 * (hi - lo));
  const double mass = detail::integrate_square(w, lo, hi);
  const double norm = std::sqrt(mass);
  ScalarFunction chi(
      [w, lo, hi, mass](double x, int order) {
        if (x <= lo) return Jet::zero(order);
        if (x >= hi) return Jet(1.0, order);
        Jet out(detail::integrate_square(w, lo, x) / mass, order);
        if (order >= 1) {
          const Jet wj = w.jet(x, order - 1);
          const Jet sq = wj * wj;
          // chi^(k) = (w^2)^(k-1) / mass
          for (int k = 1; k <= order; ++k) out[k] = sq[k - 1] / (k * mass);
        }
        return out;
      },
      {Interval{lo, kInf}, Interval{lo, hi}}, "astlo");
  ScalarFunction u = w.scaled(1.0 / norm);
  return AstloFunction(delta, std::move(chi), std::move(u));
}

/// Default ASTLO: bump window [delta/8, 3 delta/8].
inline AstloFunction astlo(double delta) { return astlo_on(delta, 0.125 * delta, 0.375 * delta); }

/// xi = (sqrt(xi_1) + ... + sqrt(xi_N))^2, which dominates xi_1 + ... + xi_N.
inline AstloFunction astlo_combine(const std::vector<AstloFunction>& parts) {
  require(!parts.empty(), "astlo_combine: need at least one function");
  const double delta = parts.front().delta();
  for (const auto& p : parts)
    require(p.delta() == delta, "astlo_combine: all inputs must share delta");
  if (parts.size() == 1) return parts.front();
  std::vector<ScalarFunction> fs;
  Interval vs = Interval::empty(), ds = Interval::empty();
  for (const auto& p : parts) {
    fs.push_back(p.function());
    vs = vs.hull(p.function().support().value);
    ds = ds.hull(p.function().support().derivative);
  }
  ScalarFunction xi(
      [fs](double x, int order) {
        Jet s = Jet::zero(order);
        for (const auto& f : fs) s += sqrt(f.jet(x, order));
        return s * s;
      },
      {vs, ds}, "astlo_combined");
  ScalarFunction u(
      [xi](double x, int order) {
        const Jet j = xi.jet(x, order + 1);
        Jet d(0.0, order);
        for (int k = 0; k <= order; ++k) d[k] = (k + 1) * j[k + 1];
        if (d[0] <= 0.0) return Jet::zero(order);
        return sqrt(d);
      },
      {ds, ds}, "astlo_combined_root");
  return AstloFunction(delta, std::move(xi), std::move(u));
}

inline HermitianOperator as_multiplication_operator(const ScalarFunction& f, const Grid& grid) {
  require(grid.dimension() == 1, "as_multiplication_operator: scalar function needs a 1D grid");
  RealVector d(grid.sites());
  for (int s = 0; s < grid.sites(); ++s) d(s) = f(grid.point(s)[0]);
  return HermitianOperator::diagonal(d, f.name());
}

template <class F>
HermitianOperator as_multiplication_operator_2d(F&& f, const Grid& grid, std::string label = {}) {
  RealVector d(grid.sites());
  for (int s = 0; s < grid.sites(); ++s) {
    auto p = grid.point(s);
    d(s) = f(p[0], p[1]);
  }
  return HermitianOperator::diagonal(d, std::move(label));
}

inline HermitianOperator as_multiplication_operator(const SmoothedDistance& d, const Grid& grid) {
  return as_multiplication_operator_2d(d, grid, "d_X");
}

/// g~ with support inside {g = 1} and chi~ with support inside {chi = 1}.
struct AuxCutoffPair {
  SmoothCutoff g_tilde;
  ScalarFunction chi_tilde;
};

/// g~ = cutoff at E - eps of the same width; chi~ rises across
/// [delta/2, delta] and equals 1 on [delta, inf).
inline AuxCutoffPair aux_cutoff_pair(const SmoothCutoff& g, double delta) {
  require(delta > 0.0, "aux_cutoff_pair: delta must be positive");
  return {SmoothCutoff(g.energy() - g.width(), g.width()), functions::smooth_step(0.5 * delta, delta)};
}

/// max |(1-g) g~| and max |(1-chi) chi~| over the samples.
inline std::pair<double, double> aux_orthogonality_defects(const SmoothCutoff& g, const AstloFunction& chi,
                                                           const AuxCutoffPair& pair,
                                                           const std::vector<double>& samples) {
  double dg = 0.0, dc = 0.0;
  for (double mu : samples) {
    dg = std::max(dg, std::abs((1.0 - g(mu)) * pair.g_tilde(mu)));
    dc = std::max(dc, std::abs((1.0 - chi(mu)) * pair.chi_tilde(mu)));
  }
  return {dg, dc};
}

/// True iff theta(d - c t) <= chi~((d - v t)/t) at every supplied distance
/// value d, where theta is the Heaviside step with theta(0) = 1.
inline bool heaviside_comparison_check(const ScalarFunction& chi_tilde, const std::vector<double>& distances,
                                       double c, double v, double t) {
  require(v < c, "heaviside_comparison_check: need v < c");
  require(t > 0.0, "heaviside_comparison_check: need t > 0");
  for (double d : distances) {
    const double lhs = d - c * t >= 0.0 ? 1.0 : 0.0;
    if (lhs > chi_tilde((d - v * t) / t) + 1e-12) return false;
  }
  return true;
}

inline bool heaviside_comparison_check(const ScalarFunction& chi_tilde, const SmoothedDistance& dist,
                                       const Grid& grid, double c, double v, double t) {
  std::vector<double> values(static_cast<std::size_t>(grid.sites()));
  for (int s = 0; s < grid.sites(); ++s) {
    auto p = grid.point(s);
    values[static_cast<std::size_t>(s)] = dist(p[0], p[1]);
  }
  return heaviside_comparison_check(chi_tilde, values, c, v, t);
}

}  // namespace lclab
