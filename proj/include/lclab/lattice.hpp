#pragma once

// Finite-difference Schroedinger operators -Laplacian + V on boxes in one
// and two dimensions with Dirichlet boundary conditions.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "lclab/errors.hpp"
#include "lclab/linalg.hpp"

namespace lclab {

enum class Boundary { Dirichlet };

struct GridLimits {
  int min_points = 8;
  int max_sites_1d = 256;
  int max_sites_2d = 32 * 32;
};

/// Uniform grid on the box [-L, L]^d; points are symmetric about the origin.
class Grid {
 public:
  Grid(int dimension, double halfwidth, int points, GridLimits limits = {})
      : dim_(dimension), halfwidth_(halfwidth), n_(points) {
    require(dim_ == 1 || dim_ == 2, "Grid: dimension must be 1 or 2");
    require(halfwidth_ > 0.0, "Grid: halfwidth must be positive");
    require(n_ >= limits.min_points, "Grid: need at least " + std::to_string(limits.min_points) +
                                         " points per axis");
    const int cap = dim_ == 1 ? limits.max_sites_1d : limits.max_sites_2d;
    require(sites() <= cap, "Grid: " + std::to_string(sites()) + " sites exceed the cap of " +
                                std::to_string(cap));
    h_ = 2.0 * halfwidth_ / (n_ - 1);
  }

  int dimension() const { return dim_; }
  double halfwidth() const { return halfwidth_; }
  int points_per_axis() const { return n_; }
  double spacing() const { return h_; }
  Boundary boundary() const { return Boundary::Dirichlet; }
  int sites() const { return dim_ == 1 ? n_ : n_ * n_; }

  double axis_coordinate(int i) const { return -halfwidth_ + i * h_; }

  /// Site index -> coordinates (second entry is 0 in 1D).
  std::array<double, 2> point(int site) const {
    if (dim_ == 1) return {axis_coordinate(site), 0.0};
    return {axis_coordinate(site % n_), axis_coordinate(site / n_)};
  }

  int index(int ix, int iy = 0) const { return dim_ == 1 ? ix : ix + n_ * iy; }

  std::vector<std::array<double, 2>> points() const {
    std::vector<std::array<double, 2>> out(static_cast<std::size_t>(sites()));
    for (int s = 0; s < sites(); ++s) out[static_cast<std::size_t>(s)] = point(s);
    return out;
  }

  /// Distance from a site to the nearest face of the box.
  double distance_to_boundary(int site) const {
    auto p = point(site);
    double d = halfwidth_ - std::abs(p[0]);
    if (dim_ == 2) d = std::min(d, halfwidth_ - std::abs(p[1]));
    return d;
  }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.dim_ == b.dim_ && a.halfwidth_ == b.halfwidth_ && a.n_ == b.n_;
  }

 private:
  int dim_;
  double halfwidth_;
  int n_;
  double h_ = 0.0;
};

inline double japanese_bracket(double r) { return std::sqrt(1.0 + r * r); }

enum class PotentialKind { zero, gaussian_well, power_decay };

inline std::string to_string(PotentialKind k) {
  switch (k) {
    case PotentialKind::zero: return "zero";
    case PotentialKind::gaussian_well: return "gaussian_well";
    case PotentialKind::power_decay: return "power_decay";
  }
  return "?";
}

inline PotentialKind potential_kind_from_string(const std::string& s) {
  if (s == "zero") return PotentialKind::zero;
  if (s == "gaussian_well") return PotentialKind::gaussian_well;
  if (s == "power_decay") return PotentialKind::power_decay;
  throw InvalidArgument("unknown potential kind '" + s + "'");
}

struct PotentialSpec {
  PotentialKind kind = PotentialKind::zero;
  double amplitude = 1.0;  // C
  double decay = 1.0;      // rho > 0, used by power_decay and by the decay check
  double width = 2.0;      // gaussian_well only
  std::array<double, 2> center{0.0, 0.0};
  /// Constant C for the decay check |d^a V| <= C <x>^{-|a|-rho}. When unset
  /// the check only measures the smallest admissible constant.
  std::optional<double> check_constant;
  int check_order = 2;

  /// Pointwise value of the continuum potential.
  double operator()(double x, double y = 0.0) const {
    const double dx = x - center[0], dy = y - center[1];
    const double r2 = dx * dx + dy * dy;
    switch (kind) {
      case PotentialKind::zero: return 0.0;
      case PotentialKind::gaussian_well: return -amplitude * std::exp(-r2 / (width * width));
      case PotentialKind::power_decay: return amplitude * std::pow(1.0 + r2, -0.5 * decay);
    }
    return 0.0;
  }
};

/// Outcome of the sampled decay check on a grid.
struct DecayCheckReport {
  bool passed = true;
  double rho = 0.0;
  int order = 0;
  /// Smallest C with |d^a V(x_i)| <= C <x_i>^{-|a|-rho} at all checked sites.
  double required_constant = 0.0;
  std::optional<double> declared_constant;
  /// required constant restricted to each derivative order 0..order.
  std::vector<double> per_order;
};

namespace detail {

// Order-2 central difference of the given derivative order along one axis.
inline std::vector<double> central_derivative(const std::vector<double>& v, int n, double h, int k,
                                              int stride, int count) {
  std::vector<double> cur = v;
  std::vector<bool> valid(v.size(), true);
  auto step = [&](int which) {
    std::vector<double> nxt(v.size(), 0.0);
    std::vector<bool> nv(v.size(), false);
    for (int s = 0; s < count; ++s) {
      const int pos = (s / stride) % n;
      if (pos == 0 || pos == n - 1) continue;
      const auto i = static_cast<std::size_t>(s);
      const auto ip = static_cast<std::size_t>(s + stride), im = static_cast<std::size_t>(s - stride);
      if (!(valid[ip] && valid[im] && valid[i])) continue;
      nxt[i] = which == 1 ? (cur[ip] - cur[im]) / (2.0 * h) : (cur[ip] - 2.0 * cur[i] + cur[im]) / (h * h);
      nv[i] = true;
    }
    cur.swap(nxt);
    valid.swap(nv);
  };
  int remaining = k;
  if (remaining % 2 == 1) {
    step(1);
    --remaining;
  }
  while (remaining > 0) {
    step(2);
    remaining -= 2;
  }
  for (std::size_t i = 0; i < cur.size(); ++i)
    if (!valid[i]) cur[i] = std::numeric_limits<double>::quiet_NaN();
  return cur;
}

}  // namespace detail

/// Sampled decay check of a potential on the grid using order-2 central
/// differences for every multi-index with |alpha| <= order.
inline DecayCheckReport check_decay(const Grid& grid, const std::vector<double>& values, double rho,
                                    int order, std::optional<double> constant) {
  require(rho > 0.0, "decay check: rho must be positive");
  require(order >= 0, "decay check: order must be nonnegative");
  DecayCheckReport rep;
  rep.rho = rho;
  rep.order = order;
  rep.declared_constant = constant;
  rep.per_order.assign(static_cast<std::size_t>(order) + 1, 0.0);
  const int n = grid.points_per_axis();
  const int count = grid.sites();
  const double h = grid.spacing();
  for (int a1 = 0; a1 <= order; ++a1) {
    for (int a2 = 0; a2 + a1 <= order; ++a2) {
      if (grid.dimension() == 1 && a2 > 0) continue;
      std::vector<double> d = detail::central_derivative(values, n, h, a1, 1, count);
      if (grid.dimension() == 2) d = detail::central_derivative(d, n, h, a2, n, count);
      const int total = a1 + a2;
      for (int s = 0; s < count; ++s) {
        const double dv = d[static_cast<std::size_t>(s)];
        if (std::isnan(dv)) continue;
        auto p = grid.point(s);
        const double w = std::pow(japanese_bracket(std::hypot(p[0], p[1])), total + rho);
        const double need = w * std::abs(dv);
        rep.per_order[static_cast<std::size_t>(total)] =
            std::max(rep.per_order[static_cast<std::size_t>(total)], need);
        rep.required_constant = std::max(rep.required_constant, need);
      }
    }
  }
  if (constant) rep.passed = rep.required_constant <= *constant * (1.0 + 1e-12);
  return rep;
}

/// Standard (2d+1)-point Dirichlet Laplacian stencil scaled by 1/h^2. The
/// result is the positive operator -Laplacian.
inline HermitianOperator build_laplacian(const Grid& grid) {
  const int n = grid.points_per_axis();
  const int count = grid.sites();
  const double inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
  Matrix m = Matrix::Zero(count, count);
  for (int s = 0; s < count; ++s) {
    m(s, s) = 2.0 * grid.dimension() * inv_h2;
    const int ix = grid.dimension() == 1 ? s : s % n;
    if (ix > 0) m(s, s - 1) = -inv_h2;
    if (ix < n - 1) m(s, s + 1) = -inv_h2;
    if (grid.dimension() == 2) {
      const int iy = s / n;
      if (iy > 0) m(s, s - n) = -inv_h2;
      if (iy < n - 1) m(s, s + n) = -inv_h2;
    }
  }
  return HermitianOperator(std::move(m), "laplacian");
}

struct SampledPotential {
  HermitianOperator op;
  std::vector<double> values;
  DecayCheckReport report;
};

/// Diagonal potential operator plus its decay report. Throws DecayViolation
/// when a declared check constant is exceeded.
inline SampledPotential sample_potential(const Grid& grid, const PotentialSpec& spec) {
  require(spec.decay > 0.0, "sample_potential: decay rho must be positive");
  std::vector<double> values(static_cast<std::size_t>(grid.sites()));
  RealVector diag(grid.sites());
  for (int s = 0; s < grid.sites(); ++s) {
    auto p = grid.point(s);
    values[static_cast<std::size_t>(s)] = spec(p[0], p[1]);
    diag(s) = values[static_cast<std::size_t>(s)];
  }
  DecayCheckReport rep = check_decay(grid, values, spec.decay, spec.check_order, spec.check_constant);
  if (!rep.passed)
    throw DecayViolation("potential '" + to_string(spec.kind) + "' violates the decay bound: needs C >= " +
                         std::to_string(rep.required_constant) + " but C = " +
                         std::to_string(*spec.check_constant));
  return {HermitianOperator::diagonal(diag, "potential"), std::move(values), std::move(rep)};
}

inline HermitianOperator build_hamiltonian(const Grid& grid, const PotentialSpec& spec) {
  SampledPotential v = sample_potential(grid, spec);
  return HermitianOperator(build_laplacian(grid).matrix() + v.op.matrix(), "hamiltonian");
}

}  // namespace lclab
