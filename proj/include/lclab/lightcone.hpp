#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lclab/commutators.hpp"
#include "lclab/errors.hpp"
#include "lclab/fit.hpp"
#include "lclab/geometry.hpp"
#include "lclab/lattice.hpp"
#include "lclab/lindblad.hpp"
#include "lclab/linalg.hpp"
#include "lclab/parallel.hpp"
#include "lclab/scalar_function.hpp"
#include "lclab/spectral.hpp"

namespace lclab {

/// d_X^E = g(H) d_X g(H).
struct LocalizedDistance {
  HermitianOperator op;
  HermitianOperator cutoff;
  HermitianOperator distance;
};

inline LocalizedDistance localized_distance(const HermitianOperator& g, const HermitianOperator& distance) {
  if (g.dim() != distance.dim()) throw DimensionMismatch("localized_distance: dimension mismatch");
  const Matrix m = g.matrix() * distance.matrix() * g.matrix();
  return {HermitianOperator::symmetrized(m, "d_X^E"), g, distance};
}

/// gamma = i[H, phi] + 1/2 sum_j (W_j*[phi, W_j] + [W_j*, phi] W_j), kappa = ||gamma||.
struct VelocityOperator {
  HermitianOperator gamma;
  double kappa = 0.0;
  double dual_residual = 0.0;  // max entry of |gamma - L'(phi)|
};

inline VelocityOperator velocity_operator(const VNLGenerator& gen, const HermitianOperator& phi) {
  if (phi.dim() != gen.dim()) throw DimensionMismatch("velocity_operator: dimension mismatch");
  const Matrix& p = phi.matrix();
  Matrix g = kI * commutator(gen.hamiltonian().matrix(), p);
  for (const auto& w : gen.jumps().operators())
    g += 0.5 * (w.adjoint() * commutator(p, w) + commutator(w.adjoint(), p) * w);
  VelocityOperator r;
  r.dual_residual = (g - dual_apply(gen, p)).cwiseAbs().maxCoeff();
  r.gamma = HermitianOperator::symmetrized(g, "gamma");
  r.kappa = r.gamma.norm();
  return r;
}

inline VelocityOperator velocity_operator(const VNLGenerator& gen, const LocalizedDistance& d) {
  return velocity_operator(gen, d.op);
}

/// Diagonal of g rho g: the energy-localized position density.
inline RealVector localized_density(const Matrix& rho, const HermitianOperator& g) {
  if (rho.rows() != g.dim()) throw DimensionMismatch("localized_density: dimension mismatch");
  const Matrix gr = g.matrix() * rho;
  RealVector out(g.dim());
  for (Eigen::Index i = 0; i < g.dim(); ++i)
    out(i) = gr.row(i).transpose().cwiseProduct(g.matrix().col(i)).sum().real();
  return out;
}

inline void check_mask(const RealVector& mask) {
  for (Eigen::Index i = 0; i < mask.size(); ++i)
    require(mask(i) == 0.0 || mask(i) == 1.0, "region mask entries must be 0 or 1");
}

inline double clamp_probability(double p) {
  if (p < 0.0 && p >= -1e-10) return 0.0;
  if (p > 1.0 && p <= 1.0 + 1e-10) return 1.0;
  return p;
}

/// Tr(g mask g rho).
inline double leakage_probability(const Matrix& rho, const HermitianOperator& g, const RealVector& mask) {
  if (mask.size() != g.dim()) throw DimensionMismatch("leakage_probability: mask size mismatch");
  check_mask(mask);
  return clamp_probability(localized_density(rho, g).dot(mask));
}

/// chi((phi - shift)/s) and chi'((phi - shift)/s).
struct AstloOperators {
  Matrix value;
  Matrix derivative;
};

inline AstloOperators astlo_operators(const SpectralDecomposition& phi, const ScalarFunction& chi, double shift,
                                      double s) {
  require(s > 0.0, "astlo_operators: s must be positive");
  RealVector v(phi.dim()), d(phi.dim());
  for (Eigen::Index i = 0; i < phi.dim(); ++i) {
    const Jet j = chi.jet((phi.eigenvalues(i) - shift) / s, 1);
    v(i) = j[0];
    d(i) = j[1];
  }
  return {phi.synthesize(v), phi.synthesize(d)};
}

/// D chi_ts = L'(chi_ts) - (v/s) chi'_ts with chi_ts = chi((phi - v t)/s).
inline Matrix heisenberg_derivative(const VNLGenerator& gen, const ScalarFunction& chi,
                                    const SpectralDecomposition& phi, double v, double t, double s) {
  const AstloOperators a = astlo_operators(phi, chi, v * t, s);
  return hermitian_part(dual_apply(gen, a.value) - (v / s) * a.derivative);
}

/// One concrete choice of the lower-order ASTLO functions xi^k: a single xi whose
/// derivative dominates (chi^(k))^2 + theta^2, theta a plateau over supp chi'.
/// weight[k-2] is the majorization constant lambda_k for k = 2..n.
struct RmeMajorants {
  AstloFunction xi;
  ScalarFunction theta;
  std::vector<double> lambda;
};

inline RmeMajorants rme_majorants(const AstloFunction& chi, int n, int samples = 4096) {
  require(n >= 1, "rme_majorants: n must be >= 1");
  const double delta = chi.delta();
  const Interval ds = chi.function().support().derivative;
  require(!ds.is_empty() && ds.lo > 0.0 && ds.hi < 0.5 * delta,
          "rme_majorants: chi' must be supported inside (0, delta/2)");
  const double gap = std::min(ds.lo, 0.5 * delta - ds.hi);
  ScalarFunction theta = functions::plateau(ds.lo, ds.hi, 0.25 * gap);
  AstloFunction xi = astlo_on(delta, ds.lo - 0.5 * gap, ds.hi + 0.5 * gap);
  std::vector<double> lambda;
  const double lo = ds.lo - 0.25 * gap, hi = ds.hi + 0.25 * gap;
  for (int k = 2; k <= n; ++k) {
    double worst = 0.0;
    for (int i = 0; i <= samples; ++i) {
      const double mu = lo + (hi - lo) * i / samples;
      const double num = std::pow(chi.derivative(mu, k), 2) + std::pow(theta(mu), 2);
      if (num == 0.0) continue;
      worst = std::max(worst, num / xi.derivative(mu, 1));
    }
    lambda.push_back(worst);
  }
  return {std::move(xi), std::move(theta), std::move(lambda)};
}

/// Everything entering the recursive monotonicity estimate for one (gen, phi, chi, v, n).
struct RmeSetup {
  VNLGenerator gen;
  SpectralDecomposition phi;
  AstloFunction chi;
  double v = 0.0;
  int n = 1;
  double kappa = 0.0;
  RmeConstants constants;
  RmeMajorants majorants;
  std::vector<double> weights;  // lambda_k * M_k, k = 2..n
};

inline RmeSetup make_rme_setup(const VNLGenerator& gen, const HermitianOperator& phi, const AstloFunction& chi,
                               double v, int n) {
  RmeSetup r{gen, decompose(phi), chi, v, n, velocity_operator(gen, phi).kappa, rme_constants(gen, phi, n),
             rme_majorants(chi, n), {}};
  if (!(v > r.kappa))
    throw InvalidArgument("rme: v = " + std::to_string(v) + " must exceed kappa_phi = " + std::to_string(r.kappa));
  for (int k = 2; k <= n; ++k) r.weights.push_back(r.majorants.lambda[static_cast<std::size_t>(k - 2)] * r.constants.M(k));
  return r;
}

/// RHS - LHS of the estimate with C = 0.
inline Matrix rme_slack(const RmeSetup& r, double t, double s) {
  require(s > 0.0, "rme: s must be positive");
  const AstloOperators a = astlo_operators(r.phi, r.chi.function(), r.v * t, s);
  const Matrix lhs = dual_apply(r.gen, a.value) - (r.v / s) * a.derivative;
  Matrix rhs = -((r.v - r.kappa) / s) * a.derivative;
  for (int k = 2; k <= r.n; ++k) {
    const AstloOperators x = astlo_operators(r.phi, r.majorants.xi.function(), r.v * t, s);
    rhs += r.weights[static_cast<std::size_t>(k - 2)] / std::pow(s, k) * x.derivative;
  }
  return hermitian_part(rhs - lhs);
}

/// Minimum eigenvalue of RHS - LHS including the constant term C mu_n / s^{n+1}.
inline double rme_margin(const RmeSetup& r, double t, double s, double constant) {
  return min_eigenvalue(rme_slack(r, t, s)) + constant * r.constants.mu / std::pow(s, r.n + 1);
}

struct RmePoint {
  double t;
  double s;
};

/// Smallest C >= 0 making every margin >= 0, given the minimum eigenvalue of
/// the slack at each point. Margins evaluated afterwards can dip below zero by
/// rounding only, so checks compare them against a small negative tolerance.
inline double rme_constant_for(const RmeSetup& r, const std::vector<RmePoint>& points,
                               const std::vector<double>& slack) {
  if (points.size() != slack.size()) throw DimensionMismatch("rme_constant_for: one slack value per point");
  double c = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    if (slack[i] < 0.0) c = std::max(c, -slack[i] * std::pow(points[i].s, r.n + 1) / r.constants.mu);
  return c;
}

inline double fit_rme_constant(const RmeSetup& r, const std::vector<RmePoint>& points) {
  std::vector<double> slack;
  for (const auto& p : points) slack.push_back(min_eigenvalue(rme_slack(r, p.t, p.s)));
  return rme_constant_for(r, points, slack);
}

/// Decay of a sequence of norms over an s-sweep.
struct ClaimFit {
  std::vector<double> s;
  std::vector<double> values;
  double slope = 0.0;
  double max_value = 0.0;
  bool passed = false;
};

inline ClaimFit finish_claim(std::vector<double> s, std::vector<double> values, int n) {
  ClaimFit f;
  f.s = std::move(s);
  f.values = std::move(values);
  f.max_value = *std::max_element(f.values.begin(), f.values.end());
  f.slope = loglog_slope(f.s, f.values);
  f.passed = f.max_value <= 1e-10 || f.slope <= -n + 0.5;
  return f;
}

/// ||chi_X chi(d_X^E/s) chi_X|| over the sweep.
inline ClaimFit claim1_fit(const HermitianOperator& dxe, const RealVector& region_mask, const ScalarFunction& chi,
                           const std::vector<double>& s_sweep, int n) {
  require(!s_sweep.empty(), "claim1_fit: empty s sweep");
  if (region_mask.size() != dxe.dim()) throw DimensionMismatch("claim1_fit: mask size mismatch");
  check_mask(region_mask);
  const SpectralDecomposition dec = decompose(dxe);
  std::vector<double> values;
  for (double s : s_sweep) {
    const Matrix c = astlo_operators(dec, chi, 0.0, s).value;
    values.push_back(operator_norm(region_mask.asDiagonal() * c * region_mask.asDiagonal()));
  }
  return finish_claim(s_sweep, std::move(values), n);
}

/// max(0, -lambda_min(chi^E_ts - g~ chi~_ts g~)) with t = t_ratio * s.
inline ClaimFit claim2_check(const SpectralDecomposition& dxe, const HermitianOperator& g_tilde,
                             const RealVector& distance, const ScalarFunction& chi, const ScalarFunction& chi_tilde,
                             double v, double t_ratio, const std::vector<double>& s_sweep, int n) {
  require(!s_sweep.empty(), "claim2_check: empty s sweep");
  require(t_ratio >= 0.0 && t_ratio < 1.0, "claim2_check: need 0 <= t/s < 1");
  if (distance.size() != dxe.dim() || g_tilde.dim() != dxe.dim())
    throw DimensionMismatch("claim2_check: dimension mismatch");
  std::vector<double> values;
  for (double s : s_sweep) {
    const double t = t_ratio * s;
    const Matrix lhs = astlo_operators(dxe, chi, v * t, s).value;
    RealVector ct(distance.size());
    for (Eigen::Index i = 0; i < distance.size(); ++i) ct(i) = chi_tilde((distance(i) - v * t) / s);
    const Matrix rhs = g_tilde.matrix() * ct.asDiagonal() * g_tilde.matrix();
    values.push_back(std::max(0.0, -min_eigenvalue(hermitian_part(lhs - rhs))));
  }
  return finish_claim(s_sweep, std::move(values), n);
}

enum class InitialState { packet, box_ground_state };

inline std::string to_string(InitialState s) {
  return s == InitialState::packet ? "packet" : "box_ground_state";
}

inline InitialState initial_state_from_string(const std::string& s) {
  if (s == "packet") return InitialState::packet;
  if (s == "box_ground_state") return InitialState::box_ground_state;
  throw InvalidArgument("unknown initial state '" + s + "'");
}

struct LightconeConfig {
  int dimension = 1;
  double halfwidth = 32.0;
  int points = 96;
  PotentialSpec potential{PotentialKind::gaussian_well, 1.0, 1.0, 2.0, {10.0, 0.0}, std::nullopt, 2};
  JumpRecipe jumps = JumpRecipe::local_dephasing;
  double jump_strength = 0.1;
  JumpOptions jump_options{};
  std::vector<std::pair<double, double>> region{{-4.0, 4.0}};
  double eps0 = 0.5;
  double energy = 4.0;
  double cutoff_width = 2.0;
  int n = 2;
  std::optional<double> c;  // default c_factor * kappa
  double c_factor = 1.2;
  std::optional<double> v;  // default (kappa + c)/2
  double horizon = 8.0;
  int time_samples = 33;
  std::vector<double> s_values{8.0, 16.0, 32.0, 64.0};
  std::vector<double> t_ratios{0.0, 0.2, 0.4, 0.6, 0.8};
  InitialState initial = InitialState::packet;
  double packet_center = 0.0;
  double packet_width = 1.0;
  double packet_momentum = 0.0;
  double front_threshold = 1e-3;
  double edge_width = 2.0;
  double boundary_tolerance = 1e-6;
  double control_factor = 0.3;
  double supersonic_tolerance = 0.1;
  double fit_fraction = 0.5;
  int min_fit_points = 8;
  PropagatorMethod method = PropagatorMethod::rk4;
  double dt = 0.01;
  double propagation_tolerance = 1e-8;
  bool diagnostics = true;
  int threads = 1;
};

/// Operators shared by the light-cone experiment and its diagnostics.
struct LightconeSetup {
  Grid grid;
  HermitianOperator hamiltonian;
  SpectralDecomposition spectrum;
  JumpFamily jumps;
  VNLGenerator generator;
  RegionSpec region;
  SmoothedDistance distance;
  RealVector distance_values;
  RealVector region_mask;
  SmoothCutoff cutoff;
  HermitianOperator g;
  LocalizedDistance dxe;
  VelocityOperator velocity;
  double kappa;
  double c;
  double v;
  double delta;
  AstloFunction chi;
  AuxCutoffPair aux;
  HermitianOperator g_tilde;
};

inline Grid lightcone_grid(const LightconeConfig& cfg) { return Grid(cfg.dimension, cfg.halfwidth, cfg.points); }

inline RegionSpec lightcone_region(const LightconeConfig& cfg) {
  require(!cfg.region.empty(), "lightcone: region must not be empty");
  if (cfg.dimension == 1) return RegionSpec::intervals(cfg.region);
  std::vector<Box> boxes;
  for (const auto& iv : cfg.region) boxes.push_back(Box{{iv.first, iv.first}, {iv.second, iv.second}});
  return RegionSpec::boxes(std::move(boxes));
}

inline LightconeSetup build_lightcone_setup(const LightconeConfig& cfg) {
  Grid grid = lightcone_grid(cfg);
  HermitianOperator h = build_hamiltonian(grid, cfg.potential);
  SpectralDecomposition spectrum = decompose(h);
  JumpFamily jumps = make_jumps(grid, cfg.jumps, cfg.jump_strength, cfg.jump_options);
  VNLGenerator gen(h, jumps.jumps);
  RegionSpec region = lightcone_region(cfg);
  region.check_inside(grid);
  SmoothedDistance dist(region, cfg.eps0);
  RealVector dvals(grid.sites()), mask(grid.sites());
  for (int s = 0; s < grid.sites(); ++s) {
    const auto p = grid.point(s);
    dvals(s) = dist(p[0], p[1]);
    mask(s) = region.contains(p[0], p[1]) ? 1.0 : 0.0;
  }
  SmoothCutoff cutoff(cfg.energy, cfg.cutoff_width);
  HermitianOperator g = apply_function_exact(spectrum, cutoff.function(), "g(H)");
  LocalizedDistance dxe = localized_distance(g, HermitianOperator::diagonal(dvals, "d_X"));
  VelocityOperator vel = velocity_operator(gen, dxe);
  const double kappa = vel.kappa;
  const double c = cfg.c ? *cfg.c : cfg.c_factor * kappa;
  if (!(c > kappa))
    throw InvalidArgument("lightcone: c = " + std::to_string(c) + " must exceed kappa = " + std::to_string(kappa));
  const double v = cfg.v ? *cfg.v : 0.5 * (kappa + c);
  if (!(v > kappa && v < c))
    throw InvalidArgument("lightcone: v = " + std::to_string(v) + " must lie in (kappa, c) = (" +
                          std::to_string(kappa) + ", " + std::to_string(c) + ")");
  const double delta = c - v;
  AstloFunction chi = astlo(delta);
  AuxCutoffPair aux = aux_cutoff_pair(cutoff, delta);
  HermitianOperator g_tilde = apply_function_exact(spectrum, aux.g_tilde.function(), "g~(H)");
  return {std::move(grid), std::move(h),  std::move(spectrum), std::move(jumps), std::move(gen),
          std::move(region), std::move(dist), std::move(dvals), std::move(mask), std::move(cutoff),
          std::move(g), std::move(dxe), std::move(vel), kappa, c, v, delta, std::move(chi), std::move(aux),
          std::move(g_tilde)};
}

/// Normalized initial wave function supported in X.
inline ComplexVector initial_wavefunction(const LightconeConfig& cfg, const Grid& grid, const RegionSpec& region) {
  ComplexVector psi = ComplexVector::Zero(grid.sites());
  const Box& box = region.parts().front();
  if (cfg.initial == InitialState::packet) {
    for (int s = 0; s < grid.sites(); ++s) {
      const auto p = grid.point(s);
      if (!region.contains(p[0], p[1])) continue;
      double window = 1.0, r2 = 0.0;
      for (int a = 0; a < grid.dimension(); ++a) {
        const double lo = box.lo[static_cast<std::size_t>(a)], hi = box.hi[static_cast<std::size_t>(a)];
        const double ramp = 0.25 * (hi - lo);
        window *= functions::plateau(lo + ramp, hi - ramp, ramp)(p[static_cast<std::size_t>(a)]);
        const double off = p[static_cast<std::size_t>(a)] - (a == 0 ? cfg.packet_center : 0.0);
        r2 += off * off;
      }
      const double phase = cfg.packet_momentum * p[0];
      psi(s) = window * std::exp(-0.5 * r2 / (cfg.packet_width * cfg.packet_width)) *
               Complex(std::cos(phase), std::sin(phase));
    }
  } else {
    // Dirichlet ground state of the sites inside the first box.
    for (int s = 0; s < grid.sites(); ++s) {
      const auto p = grid.point(s);
      bool inside = true;
      for (int a = 0; a < grid.dimension(); ++a) {
        const auto ax = static_cast<std::size_t>(a);
        inside = inside && p[ax] >= box.lo[ax] && p[ax] <= box.hi[ax];
      }
      if (!inside) continue;
      double amp = 1.0;
      for (int a = 0; a < grid.dimension(); ++a) {
        const double lo = box.lo[static_cast<std::size_t>(a)], hi = box.hi[static_cast<std::size_t>(a)];
        const int first = static_cast<int>(std::ceil((lo + grid.halfwidth()) / grid.spacing() - 1e-9));
        const int last = static_cast<int>(std::floor((hi + grid.halfwidth()) / grid.spacing() + 1e-9));
        const int i = static_cast<int>(std::lround((p[static_cast<std::size_t>(a)] + grid.halfwidth()) / grid.spacing()));
        amp *= std::sin(std::acos(-1.0) * (i - first + 1) / (last - first + 2));
      }
      psi(s) = amp;
    }
  }
  const double n2 = psi.squaredNorm();
  if (!(n2 > 0.0)) throw InvalidArgument("lightcone: initial state vanishes on the grid (region too small?)");
  return psi / std::sqrt(n2);
}

struct LightconeReport {
  double kappa = 0.0;
  double c = 0.0;
  double v = 0.0;
  double delta = 0.0;
  double control_c = 0.0;
  double dual_residual = 0.0;
  std::vector<double> times;
  std::vector<double> leakage;           // P(t) for c, probed with g~(H)
  std::vector<double> leakage_full_cutoff;  // same with g(H), context only
  std::vector<double> control_leakage;   // P(t) for c'
  std::vector<double> radius;            // mass radius of g~ rho_t g~
  std::vector<double> energy_mass;       // Tr(g~^2 rho_t)
  std::vector<double> outside_window;    // Tr((1 - g~^2) rho_t)
  std::vector<double> boundary_mass;     // Tr(edge rho_t)
  double decay_exponent = 0.0;
  double front_speed = 0.0;
  double control_growth = 0.0;
  double initial_bound = 0.0;            // ||chi_X g~ chi_{X^c} g~ chi_X||
  double max_boundary_mass = 0.0;
  bool tail_nonincreasing = false;
  bool heaviside_ok = false;
  std::optional<ClaimFit> claim1;
  std::optional<ClaimFit> claim2;
  std::vector<RmePoint> rme_points;
  std::vector<double> rme_margins;       // with fitted C
  double rme_constant = 0.0;
  std::vector<std::string> violations;
};

namespace detail {

inline double mass_radius(const RealVector& density, const RealVector& distance, double threshold) {
  const double total = density.sum();
  if (!(total > 0.0)) return 0.0;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(density.size()));
  for (Eigen::Index i = 0; i < density.size(); ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return distance(a) < distance(b); });
  double acc = 0.0;
  for (auto i : order) {
    acc += std::max(0.0, density(i));
    if (acc >= (1.0 - threshold) * total) return distance(i);
  }
  return distance(order.back());
}

inline RealVector outside_cone(const RealVector& distance, double radius) {
  RealVector m(distance.size());
  for (Eigen::Index i = 0; i < distance.size(); ++i) m(i) = distance(i) > radius ? 1.0 : 0.0;
  return m;
}

}  // namespace detail

inline std::vector<RmePoint> rme_grid(const std::vector<double>& s_values, const std::vector<double>& t_ratios) {
  std::vector<RmePoint> pts;
  for (double s : s_values)
    for (double r : t_ratios) pts.push_back({r * s, s});
  return pts;
}

inline LightconeReport run_lightcone_experiment(const LightconeConfig& cfg, bool enforce = true) {
  require(cfg.time_samples >= 2, "lightcone: need at least two time samples");
  require(cfg.horizon > 0.0, "lightcone: horizon must be positive");
  require(cfg.fit_fraction > 0.0 && cfg.fit_fraction <= 1.0, "lightcone: fit_fraction must lie in (0, 1]");
  const LightconeSetup st = build_lightcone_setup(cfg);
  LightconeReport rep;
  rep.kappa = st.kappa;
  rep.c = st.c;
  rep.v = st.v;
  rep.delta = st.delta;
  rep.dual_residual = st.velocity.dual_residual;

  const ComplexVector psi = initial_wavefunction(cfg, st.grid, st.region);
  const DensityMatrix rho0 = DensityMatrix::pure(psi);
  PropagatorConfig pc;
  pc.method = cfg.method;
  pc.dt = cfg.dt;
  pc.samples = cfg.time_samples;
  pc.tolerance = cfg.propagation_tolerance;
  const auto snaps = propagate(st.generator, rho0, cfg.horizon, pc);

  RealVector edge(st.grid.sites());
  for (int s = 0; s < st.grid.sites(); ++s) edge(s) = st.grid.distance_to_boundary(s) <= cfg.edge_width ? 1.0 : 0.0;

  std::vector<RealVector> densities;
  for (const auto& sn : snaps) {
    const Matrix& rho = sn.state.matrix();
    RealVector dens = localized_density(rho, st.g_tilde);
    rep.times.push_back(sn.t);
    rep.leakage_full_cutoff.push_back(
        clamp_probability(localized_density(rho, st.g).dot(detail::outside_cone(st.distance_values, st.c * sn.t))));
    rep.leakage.push_back(clamp_probability(dens.dot(detail::outside_cone(st.distance_values, st.c * sn.t))));
    rep.radius.push_back(detail::mass_radius(dens, st.distance_values, cfg.front_threshold));
    rep.energy_mass.push_back(dens.sum());
    rep.outside_window.push_back(rho.trace().real() - dens.sum());
    rep.boundary_mass.push_back(rho.diagonal().real().dot(edge));
    densities.push_back(std::move(dens));
  }
  rep.max_boundary_mass = *std::max_element(rep.boundary_mass.begin(), rep.boundary_mass.end());

  const std::size_t count = rep.times.size();
  const std::size_t tail = std::max<std::size_t>(
      2, static_cast<std::size_t>(std::ceil(cfg.fit_fraction * static_cast<double>(count - 1))));
  if (static_cast<int>(tail) < cfg.min_fit_points)
    throw InvalidArgument("lightcone: fit window has " + std::to_string(tail) + " points, need " +
                          std::to_string(cfg.min_fit_points));
  const std::vector<double> t_tail(rep.times.end() - static_cast<std::ptrdiff_t>(tail), rep.times.end());
  const std::vector<double> p_tail(rep.leakage.end() - static_cast<std::ptrdiff_t>(tail), rep.leakage.end());
  const std::vector<double> r_tail(rep.radius.end() - static_cast<std::ptrdiff_t>(tail), rep.radius.end());
  rep.decay_exponent = loglog_slope(t_tail, p_tail);
  rep.front_speed = linear_fit(t_tail, r_tail).slope;
  rep.tail_nonincreasing = true;
  for (std::size_t i = 1; i < p_tail.size(); ++i)
    if (p_tail[i] > p_tail[i - 1] + 1e-6) rep.tail_nonincreasing = false;

  rep.control_c = cfg.control_factor * rep.front_speed;
  for (std::size_t i = 0; i < count; ++i)
    rep.control_leakage.push_back(
        clamp_probability(densities[i].dot(detail::outside_cone(st.distance_values, rep.control_c * rep.times[i]))));
  const double p0 = rep.control_leakage.front();
  const double pmax = *std::max_element(rep.control_leakage.begin(), rep.control_leakage.end());
  rep.control_growth = p0 > 0.0 ? pmax / p0 : (pmax > 0.0 ? kInf : 1.0);

  {
    const RealVector out0 = detail::outside_cone(st.distance_values, 0.0);
    const Matrix m = st.region_mask.asDiagonal() * st.g_tilde.matrix() * out0.asDiagonal() * st.g_tilde.matrix() *
                     st.region_mask.asDiagonal();
    rep.initial_bound = operator_norm(m);
  }
  rep.heaviside_ok = true;
  for (std::size_t i = 1; i < count; ++i)
    rep.heaviside_ok = rep.heaviside_ok &&
                       heaviside_comparison_check(st.aux.chi_tilde, std::vector<double>(st.distance_values.data(),
                                                  st.distance_values.data() + st.distance_values.size()),
                                                  st.c, st.v, rep.times[i]);

  if (cfg.diagnostics) {
    rep.claim1 = claim1_fit(st.dxe.op, st.region_mask, st.chi.function(), cfg.s_values, cfg.n);
    const SpectralDecomposition dxe_dec = decompose(st.dxe.op);
    rep.claim2 = claim2_check(dxe_dec, st.g_tilde, st.distance_values, st.chi.function(), st.aux.chi_tilde, st.v,
                              0.0, cfg.s_values, cfg.n);
    const RmeSetup rme = make_rme_setup(st.generator, st.dxe.op, st.chi, st.v, cfg.n);
    rep.rme_points = rme_grid(cfg.s_values, cfg.t_ratios);
    rep.rme_constant = fit_rme_constant(rme, rep.rme_points);
    rep.rme_margins.resize(rep.rme_points.size());
    parallel_for(rep.rme_points.size(), cfg.threads, [&](std::size_t i) {
      rep.rme_margins[i] = rme_margin(rme, rep.rme_points[i].t, rep.rme_points[i].s, rep.rme_constant);
    });
  }

  if (rep.front_speed > rep.kappa * (1.0 + cfg.supersonic_tolerance))
    rep.violations.push_back("front speed " + std::to_string(rep.front_speed) + " exceeds kappa " +
                             std::to_string(rep.kappa) + " by more than " +
                             std::to_string(100.0 * cfg.supersonic_tolerance) + "%");
  if (rep.max_boundary_mass > cfg.boundary_tolerance)
    rep.violations.push_back("boundary mass " + std::to_string(rep.max_boundary_mass) + " exceeds " +
                             std::to_string(cfg.boundary_tolerance));
  if (enforce) {
    if (rep.front_speed > rep.kappa * (1.0 + cfg.supersonic_tolerance))
      throw SupersonicDetected("lightcone: " + rep.violations.front());
    if (rep.max_boundary_mass > cfg.boundary_tolerance)
      throw BoundaryContamination("lightcone: boundary mass " + std::to_string(rep.max_boundary_mass) +
                                  " exceeds " + std::to_string(cfg.boundary_tolerance));
  }
  return rep;
}

}  // namespace lclab
