#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lclab/fit.hpp"
#include "lclab/geometry.hpp"
#include "lclab/lattice.hpp"
#include "lclab/lightcone.hpp"
#include "lclab/lindblad.hpp"
#include "lclab/spectral.hpp"

namespace lclab {
namespace {

HermitianOperator well(const Grid& grid) {
  PotentialSpec spec;
  spec.kind = PotentialKind::gaussian_well;
  return build_hamiltonian(grid, spec);
}

RealVector distance_values(const Grid& grid, const SmoothedDistance& d) {
  RealVector out(grid.sites());
  for (int i = 0; i < grid.sites(); ++i) out(i) = d(grid.axis_coordinate(i));
  return out;
}

Matrix random_state(int n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Matrix g(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) g(i, j) = Complex(normal(rng), normal(rng));
  Matrix rho = hermitian_part(g * g.adjoint());
  return rho / rho.trace().real();
}

LightconeConfig small_config() {
  LightconeConfig cfg;
  cfg.halfwidth = 12.0;
  cfg.points = 48;
  cfg.diagnostics = false;
  return cfg;
}

TEST(LocalizedDistance, IdentityAndZeroCutoff) {
  const Grid grid(1, 8.0, 32);
  const RealVector d = distance_values(grid, SmoothedDistance(RegionSpec::intervals({{-2.0, 2.0}}), 0.5));
  const HermitianOperator dop = HermitianOperator::diagonal(d);
  EXPECT_EQ((localized_distance(HermitianOperator::identity(32), dop).op.matrix() - dop.matrix()).cwiseAbs().maxCoeff(),
            0.0);
  EXPECT_EQ(localized_distance(HermitianOperator::zero(32), dop).op.matrix().cwiseAbs().maxCoeff(), 0.0);
}

TEST(LocalizedDistance, NormBoundedByLargestDistance) {
  const Grid grid(1, 8.0, 32);
  const RealVector d = distance_values(grid, SmoothedDistance(RegionSpec::intervals({{-2.0, 2.0}}), 0.5));
  const SpectralDecomposition h = decompose(well(grid));
  const HermitianOperator g = apply_function_exact(h, SmoothCutoff(4.0, 2.0).function());
  const LocalizedDistance dxe = localized_distance(g, HermitianOperator::diagonal(d));
  EXPECT_GT(dxe.op.norm(), 0.0);
  EXPECT_LE(dxe.op.norm(), d.maxCoeff() * (1.0 + 1e-12));
  EXPECT_GE(min_eigenvalue(dxe.op.matrix()), -1e-12 * d.maxCoeff());
}

TEST(Velocity, VanishesForConservedObservable) {
  const Grid grid(1, 8.0, 32);
  const HermitianOperator h = well(grid);
  const VNLGenerator gen(h, JumpOperatorSet::empty(32));
  const HermitianOperator phi = apply_function_exact(decompose(h), [](double x) { return std::atan(x); });
  const VelocityOperator v = velocity_operator(gen, phi);
  EXPECT_LE(v.kappa, 1e-12 * h.norm());
}

TEST(Velocity, MatchesDualGenerator) {
  const Grid grid(1, 8.0, 32);
  const RealVector d = distance_values(grid, SmoothedDistance(RegionSpec::intervals({{-2.0, 2.0}}), 0.5));
  for (JumpRecipe r : {JumpRecipe::none, JumpRecipe::local_dephasing, JumpRecipe::smoothed_hopping}) {
    const VNLGenerator gen(well(grid), make_jumps(grid, r, 0.3).jumps);
    const HermitianOperator g = apply_function_exact(decompose(gen.hamiltonian()), SmoothCutoff(4.0, 2.0).function());
    const LocalizedDistance dxe = localized_distance(g, HermitianOperator::diagonal(d));
    const VelocityOperator v = velocity_operator(gen, dxe);
    EXPECT_LE(v.dual_residual, 1e-10) << to_string(r);
    EXPECT_LE((v.gamma.matrix() - dual_apply(gen, dxe.op.matrix())).cwiseAbs().maxCoeff(), 1e-10) << to_string(r);
    EXPECT_NEAR(v.kappa, operator_norm(dual_apply(gen, dxe.op.matrix())), 1e-10);
  }
}

TEST(Velocity, FreeLatticeKappaGrowsSublinearlyInEnergy) {
  const Grid grid(1, 16.0, 256);
  const HermitianOperator h = build_hamiltonian(grid, PotentialSpec{});
  const SpectralDecomposition dec = decompose(h);
  const VNLGenerator gen(h, JumpOperatorSet::empty(256));
  const RealVector d = distance_values(grid, SmoothedDistance(RegionSpec::intervals({{-2.0, 2.0}}), 0.5));
  std::vector<double> x, y;
  for (double e : {4.0, 8.0, 16.0, 32.0, 64.0}) {
    const HermitianOperator g = apply_function_exact(dec, SmoothCutoff(e, 0.5 * e).function());
    x.push_back(std::log(1.0 + e));
    y.push_back(std::log(velocity_operator(gen, localized_distance(g, HermitianOperator::diagonal(d))).kappa));
  }
  for (std::size_t i = 1; i < y.size(); ++i) EXPECT_GT(y[i], y[i - 1]);
  EXPECT_LE(linear_fit(x, y).slope, 0.6);
}

TEST(Leakage, EmptyAndFullMasks) {
  const Matrix rho = random_state(16, 3);
  EXPECT_EQ(leakage_probability(rho, HermitianOperator::identity(16), RealVector::Zero(16)), 0.0);
  EXPECT_NEAR(leakage_probability(rho, HermitianOperator::identity(16), RealVector::Ones(16)), 1.0, 1e-14);
}

TEST(Leakage, MatchesDirectTrace) {
  const Grid grid(1, 8.0, 32);
  const SpectralDecomposition h = decompose(well(grid));
  const HermitianOperator g = apply_function_exact(h, SmoothCutoff(4.0, 2.0).function());
  const Matrix rho = random_state(32, 9);
  RealVector mask(32);
  for (int i = 0; i < 32; ++i) mask(i) = std::abs(grid.axis_coordinate(i)) > 3.0 ? 1.0 : 0.0;
  // Oracle: Tr(g M g rho) with g built in the eigenbasis of H.
  const double want = (g.matrix() * mask.asDiagonal() * g.matrix() * rho).trace().real();
  const double got = leakage_probability(rho, g, mask);
  EXPECT_NEAR(got, want, 1e-13);
  EXPECT_GE(got, 0.0);
  EXPECT_LE(got, 1.0);
  RealVector bad = mask;
  bad(0) = 0.5;
  EXPECT_THROW(leakage_probability(rho, g, bad), InvalidArgument);
}

TEST(HeisenbergDerivative, ConservedObservableGivesDriftOnly) {
  const Grid grid(1, 8.0, 32);
  const HermitianOperator h = well(grid);
  const VNLGenerator gen(h, JumpOperatorSet::empty(32));
  const SpectralDecomposition phi = decompose(apply_function_exact(decompose(h), [](double x) { return 3.0 + std::atan(x); }));
  const AstloFunction chi = astlo(2.0);
  const double v = 1.0, t = 0.5, s = 2.0;
  const AstloOperators a = astlo_operators(phi, chi.function(), v * t, s);
  EXPECT_LE(operator_norm(heisenberg_derivative(gen, chi.function(), phi, v, t, s) + (v / s) * a.derivative), 1e-12);
}

TEST(HeisenbergDerivative, ConstantFunctionVanishes) {
  const Grid grid(1, 8.0, 32);
  const VNLGenerator gen(well(grid), make_jumps(grid, JumpRecipe::smoothed_hopping, 0.3).jumps);
  const SpectralDecomposition phi = decompose(HermitianOperator::diagonal(
      distance_values(grid, SmoothedDistance(RegionSpec::intervals({{-2.0, 2.0}}), 0.5))));
  EXPECT_LE(operator_norm(heisenberg_derivative(gen, functions::constant(1.0), phi, 1.0, 0.3, 2.0)), 1e-12);
}

TEST(HeisenbergDerivative, MatchesFiniteDifferenceOfDualFlow) {
  const Grid grid(1, 8.0, 32);
  const VNLGenerator gen(well(grid), make_jumps(grid, JumpRecipe::local_dephasing, 0.3).jumps);
  const SpectralDecomposition phi = decompose(HermitianOperator::diagonal(
      distance_values(grid, SmoothedDistance(RegionSpec::intervals({{-2.0, 2.0}}), 0.5))));
  const ScalarFunction chi = astlo(2.0).function();
  const double v = 1.0, t = 0.5, s = 2.0;
  const Matrix exact = heisenberg_derivative(gen, chi, phi, v, t, s);
  // F(tau) = beta'_tau(chi_{t+tau,s}); its one-sided three-point derivative at 0 is O(h^2).
  PropagatorConfig pc;
  pc.method = PropagatorMethod::superop_exact;
  pc.samples = 2;
  auto flow = [&](double tau) {
    const Matrix c = astlo_operators(phi, chi, v * (t + tau), s).value;
    return tau == 0.0 ? c : dual_propagate(gen, c, tau, pc).back().state;
  };
  auto error = [&](double h) {
    const Matrix fd = (-3.0 * flow(0.0) + 4.0 * flow(h) - flow(2.0 * h)) / (2.0 * h);
    return operator_norm(fd - exact);
  };
  const double coarse = error(2e-3), fine = error(1e-3);
  EXPECT_LE(fine, 1e-3 * operator_norm(exact));
  EXPECT_NEAR(std::log2(coarse / fine), 2.0, 0.3);
}

TEST(RmeMargin, NonnegativeForConservedObservable) {
  const Grid grid(1, 8.0, 32);
  const HermitianOperator h = well(grid);
  const VNLGenerator gen(h, JumpOperatorSet::empty(32));
  const HermitianOperator phi = apply_function_exact(decompose(h), [](double x) { return 3.0 + std::atan(x); });
  const RmeSetup r = make_rme_setup(gen, phi, astlo(2.0), 0.5, 2);
  for (double s : {1.0, 2.0, 4.0})
    for (double t : {0.0, 0.5, 1.0}) EXPECT_GE(rme_margin(r, t, s, 0.0), -1e-12) << "s = " << s << " t = " << t;
}

TEST(RmeMargin, FittedConstantCoversSweep) {
  const LightconeSetup st = build_lightcone_setup(small_config());
  const RmeSetup r = make_rme_setup(st.generator, st.dxe.op, st.chi, st.v, 2);
  const std::vector<RmePoint> pts = rme_grid({4.0, 8.0, 16.0, 32.0}, {0.0, 0.25, 0.5, 0.75});
  const double c = fit_rme_constant(r, pts);
  EXPECT_GE(c, 0.0);
  EXPECT_TRUE(std::isfinite(c));
  for (const auto& p : pts) EXPECT_GE(rme_margin(r, p.t, p.s, c), -1e-8) << "s = " << p.s << " t = " << p.t;
}

TEST(RmeMargin, NonincreasingInDriftAtTimeZero) {
  const LightconeSetup st = build_lightcone_setup(small_config());
  const double lo = st.kappa * 1.05, hi = st.kappa * 1.5;
  const RmeSetup slow = make_rme_setup(st.generator, st.dxe.op, st.chi, lo, 2);
  const RmeSetup fast = make_rme_setup(st.generator, st.dxe.op, st.chi, hi, 2);
  for (double s : {4.0, 16.0}) EXPECT_LE(rme_margin(fast, 0.0, s, 0.0), rme_margin(slow, 0.0, s, 0.0) + 1e-12);
  EXPECT_THROW(make_rme_setup(st.generator, st.dxe.op, st.chi, 0.5 * st.kappa, 2), InvalidArgument);
}

TEST(Claim1, VanishesWhenRegionCoversGrid) {
  const Grid grid(1, 8.0, 32);
  const SmoothedDistance whole(RegionSpec::intervals({{-8.0, 8.0}}), 0.5);
  const HermitianOperator g = apply_function_exact(decompose(well(grid)), SmoothCutoff(4.0, 2.0).function());
  const LocalizedDistance dxe = localized_distance(g, HermitianOperator::diagonal(distance_values(grid, whole)));
  const ClaimFit f = claim1_fit(dxe.op, RealVector::Ones(32), astlo(1.0).function(), {2.0, 4.0, 8.0}, 2);
  EXPECT_LE(f.max_value, 1e-10);
  EXPECT_TRUE(f.passed);
}

TEST(Claim1, VanishesBelowSpectrum) {
  const Grid grid(1, 8.0, 32);
  const SpectralDecomposition h = decompose(well(grid));
  const HermitianOperator g = apply_function_exact(h, SmoothCutoff(h.eigenvalues(0) - 1.0, 0.5).function());
  const RealVector d = distance_values(grid, SmoothedDistance(RegionSpec::intervals({{-2.0, 2.0}}), 0.5));
  RealVector mask(32);
  for (int i = 0; i < 32; ++i) mask(i) = std::abs(grid.axis_coordinate(i)) <= 2.0 ? 1.0 : 0.0;
  const ClaimFit f = claim1_fit(localized_distance(g, HermitianOperator::diagonal(d)).op, mask, astlo(1.0).function(),
                                {2.0, 4.0}, 2);
  EXPECT_EQ(f.max_value, 0.0);
}

TEST(Claim1, DecaysInScale) {
  LightconeConfig cfg = small_config();
  cfg.halfwidth = 16.0;
  cfg.points = 64;
  const LightconeSetup st = build_lightcone_setup(cfg);
  const ClaimFit f = claim1_fit(st.dxe.op, st.region_mask, st.chi.function(), {8.0, 16.0, 32.0, 64.0, 128.0}, 2);
  EXPECT_GT(f.max_value, 0.0);
  EXPECT_LE(f.slope, -1.5);
  EXPECT_TRUE(f.passed);
}

TEST(Claim2, TrivialWithoutEnergyWindow) {
  const LightconeSetup st = build_lightcone_setup(small_config());
  const ClaimFit f = claim2_check(decompose(st.dxe.op), HermitianOperator::zero(st.grid.sites()), st.distance_values,
                                  st.chi.function(), st.aux.chi_tilde, st.v, 0.5, {4.0, 8.0}, 2);
  EXPECT_LE(f.max_value, 1e-10);
}

TEST(Claim2, TrivialAtTimeZeroWhenRegionCoversGrid) {
  LightconeConfig cfg = small_config();
  cfg.region = {{-12.0, 12.0}};
  cfg.c = 3.0;
  cfg.v = 2.0;
  const LightconeSetup st = build_lightcone_setup(cfg);
  EXPECT_EQ(st.distance_values.cwiseAbs().maxCoeff(), 0.0);
  const ClaimFit f = claim2_check(decompose(st.dxe.op), st.g_tilde, st.distance_values, st.chi.function(),
                                  st.aux.chi_tilde, st.v, 0.0, {4.0, 8.0}, 2);
  EXPECT_LE(f.max_value, 1e-10);
}

TEST(Claim2, DeficitDecaysInScale) {
  LightconeConfig cfg = small_config();
  cfg.halfwidth = 16.0;
  cfg.points = 64;
  const LightconeSetup st = build_lightcone_setup(cfg);
  const ClaimFit f = claim2_check(decompose(st.dxe.op), st.g_tilde, st.distance_values, st.chi.function(),
                                  st.aux.chi_tilde, st.v, 0.0, {8.0, 16.0, 32.0, 64.0, 128.0}, 2);
  EXPECT_TRUE(f.passed) << "slope " << f.slope << " max " << f.max_value;
}

TEST(Experiment, FreeLatticeGroundStateStaysInsideCone) {
  LightconeConfig cfg;
  cfg.halfwidth = 24.0;
  cfg.points = 96;
  cfg.potential = PotentialSpec{};
  cfg.jumps = JumpRecipe::none;
  cfg.initial = InitialState::box_ground_state;
  cfg.horizon = 4.0;
  cfg.time_samples = 17;
  cfg.diagnostics = false;
  const LightconeReport rep = run_lightcone_experiment(cfg, false);
  ASSERT_GT(rep.c, rep.kappa);
  for (std::size_t i = 0; i < rep.leakage.size(); ++i)
    EXPECT_LE(rep.leakage[i], rep.leakage.front() + 1e-6) << "t = " << rep.times[i];
  EXPECT_LE(rep.leakage.front(), rep.initial_bound + 1e-12);
}

TEST(Experiment, DefaultPacketReport) {
  LightconeConfig cfg;
  cfg.diagnostics = false;
  const LightconeReport rep = run_lightcone_experiment(cfg);
  EXPECT_TRUE(rep.violations.empty());
  EXPECT_LE(rep.front_speed, 1.1 * rep.kappa);
  EXPECT_TRUE(rep.tail_nonincreasing);
  EXPECT_GE(rep.control_growth, 10.0);
  EXPECT_LE(rep.leakage.front(), rep.initial_bound + 1e-12);
  EXPECT_TRUE(rep.heaviside_ok);
  EXPECT_EQ(rep.times.size(), 33u);
}

TEST(Experiment, RejectsSpeedsOutsideOrder) {
  LightconeConfig cfg = small_config();
  cfg.c_factor = 0.9;
  EXPECT_THROW(build_lightcone_setup(cfg), InvalidArgument);
  cfg = small_config();
  cfg.c = 100.0;
  cfg.v = 100.0;
  EXPECT_THROW(build_lightcone_setup(cfg), InvalidArgument);
}

}  // namespace
}  // namespace lclab
