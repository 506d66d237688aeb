#include <gtest/gtest.h>

#include <cmath>

#include "lclab/commutators.hpp"
#include "lclab/fit.hpp"
#include "lclab/geometry.hpp"
#include "lclab/lattice.hpp"
#include "lclab/lightcone.hpp"
#include "lclab/runners.hpp"

namespace lclab {
namespace {

HermitianOperator position(const Grid& grid) {
  RealVector x(grid.sites());
  for (int i = 0; i < grid.sites(); ++i) x(i) = grid.axis_coordinate(i);
  return HermitianOperator::diagonal(x, "x");
}

HermitianOperator well(const Grid& grid) {
  PotentialSpec spec;
  spec.kind = PotentialKind::gaussian_well;
  return build_hamiltonian(grid, spec);
}

TEST(Ladder, SelfCommutatorVanishes) {
  const HermitianOperator phi = well(Grid(1, 5.0, 20));
  const CommutatorLadder l = adjoint_ladder(phi, phi.matrix(), 3);
  for (int k = 1; k <= 3; ++k) EXPECT_LE(l.norm(k), 1e-12 * phi.norm() * phi.norm());
}

TEST(Ladder, DiagonalConjugationClosedForm) {
  const Grid grid(1, 5.0, 12);
  const HermitianOperator phi = position(grid);
  // Discrete translation by one site.
  Matrix a = Matrix::Zero(12, 12);
  for (int i = 0; i + 1 < 12; ++i) a(i + 1, i) = 1.0;
  const CommutatorLadder l = adjoint_ladder(phi, a, 4);
  for (int k = 0; k <= 4; ++k)
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j < 12; ++j) {
        const double want = std::pow(grid.axis_coordinate(i) - grid.axis_coordinate(j), k) * a(i, j).real();
        EXPECT_NEAR(l.term(k)(i, j).real(), want, 1e-12) << k;
        EXPECT_EQ(l.term(k)(i, j).imag(), 0.0);
      }
}

TEST(Ladder, SubmultiplicativeGrowth) {
  const Grid grid(1, 5.0, 24);
  const HermitianOperator phi = position(grid);
  const CommutatorLadder l = adjoint_ladder(phi, well(grid).matrix(), 4);
  for (int k = 0; k < 4; ++k) {
    EXPECT_GT(l.norm(k + 1), 0.0);
    EXPECT_LE(l.norm(k + 1), 2.0 * phi.norm() * l.norm(k) * (1.0 + 1e-12));
  }
}

TEST(RmeConstants, CommutingPhiWithoutJumps) {
  const Grid grid(1, 5.0, 20);
  const HermitianOperator h = well(grid);
  const VNLGenerator gen(h, JumpOperatorSet::empty(20));
  const HermitianOperator phi = apply_function_exact(decompose(h), [](double x) { return std::sin(x); });
  const RmeConstants c = rme_constants(gen, phi, 3);
  for (int k = 1; k <= 4; ++k) EXPECT_NEAR(c.M(k), 1.0, 1e-16);
}

TEST(RmeConstants, MuIsMaxOfHigherOrders) {
  const Grid grid(1, 5.0, 20);
  const VNLGenerator gen(well(grid), make_jumps(grid, JumpRecipe::local_dephasing, 0.1).jumps);
  const RmeConstants c = rme_constants(gen, position(grid), 3);
  double mu = 0.0;
  for (int k = 2; k <= 4; ++k) mu = std::max(mu, c.M(k));
  EXPECT_EQ(c.mu, mu);
}

TEST(RmeConstants, LocalizedDistanceOnWell) {
  // M_k for phi = d_X^E at the default energy window, across a small energy sweep.
  std::vector<double> mus;
  for (double e : {2.0, 4.0, 6.0}) {
    LightconeConfig cfg;
    cfg.halfwidth = 12.0;
    cfg.points = 48;
    cfg.energy = e;
    cfg.diagnostics = false;
    const LightconeSetup st = build_lightcone_setup(cfg);
    const RmeConstants c = rme_constants(st.generator, st.dxe.op, 2);
    for (int k = 1; k <= 3; ++k) EXPECT_TRUE(std::isfinite(c.M(k)));
    mus.push_back(c.mu);
  }
  // Larger windows admit more kinetic energy, so the constants grow but stay bounded.
  EXPECT_LE(mus[0], mus[1]);
  EXPECT_LE(mus[1], mus[2]);
  EXPECT_LT(mus[2], 1e6);
}

TEST(Expansion, CommutingOperandVanishes) {
  const Grid grid(1, 5.0, 20);
  const HermitianOperator phi = position(grid);
  RealVector d(20);
  for (int i = 0; i < 20; ++i) d(i) = std::cos(i);
  const Matrix a = HermitianOperator::diagonal(d).matrix();
  const CommutatorExpansion e = commutator_expansion(a, phi, functions::bump(0.0, 8.0), 4.0, 0.0, 2);
  EXPECT_LE(e.exact_norm, 1e-14);
  EXPECT_LE(e.rem_left_norm + e.rem_right_norm, 1e-12);
}

TEST(Expansion, ErrorScalingAndStableConstant) {
  const Grid grid(1, 10.0, 64);
  const SpectralDecomposition phi = decompose(position(grid));
  const Matrix a = well(grid).matrix();
  const ScalarFunction f = commutator_test_function(16.0);
  const std::vector<double> s{4.0, 8.0, 16.0, 32.0, 64.0};
  for (int n : {1, 2}) {
    std::vector<double> left, right, c;
    for (double si : s) {
      const CommutatorExpansion e = commutator_expansion(a, phi, f, si, 0.0, n);
      left.push_back(e.left_error);
      right.push_back(e.right_error);
      c.push_back((e.rem_left_norm + e.rem_right_norm) / e.top_norm);
    }
    EXPECT_LE(loglog_slope(s, left), -(n + 1) + 0.3) << "n = " << n;
    EXPECT_LE(loglog_slope(s, right), -(n + 1) + 0.3) << "n = " << n;
    const double cmax = *std::max_element(c.begin(), c.end()), cmin = *std::min_element(c.begin(), c.end());
    EXPECT_LE((cmax - cmin) / (cmax + cmin), 0.2) << "n = " << n;
  }
}

TEST(Expansion, ShiftMovesTheWindow) {
  const Grid grid(1, 10.0, 48);
  const HermitianOperator phi = position(grid);
  const Matrix a = well(grid).matrix();
  // f((phi - alpha)/s) with alpha pushing the bump off the lattice kills the commutator.
  const CommutatorExpansion far = commutator_expansion(a, phi, functions::bump(0.0, 1.0), 1.0, 50.0, 1);
  EXPECT_EQ(far.exact_norm, 0.0);
}

TEST(LocalizedNorms, ZeroPhi) {
  const Grid grid(1, 5.0, 20);
  const VNLGenerator gen(well(grid), make_jumps(grid, JumpRecipe::local_dephasing, 0.1).jumps);
  const LocalizedCommutatorNorms r = localized_commutator_norms(gen, HermitianOperator::zero(20), 2);
  for (double v : r.hamiltonian) EXPECT_EQ(v, 0.0);
  for (double v : r.jumps) EXPECT_EQ(v, 0.0);
}

TEST(LocalizedNorms, CutoffBelowSpectrum) {
  LightconeConfig cfg;
  cfg.halfwidth = 12.0;
  cfg.points = 48;
  const LightconeSetup st = build_lightcone_setup(cfg);
  const HermitianOperator g = apply_function_exact(st.spectrum, SmoothCutoff(st.spectrum.eigenvalues(0) - 1.0, 1.0).function());
  const HermitianOperator dx = HermitianOperator::diagonal(st.distance_values);
  const LocalizedDistance phi_e = localized_distance(g, dx);
  const LocalizedCommutatorNorms r = localized_commutator_norms(st.generator, phi_e.op, 2);
  for (double v : r.hamiltonian) EXPECT_EQ(v, 0.0);
}

LocalizedCommutatorNorms norms_at(int points) {
  LightconeConfig cfg;
  cfg.halfwidth = 12.0;
  cfg.points = points;
  cfg.diagnostics = false;
  const LightconeSetup st = build_lightcone_setup(cfg);
  return localized_commutator_norms(st.generator, st.dxe.op, 2);
}

TEST(LocalizedNorms, StableUnderRefinement) {
  const LocalizedCommutatorNorms coarse = norms_at(48), fine = norms_at(96);
  EXPECT_TRUE(refinement_stable(coarse, fine, 0.05)) << relative_change(coarse, fine);
}

TEST(LocalizedNorms, StableOnceResolved) {
  const LocalizedCommutatorNorms coarse = norms_at(144), fine = norms_at(192);
  EXPECT_TRUE(refinement_stable(coarse, fine, 0.05)) << relative_change(coarse, fine);
}

TEST(LocalizedNorms, PhiConditionViolationRaised) {
  PhiConditionReport bad;
  bad.passed = false;
  const Grid grid(1, 5.0, 20);
  const VNLGenerator gen(well(grid), JumpOperatorSet::empty(20));
  EXPECT_THROW(localized_commutator_norms(gen, position(grid), 2, bad), PhiConditionViolation);
}

}  // namespace
}  // namespace lclab
