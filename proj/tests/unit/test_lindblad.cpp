#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lclab/fit.hpp"
#include "lclab/lattice.hpp"
#include "lclab/lindblad.hpp"
#include "lclab/spectral.hpp"

namespace lclab {
namespace {

Matrix random_matrix(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Matrix g(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) g(i, j) = Complex(normal(rng), normal(rng));
  return g;
}

Matrix random_state(int n, std::mt19937_64& rng) {
  const Matrix g = random_matrix(n, rng);
  Matrix rho = hermitian_part(g * g.adjoint());
  return rho / rho.trace().real();
}

VNLGenerator small_generator(JumpRecipe recipe, double strength = 0.1) {
  const Grid grid(1, 4.0, 16);
  PotentialSpec spec;
  spec.kind = PotentialKind::gaussian_well;
  return VNLGenerator(build_hamiltonian(grid, spec), make_jumps(grid, recipe, strength).jumps);
}

TEST(Jumps, NoneIsEmpty) {
  const Grid grid(1, 4.0, 16);
  const JumpFamily f = make_jumps(grid, JumpRecipe::none, 0.5);
  EXPECT_TRUE(f.jumps.is_empty());
  const VNLGenerator gen(build_hamiltonian(grid, PotentialSpec{}), f.jumps);
  EXPECT_EQ(gen.jumps().half_sum().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Jumps, LocalDephasingIsDiagonalBump) {
  const Grid grid(1, 8.0, 33);
  JumpOptions o;
  o.centers = {0.0, 3.0};
  o.radius = 2.0;
  const double strength = 0.2;
  const JumpFamily f = make_jumps(grid, JumpRecipe::local_dephasing, strength, o);
  ASSERT_EQ(f.jumps.size(), 2u);
  Matrix p = Matrix::Zero(33, 33);
  for (std::size_t j = 0; j < 2; ++j) {
    // Peak-normalized bump: e * exp(-1/(1-u^2)).
    const ScalarFunction b = functions::bump(o.centers[j], o.radius);
    for (int i = 0; i < 33; ++i) {
      const double want = std::sqrt(strength) * std::exp(1.0) * b(grid.axis_coordinate(i));
      EXPECT_NEAR(f.jumps[j](i, i).real(), want, 1e-14);
      p(i, i) += 0.5 * want * want;
    }
    EXPECT_TRUE(f.jumps[j].isDiagonal(0.0));
  }
  EXPECT_LE((f.jumps.half_sum() - p).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Jumps, HoppingDiagnosticStableUnderRefinement) {
  const JumpFamily coarse = make_jumps(Grid(1, 10.0, 64), JumpRecipe::smoothed_hopping, 0.3);
  const JumpFamily fine = make_jumps(Grid(1, 10.0, 128), JumpRecipe::smoothed_hopping, 0.3);
  EXPECT_TRUE(std::isfinite(coarse.commutator_sum));
  EXPECT_GT(coarse.commutator_sum, 0.0);
  EXPECT_NEAR(fine.commutator_sum, coarse.commutator_sum, 0.01 * coarse.commutator_sum);
}

TEST(Jumps, DiagnosticConvergesInMeshResolution) {
  for (JumpRecipe r : {JumpRecipe::local_dephasing, JumpRecipe::smoothed_hopping}) {
    JumpOptions coarse, fine;
    fine.diagnostic_resolution = 2 * coarse.diagnostic_resolution;
    const double a = make_jumps(Grid(1, 10.0, 64), r, 0.3, coarse).commutator_sum;
    const double b = make_jumps(Grid(1, 10.0, 64), r, 0.3, fine).commutator_sum;
    EXPECT_NEAR(b, a, 1e-3 * a) << to_string(r);
  }
}

TEST(Jumps, DephasingDiagnosticOrderOneClosedForm) {
  // One window: the first order sum is max |<x> b'| with b = sqrt(s) e bump((x - c)/r).
  JumpOptions o;
  o.centers = {1.5};
  o.diagnostic_order = 1;
  const double s = 0.3, r = o.radius, c = 1.5;
  const double sum = make_jumps(Grid(1, 10.0, 64), JumpRecipe::local_dephasing, s, o).commutator_sum;
  double best = 0.0;
  for (int i = 1; i < 200000; ++i) {
    const double x = c - r + 2.0 * r * i / 200000.0, u = (x - c) / r;
    const double b = std::sqrt(s) * std::exp(1.0 - 1.0 / (1.0 - u * u));
    const double db = b * (-2.0 * u / ((1.0 - u * u) * (1.0 - u * u))) / r;
    best = std::max(best, std::abs(std::sqrt(1.0 + x * x) * db));
  }
  // Order one: binomial(1,0) ||[x, W]||^2 vanishes, binomial(1,1) ||<x>[p, W]||^2 remains.
  EXPECT_NEAR(sum, best * best, 1e-3 * best * best);
}

TEST(Lindblad, CommutingStateWithoutJumpsIsStationary) {
  const VNLGenerator gen = small_generator(JumpRecipe::none);
  const SpectralDecomposition d = decompose(gen.hamiltonian());
  RealVector w(16);
  for (int i = 0; i < 16; ++i) w(i) = 1.0 / (i + 1.0);
  const Matrix rho = d.synthesize(RealVector(w / w.sum()));
  EXPECT_LE(operator_norm(lindblad_apply(gen, rho)), 1e-12);
}

TEST(Lindblad, TracePreserving) {
  std::mt19937_64 rng(11);
  for (JumpRecipe r : {JumpRecipe::none, JumpRecipe::local_dephasing, JumpRecipe::smoothed_hopping}) {
    const VNLGenerator gen = small_generator(r, 0.3);
    for (int k = 0; k < 5; ++k) EXPECT_LE(std::abs(lindblad_apply(gen, random_state(16, rng)).trace()), 1e-12);
  }
}

TEST(Lindblad, TwoLevelHandExpansion) {
  const double gamma = 0.7;
  Matrix sz(2, 2), sx(2, 2), rho(2, 2);
  sz << 1, 0, 0, -1;
  sx << 0, 1, 1, 0;
  rho << 1, 0, 0, 0;
  const VNLGenerator gen(HermitianOperator(sz), JumpOperatorSet({std::sqrt(gamma) * sx}, 2));
  // -i[sz, |0><0|] = 0 and sx|0><0|sx - |0><0| = |1><1| - |0><0|.
  Matrix want(2, 2);
  want << -gamma, 0, 0, gamma;
  EXPECT_LE((lindblad_apply(gen, rho) - want).cwiseAbs().maxCoeff(), 1e-15);
  // Coherences: off-diagonal |0><1| rotates at 2i and decays at rate gamma.
  Matrix c(2, 2);
  c << 0, 1, 0, 0;
  Matrix want_c(2, 2);
  want_c << 0, Complex(-gamma, -2.0), gamma, 0;
  EXPECT_LE((lindblad_apply(gen, c) - want_c).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Dual, UnitalAndUnitaryLimit) {
  const VNLGenerator gen = small_generator(JumpRecipe::smoothed_hopping, 0.3);
  EXPECT_LE(operator_norm(dual_apply(gen, Matrix::Identity(16, 16))), 1e-13);
  const VNLGenerator free_gen = small_generator(JumpRecipe::none);
  std::mt19937_64 rng(5);
  const Matrix a = hermitian_part(random_matrix(16, rng));
  const Matrix& h = free_gen.hamiltonian().matrix();
  EXPECT_LE(operator_norm(dual_apply(free_gen, a) - kI * commutator(h, a)), 1e-12 * operator_norm(a) * operator_norm(h));
}

TEST(Dual, DualityIdentity) {
  std::mt19937_64 rng(17);
  for (JumpRecipe r : {JumpRecipe::local_dephasing, JumpRecipe::smoothed_hopping}) {
    const VNLGenerator gen = small_generator(r, 0.3);
    for (int k = 0; k < 10; ++k) {
      const Matrix a = hermitian_part(random_matrix(16, rng));
      const Matrix rho = random_state(16, rng);
      const Complex lhs = (a * lindblad_apply(gen, rho)).trace();
      const Complex rhs = (dual_apply(gen, a) * rho).trace();
      EXPECT_LE(std::abs(lhs - rhs), 1e-11 * std::max(1.0, operator_norm(a)));
    }
  }
}

TEST(Propagate, EigenprojectionIsStationary) {
  const VNLGenerator gen = small_generator(JumpRecipe::none);
  const SpectralDecomposition d = decompose(gen.hamiltonian());
  const DensityMatrix rho0 = DensityMatrix::pure(d.eigenvectors.col(2));
  for (PropagatorMethod m : {PropagatorMethod::rk4, PropagatorMethod::trotter, PropagatorMethod::superop_exact}) {
    PropagatorConfig cfg;
    cfg.method = m;
    cfg.dt = 1e-3;
    cfg.samples = 5;
    for (const auto& s : propagate(gen, rho0, 1.0, cfg))
      EXPECT_LE(trace_norm(s.state.matrix() - rho0.matrix()), 1e-9) << to_string(m) << " t=" << s.t;
  }
}

TEST(Propagate, TraceConservedByRk4AndExact) {
  const VNLGenerator gen = small_generator(JumpRecipe::local_dephasing);
  std::mt19937_64 rng(2);
  const DensityMatrix rho0(random_state(16, rng));
  for (PropagatorMethod m : {PropagatorMethod::rk4, PropagatorMethod::superop_exact}) {
    PropagatorConfig cfg;
    cfg.method = m;
    cfg.dt = 1e-2;
    cfg.samples = 11;
    for (const auto& s : propagate(gen, rho0, 2.0, cfg)) {
      EXPECT_LE(std::abs(s.state.trace() - 1.0), 1e-8);
      EXPECT_GE(s.state.min_eigenvalue(), -1e-6);
    }
  }
}

TEST(Propagate, Rk4MatchesOracleAndTrotterConvergesFirstOrder) {
  const VNLGenerator gen = small_generator(JumpRecipe::local_dephasing);
  std::mt19937_64 rng(3);
  const DensityMatrix rho0(random_state(16, rng));
  PropagatorConfig cfg;
  cfg.samples = 2;
  cfg.method = PropagatorMethod::superop_exact;
  const Matrix exact = propagate(gen, rho0, 1.0, cfg).back().state.matrix();
  cfg.method = PropagatorMethod::rk4;
  cfg.dt = 1e-3;
  EXPECT_LE(trace_norm(propagate(gen, rho0, 1.0, cfg).back().state.matrix() - exact), 1e-6);
  cfg.method = PropagatorMethod::trotter;
  std::vector<double> steps, errors;
  for (int n : {50, 100, 200, 400}) {
    cfg.n_steps = n;
    steps.push_back(n);
    errors.push_back(trace_norm(propagate_unchecked(gen, rho0.matrix(), 1.0, cfg).back().state - exact));
  }
  EXPECT_NEAR(loglog_slope(steps, errors), -1.0, 0.2);
}

TEST(DualPropagate, IdentityFixed) {
  const VNLGenerator gen = small_generator(JumpRecipe::smoothed_hopping, 0.3);
  PropagatorConfig cfg;
  cfg.samples = 4;
  for (const auto& s : dual_propagate(gen, Matrix::Identity(16, 16), 1.0, cfg))
    EXPECT_LE(operator_norm(s.state - Matrix::Identity(16, 16)), 1e-10);
}

TEST(DualPropagate, FlowDuality) {
  const VNLGenerator gen = small_generator(JumpRecipe::local_dephasing);
  std::mt19937_64 rng(23);
  const Matrix a = hermitian_part(random_matrix(16, rng));
  const DensityMatrix rho0(random_state(16, rng));
  PropagatorConfig cfg;
  cfg.samples = 2;
  const Matrix at = dual_propagate(gen, a, 1.0, cfg).back().state;
  const Matrix rt = propagate(gen, rho0, 1.0, cfg).back().state.matrix();
  EXPECT_LE(std::abs((at * rho0.matrix()).trace() - (a * rt).trace()), 1e-8);
}

TEST(DualPropagate, UnitaryConjugationWithoutJumps) {
  const VNLGenerator gen = small_generator(JumpRecipe::none);
  std::mt19937_64 rng(29);
  const Matrix a = hermitian_part(random_matrix(16, rng));
  const SpectralDecomposition d = decompose(gen.hamiltonian());
  const double t = 0.7;
  ComplexVector phase(16);
  for (int i = 0; i < 16; ++i) phase(i) = std::exp(Complex(0.0, d.eigenvalues(i) * t));
  const Matrix u = d.synthesize(phase);  // e^{iHt}
  PropagatorConfig cfg;
  cfg.samples = 2;
  const Matrix at = dual_propagate(gen, a, t, cfg).back().state;
  EXPECT_LE(operator_norm(at - u * a * u.adjoint()), 1e-8);
}

TEST(Propagate, OracleSizeCap) {
  const Grid grid(1, 10.0, 65);
  const VNLGenerator gen(build_hamiltonian(grid, PotentialSpec{}), JumpOperatorSet::empty(65));
  PropagatorConfig cfg;
  cfg.method = PropagatorMethod::superop_exact;
  EXPECT_THROW(propagate(gen, DensityMatrix::pure(ComplexVector::Ones(65)), 0.1, cfg), OracleSizeExceeded);
}

}  // namespace
}  // namespace lclab
