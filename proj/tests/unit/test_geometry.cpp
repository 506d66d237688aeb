#include <gtest/gtest.h>

#include <cmath>

#include "lclab/geometry.hpp"
#include "lclab/spectral.hpp"

namespace lclab {
namespace {

std::vector<std::array<double, 2>> line_samples(double lo, double hi, int count) {
  std::vector<std::array<double, 2>> out;
  for (int i = 0; i < count; ++i) out.push_back({lo + (hi - lo) * (i + 0.5) / count, 0.0});
  return out;
}

TEST(SmoothedDistance, VanishesOnRegion) {
  const SmoothedDistance d(RegionSpec::intervals({{-1.0, 1.0}}), 0.5);
  for (double x = -1.0; x <= 1.0; x += 0.05) EXPECT_EQ(d(x), 0.0);
  const SmoothedDistance d2(RegionSpec::boxes({Box{{-1.0, -2.0}, {1.0, 2.0}}}), 0.5);
  EXPECT_EQ(d2(0.5, -1.5), 0.0);
}

TEST(SmoothedDistance, FarFromRegionIsShiftedDistance) {
  const double eps0 = 0.5;
  const SmoothedDistance d(RegionSpec::intervals({{-1.0, 1.0}}), eps0);
  EXPECT_NEAR(d.delta(5.0), 4.0, 0.25 * eps0);
  EXPECT_NEAR(d(5.0), d.delta(5.0) - eps0, 1e-14);
}

TEST(SmoothedDistance, ComparableToTrueDistance) {
  const double eps0 = 0.5;
  const RegionSpec region = RegionSpec::intervals({{-1.0, 1.0}, {3.0, 4.0}});
  const auto samples = line_samples(-10.0, 12.0, 1000);
  const auto [d, bounds] = smoothed_distance(region, eps0, samples, 2);
  EXPECT_EQ(bounds.samples, 1000);
  // Mollification at radius eps0/4 moves a 1-Lipschitz function by at most eps0/4.
  for (const auto& p : samples) EXPECT_LE(std::abs(d.delta(p[0]) - region.distance(p[0])), 0.25 * eps0 + 1e-12);
  EXPECT_GT(bounds.c1, 0.0);
  EXPECT_LE(bounds.c2, 2.0);
  for (const auto& p : samples) {
    const double dist = region.distance(p[0]);
    if (dist < d.mollifier_radius()) continue;
    EXPECT_GE(d.delta(p[0]), bounds.c1 * dist * (1.0 - 1e-12));
    EXPECT_LE(d.delta(p[0]), bounds.c2 * dist * (1.0 + 1e-12));
  }
}

TEST(SmoothedDistance, DerivativeLimitsEnforced) {
  const RegionSpec region = RegionSpec::intervals({{-1.0, 1.0}});
  const auto samples = line_samples(-6.0, 6.0, 200);
  EXPECT_THROW(smoothed_distance(region, 0.5, samples, 2, std::vector<double>{kInf, 1e-3}), ConstructionFailure);
}

TEST(Astlo, Endpoints) {
  const AstloFunction chi = astlo(2.0);
  EXPECT_EQ(chi(-1.0), 0.0);
  EXPECT_EQ(chi(2.0), 1.0);
}

TEST(Astlo, DerivativeNonnegativeAndSupported) {
  const double delta = 2.0;
  const AstloFunction chi = astlo(delta);
  for (double mu = -1.0; mu <= 3.0; mu += 1e-3) {
    const double d = chi.derivative(mu, 1);
    EXPECT_GE(d, 0.0);
    if (mu <= 0.0 || mu >= 0.5 * delta) {
      EXPECT_EQ(d, 0.0) << mu;
    }
    // sqrt(chi') is carried explicitly and squares back to chi'.
    EXPECT_NEAR(std::pow(chi.root_derivative()(mu), 2), d, 1e-12);
  }
}

TEST(Astlo, DerivativeIntegratesToOne) {
  const AstloFunction chi = astlo(2.0);
  // Composite Simpson over the derivative support.
  const int n = 200000;
  const double a = 0.0, b = 1.0, h = (b - a) / n;
  double s = chi.derivative(a, 1) + chi.derivative(b, 1);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * chi.derivative(a + i * h, 1);
  EXPECT_NEAR(s * h / 3.0, 1.0, 1e-8);
}

TEST(AstloCombine, SingleInputUnchanged) {
  const AstloFunction chi = astlo(2.0);
  const AstloFunction xi = astlo_combine({chi});
  for (double mu = -0.5; mu <= 2.5; mu += 0.1) EXPECT_EQ(xi(mu), chi(mu));
}

TEST(AstloCombine, IdenticalInputsQuadruple) {
  const AstloFunction chi = astlo(2.0);
  const AstloFunction xi = astlo_combine({chi, chi});
  for (double mu = -0.5; mu <= 2.5; mu += 0.01) EXPECT_NEAR(xi(mu), 4.0 * chi(mu), 1e-12);
}

TEST(AstloCombine, DominatesSumAndStaysInClass) {
  const double delta = 4.0;
  const AstloFunction a = astlo_on(delta, 0.2, 1.0), b = astlo_on(delta, 0.8, 1.8);
  const AstloFunction xi = astlo_combine({a, b});
  for (int i = 0; i <= 10000; ++i) {
    const double mu = -1.0 + 6.0 * i / 10000.0;
    EXPECT_LE(a(mu) + b(mu), xi(mu) * (1.0 + 1e-12) + 1e-15);
    const double d = xi.derivative(mu, 1);
    EXPECT_GE(d, -1e-15);
    if (mu <= 0.0 || mu >= 0.5 * delta) {
      EXPECT_EQ(d, 0.0);
    }
  }
  EXPECT_EQ(xi(-1.0), 0.0);
}

TEST(MultiplicationOperator, ConstantAndCoveringRegion) {
  const Grid grid(1, 5.0, 21);
  EXPECT_EQ((as_multiplication_operator(functions::constant(1.0), grid).matrix() - Matrix::Identity(21, 21))
                .cwiseAbs()
                .maxCoeff(),
            0.0);
  const SmoothedDistance whole(RegionSpec::intervals({{-5.0, 5.0}}), 0.5);
  EXPECT_EQ(as_multiplication_operator(whole, grid).matrix().cwiseAbs().maxCoeff(), 0.0);
}

TEST(MultiplicationOperator, SpectrumIsSampledRange) {
  const Grid grid(1, 5.0, 21);
  const ScalarFunction f = functions::bump(1.0, 3.0);
  const RealVector ev = decompose(as_multiplication_operator(f, grid)).eigenvalues;
  double lo = kInf, hi = -kInf;
  for (int i = 0; i < grid.sites(); ++i) {
    lo = std::min(lo, f(grid.axis_coordinate(i)));
    hi = std::max(hi, f(grid.axis_coordinate(i)));
  }
  EXPECT_NEAR(ev(0), lo, 1e-15);
  EXPECT_NEAR(ev(ev.size() - 1), hi, 1e-15);
}

TEST(Heaviside, TrivialBeyondFront) {
  const Grid grid(1, 8.0, 64);
  const SmoothedDistance d(RegionSpec::intervals({{-1.0, 1.0}}), 0.5);
  const double c = 2.0, v = 1.5;
  const AuxCutoffPair aux = aux_cutoff_pair(SmoothCutoff(4.0, 2.0), c - v);
  EXPECT_TRUE(heaviside_comparison_check(aux.chi_tilde, d, grid, c, v, 10.0));
}

TEST(Heaviside, HoldsWithMatchedDelta) {
  const double c = 2.0, v = 1.5;
  const AuxCutoffPair aux = aux_cutoff_pair(SmoothCutoff(4.0, 2.0), c - v);
  std::vector<double> distances;
  for (int i = 0; i < 10000; ++i) distances.push_back(30.0 * i / 9999.0);
  for (double t : {0.5, 1.0, 3.0, 7.0}) EXPECT_TRUE(heaviside_comparison_check(aux.chi_tilde, distances, c, v, t));
}

TEST(Heaviside, DetectsOversizedDelta) {
  const double c = 2.0, v = 1.5, t = 2.0;
  const AuxCutoffPair aux = aux_cutoff_pair(SmoothCutoff(4.0, 2.0), 3.0 * (c - v));
  // At d = c t the step is on but chi~ is still rising.
  EXPECT_FALSE(heaviside_comparison_check(aux.chi_tilde, std::vector<double>{c * t}, c, v, t));
}

}  // namespace
}  // namespace lclab
