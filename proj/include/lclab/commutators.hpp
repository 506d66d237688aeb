#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "lclab/errors.hpp"
#include "lclab/lindblad.hpp"
#include "lclab/linalg.hpp"
#include "lclab/scalar_function.hpp"
#include "lclab/spectral.hpp"

namespace lclab {

/// Iterated commutators B_k = ad^k_phi(A), B_{k+1} = phi B_k - B_k phi.
class CommutatorLadder {
 public:
  CommutatorLadder(const HermitianOperator& phi, Matrix a, int kmax) : phi_(phi) {
    require(kmax >= 0, "adjoint_ladder: kmax must be >= 0");
    if (a.rows() != phi.dim() || a.cols() != phi.dim())
      throw DimensionMismatch("adjoint_ladder: operand dimension differs from phi");
    terms_.reserve(static_cast<std::size_t>(kmax) + 1);
    terms_.push_back(std::move(a));
    for (int k = 1; k <= kmax; ++k) terms_.push_back(commutator(phi.matrix(), terms_.back()));
    norms_.reserve(terms_.size());
    for (const auto& b : terms_) norms_.push_back(operator_norm(b));
  }

  int max_order() const { return static_cast<int>(terms_.size()) - 1; }
  const HermitianOperator& phi() const { return phi_; }
  const Matrix& operand() const { return terms_.front(); }
  const Matrix& term(int k) const { return terms_.at(static_cast<std::size_t>(k)); }
  double norm(int k) const { return norms_.at(static_cast<std::size_t>(k)); }

 private:
  HermitianOperator phi_;
  std::vector<Matrix> terms_;
  std::vector<double> norms_;
};

inline CommutatorLadder adjoint_ladder(const HermitianOperator& phi, const Matrix& a, int kmax) {
  return CommutatorLadder(phi, a, kmax);
}

/// M_k for k = 1..n+1 and mu_n = max_{2<=k<=n+1} M_k.
struct RmeConstants {
  int n = 1;
  std::vector<double> m;                 // m[k-1] = M_k
  std::vector<double> hamiltonian_norm;  // ||ad^k H||
  std::vector<double> jump_sum;          // sum_j ||ad^k W_j||^2
  double dissipation_norm = 0.0;         // ||sum W*W||
  double mu = 1.0;

  double M(int k) const { return m.at(static_cast<std::size_t>(k - 1)); }
};

inline RmeConstants rme_constants(const VNLGenerator& gen, const HermitianOperator& phi, int n) {
  require(n >= 1, "rme_constants: n must be >= 1");
  if (phi.dim() != gen.dim()) throw DimensionMismatch("rme_constants: phi dimension differs from generator");
  RmeConstants r;
  r.n = n;
  r.dissipation_norm = operator_norm(2.0 * gen.jumps().half_sum());
  const CommutatorLadder h_ladder(phi, gen.hamiltonian().matrix(), n + 1);
  std::vector<CommutatorLadder> w_ladders;
  for (const auto& w : gen.jumps().operators()) w_ladders.emplace_back(phi, w, n + 1);
  for (int k = 1; k <= n + 1; ++k) {
    double js = 0.0;
    for (const auto& l : w_ladders) js += l.norm(k) * l.norm(k);
    const double hn = h_ladder.norm(k);
    r.hamiltonian_norm.push_back(hn);
    r.jump_sum.push_back(js);
    r.m.push_back(1.0 + hn * hn + r.dissipation_norm + js);
  }
  r.mu = 0.0;
  for (int k = 2; k <= n + 1; ++k) r.mu = std::max(r.mu, r.M(k));
  return r;
}

/// Exact [A, f_s] with f_s = f((phi - alpha)/s), both partial sums of the commutator
/// expansion to order n, and the remainders isolated by subtraction.
struct CommutatorExpansion {
  double s = 1.0;
  int n = 1;
  Matrix exact;
  Matrix left_sum;
  Matrix right_sum;
  Matrix rem_left;
  Matrix rem_right;
  double exact_norm = 0.0;
  double left_error = 0.0;   // ||[A,f_s] - left_sum||
  double right_error = 0.0;  // ||[A,f_s] - right_sum||
  double rem_left_norm = 0.0;
  double rem_right_norm = 0.0;
  double top_norm = 0.0;     // ||B_{n+1}||
};

inline CommutatorExpansion commutator_expansion(const Matrix& a, const SpectralDecomposition& phi_dec,
                                                const ScalarFunction& f, double s, double alpha, int n) {
  require(s > 0.0, "commutator_expansion: s must be positive");
  require(n >= 1, "commutator_expansion: n must be >= 1");
  const Eigen::Index dim = phi_dec.dim();
  if (a.rows() != dim || a.cols() != dim) throw DimensionMismatch("commutator_expansion: dimension mismatch");

  const HermitianOperator phi(phi_dec.synthesize(phi_dec.eigenvalues), "phi");
  const CommutatorLadder ladder(phi, a, n + 1);

  // f^{(k)}((lambda - alpha)/s) for k = 0..n in the eigenbasis of phi.
  std::vector<RealVector> diag(static_cast<std::size_t>(n) + 1, RealVector(dim));
  for (Eigen::Index i = 0; i < dim; ++i) {
    const Jet j = f.jet((phi_dec.eigenvalues(i) - alpha) / s, n);
    double fact = 1.0;
    for (int k = 0; k <= n; ++k) {
      if (k > 0) fact *= k;
      diag[static_cast<std::size_t>(k)](i) = j[k] * fact;
    }
  }
  std::vector<Matrix> fk;
  fk.reserve(diag.size());
  for (const auto& d : diag) fk.push_back(phi_dec.synthesize(d));

  CommutatorExpansion r;
  r.s = s;
  r.n = n;
  r.exact = commutator(a, fk[0]);
  r.left_sum = Matrix::Zero(dim, dim);
  r.right_sum = Matrix::Zero(dim, dim);
  double coef = 1.0;
  for (int k = 1; k <= n; ++k) {
    coef /= s * k;
    const Matrix& bk = ladder.term(k);
    r.left_sum -= coef * bk * fk[static_cast<std::size_t>(k)];
    r.right_sum += (k % 2 == 0 ? coef : -coef) * fk[static_cast<std::size_t>(k)] * bk;
  }
  const double scale = std::pow(s, n + 1);
  r.rem_left = -scale * (r.exact - r.left_sum);
  r.rem_right = ((n + 1) % 2 == 0 ? scale : -scale) * (r.exact - r.right_sum);
  r.exact_norm = operator_norm(r.exact);
  r.left_error = operator_norm(r.exact - r.left_sum);
  r.right_error = operator_norm(r.exact - r.right_sum);
  r.rem_left_norm = operator_norm(r.rem_left);
  r.rem_right_norm = operator_norm(r.rem_right);
  r.top_norm = ladder.norm(n + 1);
  return r;
}

inline CommutatorExpansion commutator_expansion(const Matrix& a, const HermitianOperator& phi, const ScalarFunction& f,
                                                double s, double alpha, int n) {
  return commutator_expansion(a, decompose(phi), f, s, alpha, n);
}

/// Samples <x>^{k-1} |phi^{(k)}(x)| for 1 <= k <= order and reports the worst value.
struct PhiConditionReport {
  double worst = 0.0;
  int worst_order = 0;
  double bound = kInf;
  bool passed = true;
};

inline PhiConditionReport check_phi_condition(const std::function<Jet(double, int)>& phi_jet,
                                              const std::vector<double>& samples, int order, double bound) {
  require(order >= 1, "check_phi_condition: order must be >= 1");
  PhiConditionReport r;
  r.bound = bound;
  for (double x : samples) {
    const Jet j = phi_jet(x, order);
    double fact = 1.0;
    for (int k = 1; k <= order; ++k) {
      fact *= k;
      const double v = std::pow(japanese_bracket(x), k - 1) * std::abs(j[k] * fact);
      if (v > r.worst) {
        r.worst = v;
        r.worst_order = k;
      }
    }
  }
  r.passed = r.worst <= bound;
  return r;
}

/// ||ad^k_phiE(H)|| and sum_j ||ad^k_phiE(W_j)||^2 for k = 1..n+1.
struct LocalizedCommutatorNorms {
  int n = 1;
  std::vector<double> hamiltonian;
  std::vector<double> jumps;
  PhiConditionReport phi_condition;
};

inline LocalizedCommutatorNorms localized_commutator_norms(const VNLGenerator& gen, const HermitianOperator& phi_e,
                                                           int n, const PhiConditionReport& phi_condition = {}) {
  require(n >= 1, "localized_commutator_norms: n must be >= 1");
  if (!phi_condition.passed)
    throw PhiConditionViolation("localized_commutator_norms: sampled derivative bound " +
                                std::to_string(phi_condition.worst) + " at order " +
                                std::to_string(phi_condition.worst_order) + " exceeds " +
                                std::to_string(phi_condition.bound));
  const RmeConstants c = rme_constants(gen, phi_e, n);
  return {n, c.hamiltonian_norm, c.jump_sum, phi_condition};
}

/// Largest relative change between two norm tables; values below floor count as equal.
inline double relative_change(const LocalizedCommutatorNorms& coarse, const LocalizedCommutatorNorms& fine,
                              double floor = 1e-12) {
  double worst = 0.0;
  auto cmp = [&](const std::vector<double>& a, const std::vector<double>& b) {
    for (std::size_t k = 0; k < std::min(a.size(), b.size()); ++k) {
      const double scale = std::max(std::abs(a[k]), std::abs(b[k]));
      if (scale <= floor) continue;
      worst = std::max(worst, std::abs(a[k] - b[k]) / scale);
    }
  };
  cmp(coarse.hamiltonian, fine.hamiltonian);
  cmp(coarse.jumps, fine.jumps);
  return worst;
}

inline bool refinement_stable(const LocalizedCommutatorNorms& coarse, const LocalizedCommutatorNorms& fine,
                              double tolerance = 0.05) {
  return relative_change(coarse, fine) < tolerance;
}

}  // namespace lclab
