#pragma once

#include <complex>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "lclab/errors.hpp"

namespace lclab {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using RealVector = Eigen::VectorXd;
using ComplexVector = Eigen::VectorXcd;

inline constexpr Complex kI{0.0, 1.0};

/// Largest singular value.
inline double operator_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::BDCSVD<Matrix> svd(m);
  return svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
}

/// Sum of singular values.
inline double trace_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::BDCSVD<Matrix> svd(m);
  return svd.singularValues().sum();
}

inline Matrix commutator(const Matrix& a, const Matrix& b) { return a * b - b * a; }
inline Matrix anticommutator(const Matrix& a, const Matrix& b) { return a * b + b * a; }

inline Matrix hermitian_part(const Matrix& m) { return 0.5 * (m + m.adjoint()); }

/// Frobenius-norm Hermiticity residual relative to 1 + ||m||_F.
inline double hermiticity_defect(const Matrix& m) {
  return (m - m.adjoint()).norm() / (1.0 + m.norm());
}

/// Smallest eigenvalue of the Hermitian part.
inline double min_eigenvalue(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(hermitian_part(m), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalFailure("min_eigenvalue: eigensolver failed");
  return es.eigenvalues()(0);
}

/// A square complex matrix certified Hermitian at construction.
class HermitianOperator {
 public:
  HermitianOperator() = default;

  explicit HermitianOperator(Matrix m, std::string label = {}) : m_(std::move(m)), label_(std::move(label)) {
    require(m_.rows() == m_.cols(), "HermitianOperator: matrix must be square");
    if (hermiticity_defect(m_) > 1e-12)
      throw InvalidArgument("HermitianOperator '" + label_ + "': matrix is not Hermitian");
  }

  /// Symmetrizes (A + A*)/2 before certifying.
  static HermitianOperator symmetrized(const Matrix& m, std::string label = {}) {
    return HermitianOperator(hermitian_part(m), std::move(label));
  }

  static HermitianOperator diagonal(const RealVector& d, std::string label = {}) {
    return HermitianOperator(d.cast<Complex>().asDiagonal().toDenseMatrix(), std::move(label));
  }

  static HermitianOperator identity(Eigen::Index n, std::string label = "identity") {
    return HermitianOperator(Matrix::Identity(n, n), std::move(label));
  }

  static HermitianOperator zero(Eigen::Index n, std::string label = "zero") {
    return HermitianOperator(Matrix::Zero(n, n), std::move(label));
  }

  const Matrix& matrix() const { return m_; }
  const std::string& label() const { return label_; }
  Eigen::Index dim() const { return m_.rows(); }
  double norm() const { return operator_norm(m_); }

  HermitianOperator with_label(std::string l) const {
    HermitianOperator r = *this;
    r.label_ = std::move(l);
    return r;
  }

  friend HermitianOperator operator+(const HermitianOperator& a, const HermitianOperator& b) {
    if (a.dim() != b.dim()) throw DimensionMismatch("HermitianOperator sum: dimension mismatch");
    return HermitianOperator(a.m_ + b.m_, a.label_ + "+" + b.label_);
  }

 private:
  Matrix m_;
  std::string label_;
};

}  // namespace lclab
