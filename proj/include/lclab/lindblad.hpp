#pragma once

// Lindblad generator, its dual, and three propagators.
//
// With K = -iH - P and P = (1/2) sum W*W the generator reads
//   L(rho)  = K rho + rho K* + sum W rho W*
//   L'(A)   = K* A + A K + sum W* A W

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "lclab/errors.hpp"
#include "lclab/lattice.hpp"
#include "lclab/linalg.hpp"
#include "lclab/quadrature.hpp"
#include "lclab/scalar_function.hpp"

namespace lclab {

inline constexpr int kMaxJumps = 16;

/// Finite family of bounded jump operators.
class JumpOperatorSet {
 public:
  JumpOperatorSet() = default;

  JumpOperatorSet(std::vector<Matrix> ops, Eigen::Index dim) : ops_(std::move(ops)), dim_(dim) {
    require(static_cast<int>(ops_.size()) <= kMaxJumps,
            "JumpOperatorSet: at most " + std::to_string(kMaxJumps) + " operators");
    diagonal_ = true;
    for (const Matrix& w : ops_) {
      if (w.rows() != dim_ || w.cols() != dim_) throw DimensionMismatch("JumpOperatorSet: operator size mismatch");
      if (!w.allFinite()) throw InvalidArgument("JumpOperatorSet: non-finite entries");
      if (!w.isDiagonal(0.0)) diagonal_ = false;
    }
    Matrix sum = Matrix::Zero(dim_, dim_);
    for (const Matrix& w : ops_) sum.noalias() += w.adjoint() * w;
    half_sum_ = 0.5 * hermitian_part(sum);
    if (diagonal_) {
      hadamard_ = Matrix::Zero(dim_, dim_);
      for (const Matrix& w : ops_) {
        const ComplexVector d = w.diagonal();
        hadamard_.noalias() += d * d.adjoint();
      }
    }
  }

  static JumpOperatorSet empty(Eigen::Index dim) { return JumpOperatorSet({}, dim); }

  std::size_t size() const { return ops_.size(); }
  bool is_empty() const { return ops_.empty(); }
  Eigen::Index dim() const { return dim_; }
  const std::vector<Matrix>& operators() const { return ops_; }
  const Matrix& operator[](std::size_t j) const { return ops_[j]; }
  /// P = (1/2) sum W*W.
  const Matrix& half_sum() const { return half_sum_; }
  bool all_diagonal() const { return diagonal_; }

  /// rho -> sum W rho W*.
  Matrix sandwich(const Matrix& rho) const {
    if (ops_.empty()) return Matrix::Zero(rho.rows(), rho.cols());
    if (diagonal_) return hadamard_.cwiseProduct(rho);
    Matrix out = Matrix::Zero(rho.rows(), rho.cols());
    for (const Matrix& w : ops_) out.noalias() += w * rho * w.adjoint();
    return out;
  }

  /// A -> sum W* A W.
  Matrix dual_sandwich(const Matrix& a) const {
    if (ops_.empty()) return Matrix::Zero(a.rows(), a.cols());
    if (diagonal_) return hadamard_.conjugate().cwiseProduct(a);
    Matrix out = Matrix::Zero(a.rows(), a.cols());
    for (const Matrix& w : ops_) out.noalias() += w.adjoint() * a * w;
    return out;
  }

 private:
  std::vector<Matrix> ops_;
  Eigen::Index dim_ = 0;
  Matrix half_sum_;
  Matrix hadamard_;
  bool diagonal_ = true;
};

enum class JumpRecipe { none, local_dephasing, smoothed_hopping };

inline std::string to_string(JumpRecipe r) {
  switch (r) {
    case JumpRecipe::none: return "none";
    case JumpRecipe::local_dephasing: return "local_dephasing";
    case JumpRecipe::smoothed_hopping: return "smoothed_hopping";
  }
  return "?";
}

inline JumpRecipe jump_recipe_from_string(const std::string& s) {
  if (s == "none") return JumpRecipe::none;
  if (s == "local_dephasing") return JumpRecipe::local_dephasing;
  if (s == "smoothed_hopping") return JumpRecipe::smoothed_hopping;
  throw InvalidArgument("unknown jump recipe '" + s + "'");
}

struct JumpOptions {
  int count = 4;
  double radius = 2.0;       // bump window radius
  double displacement = 1.0; // hopping distance
  double kernel_width = 1.0; // hopping kernel radius
  /// Bump centers along the first axis; evenly spread over [-L/2, L/2] when empty.
  std::vector<double> centers;
  int diagnostic_order = 3;  // total commutator order (n + 1)
  int diagnostic_resolution = 32;  // mesh points per window radius or kernel width
};

struct JumpFamily {
  JumpOperatorSet jumps;
  /// Weighted commutator sum of the family, see jump_commutator_sum.
  double commutator_sum = 0.0;
  int order = 0;
};

namespace detail {

inline std::vector<double> jump_centers(const Grid& grid, const JumpOptions& o) {
  if (!o.centers.empty()) return o.centers;
  std::vector<double> c;
  const double a = 0.5 * grid.halfwidth();
  for (int j = 0; j < o.count; ++j) c.push_back(o.count == 1 ? 0.0 : -a + 2.0 * a * j / (o.count - 1));
  return c;
}

inline Jet truncated(const Jet& j, int order) {
  Jet out(0.0, order);
  for (int k = 0; k <= order; ++k) out[k] = j[k];
  return out;
}

inline Jet differentiated(const Jet& j) {
  Jet out(0.0, j.order() - 1);
  for (int k = 0; k < j.order(); ++k) out[k] = (k + 1) * j[k + 1];
  return out;
}

// Values of c_0 = b, c_{k+1} = w c_k' at the expansion point, from jets of b
// and w of order at least kmax.
inline std::vector<double> weighted_derivatives(const Jet& b, const Jet& w, int kmax) {
  std::vector<double> out{b[0]};
  Jet c = truncated(b, kmax);
  for (int k = 1; k <= kmax; ++k) {
    c = truncated(w, c.order() - 1) * differentiated(c);
    out.push_back(c[0]);
  }
  return out;
}

inline double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Peak-one bump window, a product over the axes so that derivatives along
// one axis only touch one factor.
inline Jet window_jet(double center, double radius, const Jet& u) {
  return std::exp(1.0) * unit_bump((u - center) / radius);
}

inline double window_value(const Grid& grid, double center, double radius, const std::array<double, 2>& p) {
  double v = window_jet(center, radius, Jet(p[0], 0)).value();
  if (grid.dimension() == 2) v *= window_jet(0.0, radius, Jet(p[1], 0)).value();
  return v;
}

// (K psi)(x) = sum_y k(x - a e_1 - y) psi(y) h^d with k a bump of unit mass.
inline Matrix hopping_kernel(const Grid& grid, double displacement, double width) {
  require(width > 0.0, "make_jumps: kernel width must be positive");
  const ScalarFunction k1 = functions::bump(0.0, width);
  const std::vector<double> br = quad::uniform_breaks(-width, width, 16);
  const double mass = quad::composite<double>([&](double u) { return k1(u); }, std::span<const double>(br), 16);
  const double cell = std::pow(grid.spacing(), grid.dimension());
  const int n = grid.sites();
  Matrix k = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const auto pi = grid.point(i);
    for (int j = 0; j < n; ++j) {
      const auto pj = grid.point(j);
      double kv = k1(pi[0] - displacement - pj[0]) / mass;
      if (grid.dimension() == 2) kv *= k1(pi[1] - pj[1]) / mass;
      k(i, j) = kv * cell;
    }
  }
  return k;
}

}  // namespace detail

/// Shape of one jump operator: W = amp * b(x) * T, with b a bump window and
/// T either the identity or a convolution by the normalized hopping kernel.
struct JumpShape {
  double center = 0.0;
  double radius = 1.0;
  double amplitude = 0.0;
  bool hopping = false;
  double displacement = 0.0;
  double kernel_width = 1.0;
};

/// Finite analogue of the weighted commutator summability condition: the sum
/// over the family and the axes q of ||word(W_j)||^2 over all words of length
/// `order` in B -> <x>[p_q, B] and B -> [x_q, B].
///
/// The commutators are taken in the continuum. A word with k momentum letters
/// and m position letters maps the kernel b(x) K(x - y) to
/// c_k(x) (x_q - y_q)^m K(x - y) with c_k = (<x> d_q)^k b, because d_x + d_y
/// annihilates functions of x - y. Commutators with a lattice momentum
/// converge only at first order in the spacing, so the kernels are sampled on
/// a mesh of `resolution` points per window radius or kernel width, whichever
/// is finer, rather than on the lattice. Multiplication kernels reduce to
/// sup |c_k|, refined around the best sample; convolution kernels use the Nystrom norm. In two dimensions the
/// normalized transverse kernel has unit norm and the sup over the transverse
/// coordinate of the one-dimensional norm is reported.
inline double jump_commutator_sum(int dimension, const std::vector<JumpShape>& shapes, int order, int resolution = 32) {
  require(order >= 0, "jump_commutator_sum: order must be >= 0");
  require(dimension == 1 || dimension == 2, "jump_commutator_sum: dimension must be 1 or 2");
  require(resolution >= 4, "jump_commutator_sum: resolution must be >= 4");
  auto mesh = [](double lo, double hi, double step) {
    const int m = static_cast<int>(std::ceil((hi - lo) / step));
    std::vector<double> u(static_cast<std::size_t>(m + 1));
    for (int i = 0; i <= m; ++i) u[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / m;
    return u;
  };
  double total = 0.0;
  for (int q = 0; q < dimension; ++q) {
    for (const JumpShape& sh : shapes) {
      require(sh.radius > 0.0, "jump_commutator_sum: radius must be positive");
      const double step = (sh.hopping ? std::min(sh.radius, sh.kernel_width) : sh.radius) / resolution;
      const double cq = q == 0 ? sh.center : 0.0, co = q == 0 ? 0.0 : sh.center;
      const double shift = sh.hopping && q == 0 ? sh.displacement : 0.0;
      const std::vector<double> xs = mesh(cq - sh.radius, cq + sh.radius, step);
      const std::vector<double> os = dimension == 2 ? mesh(co - sh.radius, co + sh.radius, 4.0 * sh.radius / resolution)
                                                    : std::vector<double>{0.0};
      std::vector<double> ys;
      ScalarFunction k1;
      double mass = 1.0;
      if (sh.hopping) {
        require(sh.kernel_width > 0.0, "jump_commutator_sum: kernel width must be positive");
        ys = mesh(xs.front() - shift - sh.kernel_width, xs.back() - shift + sh.kernel_width, step);
        k1 = functions::bump(0.0, sh.kernel_width);
        const std::vector<double> br = quad::uniform_breaks(-sh.kernel_width, sh.kernel_width, 16);
        mass = quad::composite<double>([&](double u) { return k1(u); }, std::span<const double>(br), 16);
      }
      std::vector<double> norms(static_cast<std::size_t>(order + 1), 0.0);
      for (double o : os) {
        const double other = dimension == 2 ? detail::window_jet(co, sh.radius, Jet(o, 0)).value() : 1.0;
        if (other == 0.0) continue;
        auto weighted = [&](double x) {
          const Jet t = Jet::variable(x, order);
          const Jet w = sqrt(1.0 + o * o + t * t);
          return detail::weighted_derivatives(sh.amplitude * other * detail::window_jet(cq, sh.radius, t), w, order);
        };
        std::vector<std::vector<double>> c;
        for (double x : xs) c.push_back(weighted(x));
        for (int k = 0; k <= order; ++k) {
          const int m = order - k;
          const auto uk = static_cast<std::size_t>(k);
          double norm = 0.0;
          if (!sh.hopping) {
            if (m > 0) continue;
            std::size_t best = 0;
            for (std::size_t i = 0; i < c.size(); ++i)
              if (std::abs(c[i][uk]) > std::abs(c[best][uk])) best = i;
            // Golden section between the neighbours of the best sample.
            auto f = [&](double x) { return std::abs(weighted(x)[uk]); };
            double lo = xs[best == 0 ? 0 : best - 1], hi = xs[std::min(best + 1, xs.size() - 1)];
            const double g = 0.5 * (std::sqrt(5.0) - 1.0);
            double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo), f1 = f(x1), f2 = f(x2);
            for (int it = 0; it < 40; ++it) {
              if (f1 < f2) {
                lo = x1, x1 = x2, f1 = f2, x2 = lo + g * (hi - lo), f2 = f(x2);
              } else {
                hi = x2, x2 = x1, f2 = f1, x1 = hi - g * (hi - lo), f1 = f(x1);
              }
            }
            norm = std::max({std::abs(c[best][uk]), f1, f2});
          } else {
            Eigen::MatrixXd mk(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(ys.size()));
            for (std::size_t i = 0; i < xs.size(); ++i)
              for (std::size_t j = 0; j < ys.size(); ++j) {
                const double d = xs[i] - ys[j];
                mk(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    c[i][uk] * std::pow(d, m) * k1(d - shift) / mass * step;
              }
            const Eigen::MatrixXd gram = mk * mk.transpose();
            norm = std::sqrt(std::max(0.0, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram, Eigen::EigenvaluesOnly)
                                               .eigenvalues()
                                               .maxCoeff()));
          }
          norms[uk] = std::max(norms[uk], norm);
        }
      }
      for (int k = 0; k <= order; ++k)
        total += detail::binomial(order, k) * norms[static_cast<std::size_t>(k)] * norms[static_cast<std::size_t>(k)];
    }
  }
  return total;
}

/// Jump families on the grid: local dephasing by sqrt(strength) * bump
/// windows, or bump-windowed smooth translations by a fixed displacement.
/// In two dimensions the window is the product of one bump per axis.
inline JumpFamily make_jumps(const Grid& grid, JumpRecipe recipe, double strength, const JumpOptions& o = {}) {
  require(strength >= 0.0, "make_jumps: strength must be >= 0");
  const Eigen::Index n = grid.sites();
  if (recipe == JumpRecipe::none || strength == 0.0)
    return {JumpOperatorSet::empty(n), 0.0, o.diagnostic_order};
  require(o.radius > 0.0, "make_jumps: radius must be positive");
  const std::vector<double> centers = detail::jump_centers(grid, o);
  require(!centers.empty(), "make_jumps: need at least one center");
  const double amp = std::sqrt(strength);
  const bool hopping = recipe == JumpRecipe::smoothed_hopping;
  const Matrix kernel = hopping ? detail::hopping_kernel(grid, o.displacement, o.kernel_width) : Matrix();
  std::vector<Matrix> ops;
  std::vector<JumpShape> shapes;
  for (double c : centers) {
    RealVector b(n);
    for (int s = 0; s < n; ++s) b(s) = amp * detail::window_value(grid, c, o.radius, grid.point(s));
    if (hopping) ops.push_back(b.cast<Complex>().asDiagonal() * kernel);
    else ops.push_back(b.cast<Complex>().asDiagonal());
    shapes.push_back({c, o.radius, amp, hopping, o.displacement, o.kernel_width});
  }
  JumpOperatorSet set(std::move(ops), n);
  const double diag = jump_commutator_sum(grid.dimension(), shapes, o.diagnostic_order, o.diagnostic_resolution);
  return {std::move(set), diag, o.diagnostic_order};
}

/// Density matrix: Hermitian, positive semidefinite, unit trace.
class DensityMatrix {
 public:
  struct Tolerances {
    double hermiticity = 1e-10;
    double positivity = 1e-8;
    double trace = 1e-10;
  };

  explicit DensityMatrix(Matrix m) : DensityMatrix(std::move(m), Tolerances{}) {}

  DensityMatrix(Matrix m, const Tolerances& tol) : m_(std::move(m)) {
    require(m_.rows() == m_.cols() && m_.rows() > 0, "DensityMatrix: matrix must be square and nonempty");
    const double herm = (m_ - m_.adjoint()).norm();
    if (herm > tol.hermiticity) throw InvalidArgument("DensityMatrix: not Hermitian (defect " + std::to_string(herm) + ")");
    const double tr_err = std::abs(m_.trace() - Complex(1.0, 0.0));
    if (tr_err > tol.trace) throw InvalidArgument("DensityMatrix: trace differs from 1 by " + std::to_string(tr_err));
    const double lmin = lclab::min_eigenvalue(m_);
    if (lmin < -tol.positivity)
      throw PositivityDrift("DensityMatrix: minimum eigenvalue " + std::to_string(lmin));
  }

  /// |psi><psi| / <psi|psi>.
  static DensityMatrix pure(const ComplexVector& psi) {
    const double n2 = psi.squaredNorm();
    require(n2 > 0.0, "DensityMatrix::pure: zero vector");
    return DensityMatrix(psi * psi.adjoint() / n2);
  }

  const Matrix& matrix() const { return m_; }
  Eigen::Index dim() const { return m_.rows(); }
  double trace() const { return m_.trace().real(); }
  double min_eigenvalue() const { return lclab::min_eigenvalue(m_); }

 private:
  Matrix m_;
};

/// The pair (H, {W_j}).
class VNLGenerator {
 public:
  VNLGenerator(HermitianOperator h, JumpOperatorSet jumps) : h_(std::move(h)), jumps_(std::move(jumps)) {
    if (jumps_.dim() != h_.dim() && !(jumps_.is_empty() && jumps_.dim() == 0))
      throw DimensionMismatch("VNLGenerator: Hamiltonian and jumps have different dimensions");
    if (jumps_.dim() == 0) jumps_ = JumpOperatorSet::empty(h_.dim());
    k_ = Complex(0.0, -1.0) * h_.matrix() - jumps_.half_sum();
  }

  const HermitianOperator& hamiltonian() const { return h_; }
  const JumpOperatorSet& jumps() const { return jumps_; }
  Eigen::Index dim() const { return h_.dim(); }
  /// K = -iH - P.
  const Matrix& drift() const { return k_; }

  void check_dim(const Matrix& m) const {
    if (m.rows() != dim() || m.cols() != dim()) throw DimensionMismatch("VNLGenerator: operand has the wrong size");
  }

 private:
  HermitianOperator h_;
  JumpOperatorSet jumps_;
  Matrix k_;
};

/// L(rho) for any square matrix rho.
inline Matrix lindblad_apply(const VNLGenerator& gen, const Matrix& rho) {
  gen.check_dim(rho);
  Matrix out = gen.drift() * rho;
  out += rho * gen.drift().adjoint();
  if (!gen.jumps().is_empty()) out += gen.jumps().sandwich(rho);
  return out;
}

inline Matrix lindblad_apply(const VNLGenerator& gen, const DensityMatrix& rho) {
  return lindblad_apply(gen, rho.matrix());
}

/// Dissipative part G(rho) = sum (W rho W* - (1/2){W*W, rho}).
inline Matrix dissipator_apply(const VNLGenerator& gen, const Matrix& rho) {
  gen.check_dim(rho);
  const Matrix& p = gen.jumps().half_sum();
  return gen.jumps().sandwich(rho) - p * rho - rho * p;
}

/// L'(A) = i[H, A] + sum (W* A W - (1/2){W*W, A}).
inline Matrix dual_apply(const VNLGenerator& gen, const Matrix& a) {
  gen.check_dim(a);
  Matrix out = gen.drift().adjoint() * a;
  out += a * gen.drift();
  if (!gen.jumps().is_empty()) out += gen.jumps().dual_sandwich(a);
  return out;
}

enum class PropagatorMethod { rk4, trotter, superop_exact };

inline std::string to_string(PropagatorMethod m) {
  switch (m) {
    case PropagatorMethod::rk4: return "rk4";
    case PropagatorMethod::trotter: return "trotter";
    case PropagatorMethod::superop_exact: return "superop_exact";
  }
  return "?";
}

inline PropagatorMethod propagator_method_from_string(const std::string& s) {
  if (s == "rk4") return PropagatorMethod::rk4;
  if (s == "trotter") return PropagatorMethod::trotter;
  if (s == "superop_exact") return PropagatorMethod::superop_exact;
  throw InvalidArgument("unknown propagator method '" + s + "'");
}

inline constexpr Eigen::Index kSuperopCap = 4096;  // max side^2

struct PropagatorConfig {
  PropagatorMethod method = PropagatorMethod::rk4;
  double dt = 1e-3;
  /// Total step count over the horizon; overrides dt when set.
  std::optional<int> n_steps;
  double tolerance = 1e-8;
  /// Uniformly spaced snapshots on [0, T] including both ends.
  int samples = 11;
  /// Explicit snapshot times; override `samples` when nonempty.
  std::vector<double> times;
};

template <class State>
struct Snapshot {
  double t;
  State state;
};

namespace detail {

inline std::vector<double> sample_times(double horizon, const PropagatorConfig& cfg) {
  if (!cfg.times.empty()) {
    std::vector<double> t = cfg.times;
    require(std::is_sorted(t.begin(), t.end()) && t.front() >= 0.0, "propagate: times must be sorted and >= 0");
    return t;
  }
  require(cfg.samples >= 2, "propagate: need at least two samples");
  std::vector<double> t(static_cast<std::size_t>(cfg.samples));
  for (int i = 0; i < cfg.samples; ++i) t[static_cast<std::size_t>(i)] = horizon * i / (cfg.samples - 1);
  return t;
}

inline void validate_config(double horizon, const PropagatorConfig& cfg, Eigen::Index dim) {
  require(horizon > 0.0, "propagate: horizon T must be positive");
  require(cfg.dt > 0.0, "propagate: dt must be positive");
  require(cfg.tolerance > 0.0, "propagate: tolerance must be positive");
  if (cfg.n_steps) require(*cfg.n_steps >= 1, "propagate: n_steps must be >= 1");
  if (cfg.method == PropagatorMethod::superop_exact && dim * dim > kSuperopCap)
    throw OracleSizeExceeded("superop_exact: side^2 = " + std::to_string(dim * dim) + " exceeds " +
                             std::to_string(kSuperopCap));
}

// Steps per unit time implied by the config.
inline double step_size(double horizon, const PropagatorConfig& cfg) {
  return cfg.n_steps ? horizon / *cfg.n_steps : cfg.dt;
}

inline int substeps(double span, double h) {
  if (span <= 0.0) return 0;
  return std::max(1, static_cast<int>(std::ceil(span / h - 1e-9)));
}

// Column-major vectorization: vec(A X B) = (B^T kron A) vec(X).
inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline Matrix vectorize(const Matrix& m) { return Eigen::Map<const ComplexVector>(m.data(), m.size()); }
inline Matrix unvectorize(const ComplexVector& v, Eigen::Index n) { return Eigen::Map<const Matrix>(v.data(), n, n); }

// Power series of a bounded linear map applied to x with remainder control:
// stops once (tau a)^k / k! * e^{tau a} < tol.
template <class Map>
Matrix exp_series(const Map& map, const Matrix& x, double tau, double a, double tol) {
  Matrix term = x;
  Matrix acc = x;
  double bound = 1.0;
  const double growth = std::exp(tau * a);
  for (int k = 1; k < 200; ++k) {
    term = map(term) * (tau / k);
    acc += term;
    bound *= tau * a / k;
    if (bound * growth * tau * a / (k + 1) < tol) return acc;
  }
  throw NumericalFailure("exp_series: power series did not reach the remainder tolerance");
}

}  // namespace detail

/// Snapshot validation shared by the propagators.
inline DensityMatrix checked_state(const Matrix& m, double tolerance) {
  const double lmin = min_eigenvalue(m);
  if (lmin < -100.0 * tolerance)
    throw PositivityDrift("propagate: minimum eigenvalue " + std::to_string(lmin) + " below -100 x tolerance");
  DensityMatrix::Tolerances tol{1e3 * tolerance, 100.0 * tolerance, 100.0 * tolerance};
  try {
    return DensityMatrix(m, tol);
  } catch (const PositivityDrift&) {
    throw;
  } catch (const InvalidArgument& e) {
    throw NumericalFailure(std::string("propagate: snapshot invalid: ") + e.what());
  }
}

/// Vectorized generator (side^2 x side^2).
inline Matrix lindblad_superoperator(const VNLGenerator& gen, bool dual = false) {
  const Eigen::Index n = gen.dim();
  const Matrix id = Matrix::Identity(n, n);
  const Matrix& k = gen.drift();
  Matrix s;
  if (!dual) {
    s = detail::kron(id, k) + detail::kron(k.conjugate(), id);
    for (const Matrix& w : gen.jumps().operators()) s += detail::kron(w.conjugate(), w);
  } else {
    s = detail::kron(id, k.adjoint()) + detail::kron(k.transpose(), id);
    for (const Matrix& w : gen.jumps().operators()) s += detail::kron(w.transpose(), w.adjoint());
  }
  return s;
}

namespace detail {

// Generic driver: `advance(state, span)` moves the state forward by span.
template <class Advance, class Check>
std::vector<Snapshot<Matrix>> drive(const Matrix& x0, const std::vector<double>& times, Advance&& advance,
                                    Check&& check) {
  std::vector<Snapshot<Matrix>> out;
  out.reserve(times.size());
  Matrix x = x0;
  double t = 0.0;
  for (double target : times) {
    if (target > t) {
      advance(x, target - t);
      t = target;
    }
    check(x, t);
    out.push_back({t, x});
  }
  return out;
}

template <class Apply>
void rk4_advance(Matrix& x, double span, double h, const Apply& apply) {
  const int steps = substeps(span, h);
  const double dt = span / steps;
  for (int s = 0; s < steps; ++s) {
    const Matrix k1 = apply(x);
    const Matrix k2 = apply(x + 0.5 * dt * k1);
    const Matrix k3 = apply(x + 0.5 * dt * k2);
    const Matrix k4 = apply(x + dt * k3);
    x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
}

// Trotter-Lie pieces for one step of length tau.
struct TrotterStep {
  Matrix b;      // exp(K tau)
  double rate;   // ||sum W*W||
  double tau;
};

inline TrotterStep trotter_step(const VNLGenerator& gen, double tau) {
  return {(gen.drift() * tau).exp(), 2.0 * operator_norm(gen.jumps().half_sum()), tau};
}

inline std::vector<Snapshot<Matrix>> run(const VNLGenerator& gen, const Matrix& x0, double horizon,
                                         const PropagatorConfig& cfg, bool dual) {
  validate_config(horizon, cfg, gen.dim());
  gen.check_dim(x0);
  const std::vector<double> times = sample_times(horizon, cfg);
  const double h = step_size(horizon, cfg);
  // States are validated by the caller; observables carry no invariant.
  auto check = [](const Matrix&, double) {};
  switch (cfg.method) {
    case PropagatorMethod::rk4: {
      auto apply = [&](const Matrix& m) { return dual ? dual_apply(gen, m) : lindblad_apply(gen, m); };
      return drive(x0, times, [&](Matrix& x, double span) { rk4_advance(x, span, h, apply); }, check);
    }
    case PropagatorMethod::trotter: {
      // Steps of (nearly) uniform length h; per-span step length cached.
      std::optional<TrotterStep> cache;
      auto advance = [&](Matrix& x, double span) {
        const int steps = substeps(span, h);
        const double tau = span / steps;
        if (!cache || std::abs(cache->tau - tau) > 1e-14 * tau) cache = trotter_step(gen, tau);
        const TrotterStep& st = *cache;
        const double tol = 1e-3 * cfg.tolerance / std::max(1, steps);
        for (int s = 0; s < steps; ++s) {
          if (!dual) {
            // rho -> e^{F tau} (B rho B*)
            Matrix y = st.b * x * st.b.adjoint();
            x = gen.jumps().is_empty()
                    ? y
                    : exp_series([&](const Matrix& m) { return gen.jumps().sandwich(m); }, y, tau, st.rate, tol);
          } else {
            // A -> B* (e^{F' tau} A) B, the exact adjoint of the step above
            Matrix y = gen.jumps().is_empty()
                           ? x
                           : exp_series([&](const Matrix& m) { return gen.jumps().dual_sandwich(m); }, x, tau,
                                        st.rate, tol);
            x = st.b.adjoint() * y * st.b;
          }
        }
      };
      return drive(x0, times, advance, check);
    }
    case PropagatorMethod::superop_exact: {
      const Eigen::Index n = gen.dim();
      const Matrix s = lindblad_superoperator(gen, dual);
      std::optional<std::pair<double, Matrix>> cache;
      auto advance = [&](Matrix& x, double span) {
        if (!cache || std::abs(cache->first - span) > 1e-14 * span) cache = std::make_pair(span, Matrix((s * span).exp()));
        const ComplexVector v = cache->second * vectorize(x);
        x = unvectorize(v, n);
      };
      return drive(x0, times, advance, check);
    }
  }
  throw InvalidArgument("propagate: unknown method");
}

}  // namespace detail

/// rho_t at the configured sample times.
inline std::vector<Snapshot<DensityMatrix>> propagate(const VNLGenerator& gen, const DensityMatrix& rho0,
                                                      double horizon, const PropagatorConfig& cfg) {
  std::vector<Snapshot<Matrix>> raw = detail::run(gen, rho0.matrix(), horizon, cfg, false);
  std::vector<Snapshot<DensityMatrix>> out;
  out.reserve(raw.size());
  for (auto& s : raw) out.push_back({s.t, checked_state(s.state, cfg.tolerance)});
  return out;
}

/// rho_t without validating the snapshots, for splittings whose trace drift is
/// itself under study.
inline std::vector<Snapshot<Matrix>> propagate_unchecked(const VNLGenerator& gen, const Matrix& rho0, double horizon,
                                                         const PropagatorConfig& cfg) {
  return detail::run(gen, rho0, horizon, cfg, false);
}

/// Heisenberg-picture flow A_t generated by L'.
inline std::vector<Snapshot<Matrix>> dual_propagate(const VNLGenerator& gen, const Matrix& a0, double horizon,
                                                    const PropagatorConfig& cfg) {
  return detail::run(gen, a0, horizon, cfg, true);
}

}  // namespace lclab
