#pragma once

// Truncated Taylor series arithmetic.
//
// A Taylor<T> holds the normalized coefficients c_k = f^(k)(x0) / k! of a
// function around a point, truncated at a fixed order. Arithmetic on these
// objects propagates derivatives exactly (up to rounding), which is how the
// built-in scalar function families obtain analytic derivatives of any order.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace lclab {

template <class T = double>
class Taylor {
 public:
  Taylor() = default;

  /// Constant c (all derivatives zero) at the given order.
  Taylor(T c, int order) : c_(static_cast<std::size_t>(order) + 1, T(0)) { c_[0] = c; }

  /// The identity map t -> x0 + t, i.e. the independent variable.
  static Taylor variable(T x0, int order) {
    Taylor v(x0, order);
    if (order >= 1) v.c_[1] = T(1);
    return v;
  }

  static Taylor zero(int order) { return Taylor(T(0), order); }

  int order() const { return static_cast<int>(c_.size()) - 1; }
  T& operator[](int k) { return c_[static_cast<std::size_t>(k)]; }
  const T& operator[](int k) const { return c_[static_cast<std::size_t>(k)]; }
  T value() const { return c_[0]; }

  /// k-th derivative, k! * c_k.
  T derivative(int k) const {
    if (k > order()) return T(0);
    T f = T(1);
    for (int i = 2; i <= k; ++i) f *= T(i);
    return f * c_[static_cast<std::size_t>(k)];
  }

  std::vector<T> derivatives() const {
    std::vector<T> out(c_.size());
    T f = T(1);
    for (std::size_t k = 0; k < c_.size(); ++k) {
      if (k >= 2) f *= T(k);
      out[k] = f * c_[k];
    }
    return out;
  }

  bool is_zero() const {
    for (const T& v : c_)
      if (v != T(0)) return false;
    return true;
  }

  Taylor& operator+=(const Taylor& o) {
    check(o);
    for (std::size_t k = 0; k < c_.size(); ++k) c_[k] += o.c_[k];
    return *this;
  }
  Taylor& operator-=(const Taylor& o) {
    check(o);
    for (std::size_t k = 0; k < c_.size(); ++k) c_[k] -= o.c_[k];
    return *this;
  }
  Taylor& operator+=(T s) {
    c_[0] += s;
    return *this;
  }
  Taylor& operator-=(T s) {
    c_[0] -= s;
    return *this;
  }
  Taylor& operator*=(T s) {
    for (T& v : c_) v *= s;
    return *this;
  }
  Taylor& operator/=(T s) {
    for (T& v : c_) v /= s;
    return *this;
  }

  friend Taylor operator+(Taylor a, const Taylor& b) { return a += b; }
  friend Taylor operator-(Taylor a, const Taylor& b) { return a -= b; }
  friend Taylor operator+(Taylor a, T s) { return a += s; }
  friend Taylor operator+(T s, Taylor a) { return a += s; }
  friend Taylor operator-(Taylor a, T s) { return a -= s; }
  friend Taylor operator-(T s, const Taylor& a) {
    Taylor r = -a;
    r.c_[0] += s;
    return r;
  }
  friend Taylor operator*(Taylor a, T s) { return a *= s; }
  friend Taylor operator*(T s, Taylor a) { return a *= s; }
  friend Taylor operator/(Taylor a, T s) { return a /= s; }
  friend Taylor operator-(Taylor a) {
    for (T& v : a.c_) v = -v;
    return a;
  }

  friend Taylor operator*(const Taylor& a, const Taylor& b) {
    a.check(b);
    Taylor r = zero(a.order());
    const int n = a.order();
    for (int k = 0; k <= n; ++k) {
      T acc = T(0);
      for (int j = 0; j <= k; ++j) acc += a[j] * b[k - j];
      r[k] = acc;
    }
    return r;
  }

  friend Taylor operator/(const Taylor& a, const Taylor& b) {
    a.check(b);
    if (b[0] == T(0)) throw std::domain_error("Taylor division by zero");
    const int n = a.order();
    Taylor r = zero(n);
    for (int k = 0; k <= n; ++k) {
      T acc = a[k];
      for (int j = 1; j <= k; ++j) acc -= b[j] * r[k - j];
      r[k] = acc / b[0];
    }
    return r;
  }

  friend Taylor operator/(T s, const Taylor& b) { return Taylor(s, b.order()) / b; }

  friend Taylor exp(const Taylor& a) {
    const int n = a.order();
    Taylor r = zero(n);
    r[0] = std::exp(a[0]);
    // r' = a' r  =>  k r_k = sum_{j=1..k} j a_j r_{k-j}
    for (int k = 1; k <= n; ++k) {
      T acc = T(0);
      for (int j = 1; j <= k; ++j) acc += T(j) * a[j] * r[k - j];
      r[k] = acc / T(k);
    }
    return r;
  }

  friend Taylor log(const Taylor& a) {
    if (a[0] <= T(0)) throw std::domain_error("Taylor log of nonpositive value");
    const int n = a.order();
    Taylor r = zero(n);
    r[0] = std::log(a[0]);
    // a r' = a'  =>  k a_0 r_k = k a_k - sum_{j=1..k-1} j r_j a_{k-j}
    for (int k = 1; k <= n; ++k) {
      T acc = T(k) * a[k];
      for (int j = 1; j < k; ++j) acc -= T(j) * r[j] * a[k - j];
      r[k] = acc / (T(k) * a[0]);
    }
    return r;
  }

  friend Taylor sqrt(const Taylor& a) {
    const int n = a.order();
    Taylor r = zero(n);
    if (a[0] < T(0)) throw std::domain_error("Taylor sqrt of negative value");
    if (a[0] == T(0)) {
      if (!a.is_zero()) throw std::domain_error("Taylor sqrt at a zero with nonzero slope");
      return r;
    }
    r[0] = std::sqrt(a[0]);
    // r^2 = a  =>  2 r_0 r_k = a_k - sum_{j=1..k-1} r_j r_{k-j}
    for (int k = 1; k <= n; ++k) {
      T acc = a[k];
      for (int j = 1; j < k; ++j) acc -= r[j] * r[k - j];
      r[k] = acc / (T(2) * r[0]);
    }
    return r;
  }

  /// Compose with an outer function given by its derivatives at a[0]:
  /// returns F(a(t)) where outer[k] = F^(k)(a[0]).
  static Taylor compose(const std::vector<T>& outer, const Taylor& a) {
    const int n = a.order();
    Taylor r(outer.empty() ? T(0) : outer[0], n);
    Taylor d = a;
    d[0] = T(0);
    Taylor pw(T(1), n);
    T fact = T(1);
    for (int k = 1; k <= n && k < static_cast<int>(outer.size()); ++k) {
      pw = pw * d;
      fact *= T(k);
      r += pw * (outer[static_cast<std::size_t>(k)] / fact);
    }
    return r;
  }

 private:
  void check(const Taylor& o) const {
    if (o.c_.size() != c_.size()) throw std::invalid_argument("Taylor order mismatch");
  }

  std::vector<T> c_;
};

using Jet = Taylor<double>;

}  // namespace lclab
