#pragma once

#include <cmath>

namespace pmsm {

// Two-axis quantity in the rotor (d,q) frame, per unit.
struct Dq {
  double d{0.0};
  double q{0.0};

  constexpr Dq& operator+=(const Dq& o) noexcept {
    d += o.d;
    q += o.q;
    return *this;
  }
  constexpr Dq& operator-=(const Dq& o) noexcept {
    d -= o.d;
    q -= o.q;
    return *this;
  }
  friend constexpr Dq operator+(Dq a, const Dq& b) noexcept { return a += b; }
  friend constexpr Dq operator-(Dq a, const Dq& b) noexcept { return a -= b; }
  friend constexpr Dq operator*(double s, const Dq& a) noexcept { return {s * a.d, s * a.q}; }
  friend constexpr bool operator==(const Dq&, const Dq&) = default;

  double norm() const noexcept { return std::hypot(d, q); }
  bool finite() const noexcept { return std::isfinite(d) && std::isfinite(q); }
};

constexpr double dot(const Dq& a, const Dq& b) noexcept { return a.d * b.d + a.q * b.q; }

// Dense 2x2 matrix, row major: [[a, b], [c, e]].
struct Mat2 {
  double a{0.0}, b{0.0};
  double c{0.0}, e{0.0};

  static constexpr Mat2 identity() noexcept { return {1.0, 0.0, 0.0, 1.0}; }
  static constexpr Mat2 diag(double x, double y) noexcept { return {x, 0.0, 0.0, y}; }
  static constexpr Mat2 outer(const Dq& u, const Dq& v) noexcept {
    return {u.d * v.d, u.d * v.q, u.q * v.d, u.q * v.q};
  }

  constexpr double det() const noexcept { return a * e - b * c; }
  constexpr double trace() const noexcept { return a + e; }
  constexpr Mat2 transposed() const noexcept { return {a, c, b, e}; }

  friend constexpr Mat2 operator+(const Mat2& x, const Mat2& y) noexcept {
    return {x.a + y.a, x.b + y.b, x.c + y.c, x.e + y.e};
  }
  friend constexpr Mat2 operator-(const Mat2& x, const Mat2& y) noexcept {
    return {x.a - y.a, x.b - y.b, x.c - y.c, x.e - y.e};
  }
  friend constexpr Mat2 operator*(double s, const Mat2& x) noexcept {
    return {s * x.a, s * x.b, s * x.c, s * x.e};
  }
  friend constexpr Mat2 operator*(const Mat2& x, const Mat2& y) noexcept {
    return {x.a * y.a + x.b * y.c, x.a * y.b + x.b * y.e, x.c * y.a + x.e * y.c, x.c * y.b + x.e * y.e};
  }
  friend constexpr Dq operator*(const Mat2& x, const Dq& v) noexcept {
    return {x.a * v.d + x.b * v.q, x.c * v.d + x.e * v.q};
  }
  friend constexpr bool operator==(const Mat2&, const Mat2&) = default;

  bool finite() const noexcept {
    return std::isfinite(a) && std::isfinite(b) && std::isfinite(c) && std::isfinite(e);
  }
};

// Solves m * x = rhs by Cramer's rule. Caller guarantees det != 0.
constexpr Dq solve(const Mat2& m, const Dq& rhs) noexcept {
  const double det = m.det();
  return {(m.e * rhs.d - m.b * rhs.q) / det, (m.a * rhs.q - m.c * rhs.d) / det};
}

}  // namespace pmsm
