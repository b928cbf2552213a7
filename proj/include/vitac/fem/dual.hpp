#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>

namespace vitac {

/// Second-order forward-mode dual number over N independent variables:
/// value, gradient and Hessian propagate together.
template <int N>
struct Dual2 {
  using Vec = Eigen::Matrix<double, N, 1>;
  using Mat = Eigen::Matrix<double, N, N>;

  double v = 0.0;
  Vec g = Vec::Zero();
  Mat h = Mat::Zero();

  Dual2() = default;
  Dual2(double value) : v(value) {}  // NOLINT: implicit constants are convenient in formulas

  static Dual2 variable(double value, int index) {
    Dual2 d(value);
    d.g[index] = 1.0;
    return d;
  }

  Dual2& operator+=(const Dual2& o) {
    v += o.v;
    g += o.g;
    h += o.h;
    return *this;
  }
  Dual2& operator-=(const Dual2& o) {
    v -= o.v;
    g -= o.g;
    h -= o.h;
    return *this;
  }
};

template <int N>
Dual2<N> operator+(Dual2<N> a, const Dual2<N>& b) { return a += b; }
template <int N>
Dual2<N> operator-(Dual2<N> a, const Dual2<N>& b) { return a -= b; }
template <int N>
Dual2<N> operator-(const Dual2<N>& a) {
  Dual2<N> r;
  r.v = -a.v;
  r.g = -a.g;
  r.h = -a.h;
  return r;
}

template <int N>
Dual2<N> operator*(const Dual2<N>& a, const Dual2<N>& b) {
  Dual2<N> r;
  r.v = a.v * b.v;
  r.g = a.g * b.v + b.g * a.v;
  const typename Dual2<N>::Mat outer = a.g * b.g.transpose();
  r.h = a.h * b.v + b.h * a.v + outer + outer.transpose();
  return r;
}

template <int N>
Dual2<N> operator*(double s, Dual2<N> a) {
  a.v *= s;
  a.g *= s;
  a.h *= s;
  return a;
}
template <int N>
Dual2<N> operator*(const Dual2<N>& a, double s) { return s * a; }

/// Scalar function composition: f(a) given f, f', f'' at a.v.
template <int N>
Dual2<N> chain(const Dual2<N>& a, double f, double df, double d2f) {
  Dual2<N> r;
  r.v = f;
  r.g = df * a.g;
  r.h = df * a.h + d2f * (a.g * a.g.transpose());
  return r;
}

template <int N>
Dual2<N> inverse(const Dual2<N>& a) {
  const double inv = 1.0 / a.v;
  return chain(a, inv, -inv * inv, 2.0 * inv * inv * inv);
}

template <int N>
Dual2<N> operator/(const Dual2<N>& a, const Dual2<N>& b) { return a * inverse(b); }

template <int N>
Dual2<N> sqrt(const Dual2<N>& a) {
  const double s = std::sqrt(a.v);
  return chain(a, s, 0.5 / s, -0.25 / (s * a.v));
}

template <int N>
Dual2<N> log(const Dual2<N>& a) {
  return chain(a, std::log(a.v), 1.0 / a.v, -1.0 / (a.v * a.v));
}

/// Minimal 3-vector over an arbitrary scalar, enough for distance formulas.
template <class T>
struct V3 {
  T x, y, z;

  V3 operator-(const V3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  V3 operator+(const V3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  T dot(const V3& o) const { return x * o.x + y * o.y + z * o.z; }
  V3 cross(const V3& o) const { return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x}; }
  T squared_norm() const { return dot(*this); }
};

/// Packs points into V3<Dual2<3K>> with consecutive variable indices.
template <int K>
std::array<V3<Dual2<3 * K>>, K> make_dual_points(const std::array<Eigen::Vector3d, K>& p) {
  std::array<V3<Dual2<3 * K>>, K> out;
  for (int k = 0; k < K; ++k) {
    out[k] = {Dual2<3 * K>::variable(p[k].x(), 3 * k), Dual2<3 * K>::variable(p[k].y(), 3 * k + 1),
              Dual2<3 * K>::variable(p[k].z(), 3 * k + 2)};
  }
  return out;
}

}  // namespace vitac
