#pragma once

#include "vitac/fem/dual.hpp"
#include "vitac/geometry/primitives.hpp"

#include <limits>

namespace vitac {

// Squared distances between the closest sub-primitives. Generic over the scalar
// so the same formula yields plain values or Dual2 derivatives.

template <class T>
T point_point_sq(const V3<T>& p, const V3<T>& q) {
  return (p - q).squared_norm();
}

template <class T>
T point_line_sq(const V3<T>& p, const V3<T>& e0, const V3<T>& e1) {
  const V3<T> e = e1 - e0;
  return (e0 - p).cross(e1 - p).squared_norm() / e.squared_norm();
}

template <class T>
T point_plane_sq(const V3<T>& p, const V3<T>& t0, const V3<T>& t1, const V3<T>& t2) {
  const V3<T> n = (t1 - t0).cross(t2 - t0);
  const T h = (p - t0).dot(n);
  return h * h / n.squared_norm();
}

template <class T>
T line_line_sq(const V3<T>& a0, const V3<T>& a1, const V3<T>& b0, const V3<T>& b1) {
  const V3<T> n = (a1 - a0).cross(b1 - b0);
  const T h = (b0 - a0).dot(n);
  return h * h / n.squared_norm();
}

/// Which sub-primitives realize the distance of a 4-node pair. `local` lists the
/// participating nodes of the pair in formula order (point first for PE/PT).
struct DistanceStencil {
  enum Kind { point_point, point_line, point_plane, line_line } kind = point_plane;
  std::array<int, 4> local = {0, 1, 2, 3};

  int count() const { return kind == point_point ? 2 : kind == point_line ? 3 : 4; }
};

/// Pair nodes (p, t0, t1, t2).
inline DistanceStencil classify_point_triangle(const Vec3& p, const Vec3& t0, const Vec3& t1, const Vec3& t2) {
  const Vec3 w = closest_point_barycentric(p, t0, t1, t2);
  std::array<int, 3> nz{};
  int n = 0;
  for (int k = 0; k < 3; ++k)
    if (w[k] != 0.0) nz[n++] = k + 1;
  if (n == 1) return {DistanceStencil::point_point, {0, nz[0], 0, 0}};
  if (n == 2) return {DistanceStencil::point_line, {0, nz[0], nz[1], 0}};
  return {DistanceStencil::point_plane, {0, 1, 2, 3}};
}

/// Point node `p` against edge nodes (e0, e1) of a pair.
inline DistanceStencil classify_point_edge(const std::array<Vec3, 4>& x, int p, int e0, int e1) {
  const Vec3 e = x[e1] - x[e0];
  const double t = (x[p] - x[e0]).dot(e) / e.squaredNorm();
  if (t <= 0.0) return {DistanceStencil::point_point, {p, e0, 0, 0}};
  if (t >= 1.0) return {DistanceStencil::point_point, {p, e1, 0, 0}};
  return {DistanceStencil::point_line, {p, e0, e1, 0}};
}

inline double stencil_squared_distance(const DistanceStencil& s, const std::array<Vec3, 4>& x);

/// Pair nodes (a0, a1, b0, b1). Nearly parallel edges fall back to the closest
/// endpoint-edge combination.
inline DistanceStencil classify_edge_edge(const Vec3& a0, const Vec3& a1, const Vec3& b0, const Vec3& b1,
                                          double parallel_tol = 1e-6) {
  const Vec3 da = a1 - a0, db = b1 - b0;
  if (da.cross(db).squaredNorm() < parallel_tol * da.squaredNorm() * db.squaredNorm()) {
    const std::array<Vec3, 4> x = {a0, a1, b0, b1};
    const std::array<DistanceStencil, 4> options = {classify_point_edge(x, 0, 2, 3), classify_point_edge(x, 1, 2, 3),
                                                    classify_point_edge(x, 2, 0, 1), classify_point_edge(x, 3, 0, 1)};
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 4; ++i) {
      const double d = stencil_squared_distance(options[i], x);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return options[best];
  }
  const Vec2 st = segment_closest_params(a0, a1, b0, b1);
  const bool s_end = st[0] == 0.0 || st[0] == 1.0;
  const bool t_end = st[1] == 0.0 || st[1] == 1.0;
  const int ea = st[0] == 0.0 ? 0 : 1;
  const int eb = st[1] == 0.0 ? 2 : 3;
  if (s_end && t_end) return {DistanceStencil::point_point, {ea, eb, 0, 0}};
  if (s_end) return {DistanceStencil::point_line, {ea, 2, 3, 0}};
  if (t_end) return {DistanceStencil::point_line, {eb, 0, 1, 0}};
  return {DistanceStencil::line_line, {0, 1, 2, 3}};
}

namespace detail {
template <class T>
V3<T> to_v3(const Vec3& p) {
  return {T(p.x()), T(p.y()), T(p.z())};
}

template <class T, std::size_t K>
T stencil_formula(DistanceStencil::Kind kind, const std::array<V3<T>, K>& q) {
  if constexpr (K == 2) {
    return point_point_sq(q[0], q[1]);
  } else if constexpr (K == 3) {
    return point_line_sq(q[0], q[1], q[2]);
  } else {
    return kind == DistanceStencil::point_plane ? point_plane_sq(q[0], q[1], q[2], q[3])
                                                : line_line_sq(q[0], q[1], q[2], q[3]);
  }
}
}  // namespace detail

inline double stencil_squared_distance(const DistanceStencil& s, const std::array<Vec3, 4>& x) {
  switch (s.count()) {
    case 2: return detail::stencil_formula<double, 2>(s.kind, {detail::to_v3<double>(x[s.local[0]]),
                                                               detail::to_v3<double>(x[s.local[1]])});
    case 3:
      return detail::stencil_formula<double, 3>(
          s.kind, {detail::to_v3<double>(x[s.local[0]]), detail::to_v3<double>(x[s.local[1]]),
                   detail::to_v3<double>(x[s.local[2]])});
    default:
      return detail::stencil_formula<double, 4>(
          s.kind, {detail::to_v3<double>(x[s.local[0]]), detail::to_v3<double>(x[s.local[1]]),
                   detail::to_v3<double>(x[s.local[2]]), detail::to_v3<double>(x[s.local[3]])});
  }
}

/// Squared distance with gradient and Hessian over the 12 coordinates of the pair.
struct PairDerivatives {
  double value = 0.0;
  Eigen::Matrix<double, 12, 1> gradient = Eigen::Matrix<double, 12, 1>::Zero();
  Eigen::Matrix<double, 12, 12> hessian = Eigen::Matrix<double, 12, 12>::Zero();
};

namespace detail {
template <int K>
PairDerivatives stencil_derivatives_k(const DistanceStencil& s, const std::array<Vec3, 4>& x) {
  std::array<Vec3, K> pts;
  for (int k = 0; k < K; ++k) pts[k] = x[s.local[k]];
  const auto q = make_dual_points<K>(pts);
  const Dual2<3 * K> d = stencil_formula<Dual2<3 * K>, K>(s.kind, q);
  PairDerivatives out;
  out.value = d.v;
  for (int a = 0; a < K; ++a) {
    out.gradient.template segment<3>(3 * s.local[a]) += d.g.template segment<3>(3 * a);
    for (int b = 0; b < K; ++b)
      out.hessian.template block<3, 3>(3 * s.local[a], 3 * s.local[b]) += d.h.template block<3, 3>(3 * a, 3 * b);
  }
  return out;
}
}  // namespace detail

inline PairDerivatives stencil_derivatives(const DistanceStencil& s, const std::array<Vec3, 4>& x) {
  switch (s.count()) {
    case 2: return detail::stencil_derivatives_k<2>(s, x);
    case 3: return detail::stencil_derivatives_k<3>(s, x);
    default: return detail::stencil_derivatives_k<4>(s, x);
  }
}

}  // namespace vitac
