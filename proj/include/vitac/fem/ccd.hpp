#pragma once

#include "vitac/geometry/primitives.hpp"

#include <algorithm>
#include <limits>
#include <optional>

namespace vitac {

inline constexpr double kNoImpact = std::numeric_limits<double>::infinity();

namespace detail {

// Coefficients of A(t) . (B(t) x C(t)) with A = a0 + t a1 etc.
inline std::array<double, 4> triple_product_cubic(const Vec3& a0, const Vec3& a1, const Vec3& b0, const Vec3& b1,
                                                  const Vec3& c0, const Vec3& c1) {
  return {a0.dot(b0.cross(c0)), a1.dot(b0.cross(c0)) + a0.dot(b1.cross(c0)) + a0.dot(b0.cross(c1)),
          a1.dot(b1.cross(c0)) + a1.dot(b0.cross(c1)) + a0.dot(b1.cross(c1)), a1.dot(b1.cross(c1))};
}

inline double eval_cubic(const std::array<double, 4>& c, double t) { return ((c[3] * t + c[2]) * t + c[1]) * t + c[0]; }

/// Candidate coplanarity times in [0, 1], ascending: sign changes located by
/// bisection plus tangential touches at critical points.
inline std::vector<double> cubic_roots_unit(const std::array<double, 4>& c, double touch_tol) {
  std::vector<double> breaks = {0.0};
  const double qa = 3.0 * c[3], qb = 2.0 * c[2], qc = c[1];
  if (qa != 0.0) {
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc >= 0.0) {
      const double s = std::sqrt(disc);
      const double q = -0.5 * (qb + std::copysign(s, qb));
      for (double r : {q / qa, q != 0.0 ? qc / q : -qb / (2.0 * qa)})
        if (r > 0.0 && r < 1.0) breaks.push_back(r);
    }
  } else if (qb != 0.0) {
    const double r = -qc / qb;
    if (r > 0.0 && r < 1.0) breaks.push_back(r);
  }
  breaks.push_back(1.0);
  std::sort(breaks.begin(), breaks.end());

  std::vector<double> roots;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    double lo = breaks[i], hi = breaks[i + 1];
    double flo = eval_cubic(c, lo), fhi = eval_cubic(c, hi);
    if (std::abs(flo) <= touch_tol) {
      roots.push_back(lo);
      continue;
    }
    if (flo * fhi > 0.0) continue;
    for (int it = 0; it < 80 && hi - lo > 0.0; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      const double fm = eval_cubic(c, mid);
      if ((fm < 0.0) == (flo < 0.0) && fm != 0.0) {
        lo = mid;
        flo = fm;
      } else {
        hi = mid;
      }
    }
    roots.push_back(lo);
  }
  if (std::abs(eval_cubic(c, 1.0)) <= touch_tol) roots.push_back(1.0);
  std::sort(roots.begin(), roots.end());
  return roots;
}

/// Conservative additive CCD for motions the cubic cannot resolve (coplanar or
/// degenerate). `dist` returns the distance of the 4 points.
template <class DistFn>
double additive_ccd(std::array<Vec3, 4> x, std::array<Vec3, 4> d, int split, DistFn dist, double separation = 0.1) {
  Vec3 mean = Vec3::Zero();
  for (const auto& v : d) mean += v;
  mean /= 4.0;
  for (auto& v : d) v -= mean;
  double la = 0, lb = 0;
  for (int i = 0; i < split; ++i) la = std::max(la, d[i].norm());
  for (int i = split; i < 4; ++i) lb = std::max(lb, d[i].norm());
  const double lp = la + lb;
  if (lp == 0.0) return kNoImpact;
  double dcur = dist(x);
  if (dcur <= 0.0) return 0.0;
  const double gap = separation * dcur;
  double t = 0.0, tl = (1.0 - separation) * dcur / lp;
  for (int it = 0; it < 100000; ++it) {
    for (int i = 0; i < 4; ++i) x[i] += tl * d[i];
    dcur = dist(x);
    if (t > 0.0 && dcur < gap) return t;
    t += tl;
    if (t > 1.0) return kNoImpact;
    tl = 0.9 * dcur / lp;
  }
  return t;
}

inline double feature_scale(const std::array<Vec3, 4>& x, const std::array<Vec3, 4>& d) {
  double s = 0.0;
  for (int i = 1; i < 4; ++i) s = std::max(s, (x[i] - x[0]).norm());
  for (const auto& v : d) s = std::max(s, v.norm());
  return s;
}

}  // namespace detail

/// Earliest t in [0, 1] at which point p + t dp touches triangle (t0 + t d0, ...),
/// or kNoImpact.
inline double point_triangle_toi(const Vec3& p, const Vec3& t0, const Vec3& t1, const Vec3& t2, const Vec3& dp,
                                 const Vec3& d0, const Vec3& d1, const Vec3& d2) {
  const std::array<Vec3, 4> x = {p, t0, t1, t2}, d = {dp, d0, d1, d2};
  const double l = detail::feature_scale(x, d);
  if (l == 0.0) return kNoImpact;
  const auto c = detail::triple_product_cubic(p - t0, dp - d0, t1 - t0, d1 - d0, t2 - t0, d2 - d0);
  const double l3 = l * l * l;
  const auto dist = [](const std::array<Vec3, 4>& y) { return point_triangle_distance(y[0], y[1], y[2], y[3]); };
  if (std::max({std::abs(c[0]), std::abs(c[1]), std::abs(c[2]), std::abs(c[3])}) <= 1e-14 * l3)
    return detail::additive_ccd(x, d, 1, dist);
  for (double t : detail::cubic_roots_unit(c, 1e-15 * l3)) {
    std::array<Vec3, 4> y;
    for (int i = 0; i < 4; ++i) y[i] = x[i] + t * d[i];
    if (dist(y) <= 1e-9 * l) return t;
  }
  return kNoImpact;
}

/// Earliest t in [0, 1] at which edges (a0, a1) and (b0, b1) touch, or kNoImpact.
inline double edge_edge_toi(const Vec3& a0, const Vec3& a1, const Vec3& b0, const Vec3& b1, const Vec3& da0,
                            const Vec3& da1, const Vec3& db0, const Vec3& db1) {
  const std::array<Vec3, 4> x = {a0, a1, b0, b1}, d = {da0, da1, db0, db1};
  const double l = detail::feature_scale(x, d);
  if (l == 0.0) return kNoImpact;
  const auto c = detail::triple_product_cubic(b0 - a0, db0 - da0, a1 - a0, da1 - da0, b1 - b0, db1 - db0);
  const double l3 = l * l * l;
  const auto dist = [](const std::array<Vec3, 4>& y) { return segment_segment_distance(y[0], y[1], y[2], y[3]); };
  if (std::max({std::abs(c[0]), std::abs(c[1]), std::abs(c[2]), std::abs(c[3])}) <= 1e-14 * l3)
    return detail::additive_ccd(x, d, 2, dist);
  for (double t : detail::cubic_roots_unit(c, 1e-15 * l3)) {
    std::array<Vec3, 4> y;
    for (int i = 0; i < 4; ++i) y[i] = x[i] + t * d[i];
    if (dist(y) <= 1e-9 * l) return t;
  }
  return kNoImpact;
}

}  // namespace vitac
