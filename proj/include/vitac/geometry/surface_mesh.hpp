#pragma once

#include "vitac/geometry/tet_mesh.hpp"

namespace vitac {

/// Closed or open triangle surface of a rigid object, in its local frame.
struct SurfaceMesh {
  std::vector<Vec3> vertices;
  std::vector<Tri> tris;
  std::vector<Edge> edges;

  void finalize() { edges = unique_edges(tris); }

  int add_vertex(const Vec3& v) {
    vertices.push_back(v);
    return static_cast<int>(vertices.size()) - 1;
  }

  void append(const SurfaceMesh& o) {
    const int base = static_cast<int>(vertices.size());
    vertices.insert(vertices.end(), o.vertices.begin(), o.vertices.end());
    for (const auto& t : o.tris) tris.push_back({t[0] + base, t[1] + base, t[2] + base});
    finalize();
  }
};

struct Aabb {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void expand(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void inflate(double r) {
    lo.array() -= r;
    hi.array() += r;
  }
  bool overlaps(const Aabb& o) const {
    return (lo.array() <= o.hi.array()).all() && (o.lo.array() <= hi.array()).all();
  }
  bool empty() const { return !(lo.array() <= hi.array()).all(); }
};

/// Signed area of a 2D polygon (positive for counter-clockwise).
inline double polygon_area(const std::vector<Vec2>& poly) {
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % poly.size()];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * a;
}

/// Closed prism over a convex counter-clockwise polygon, spanning z0..z1.
inline SurfaceMesh make_prism(const std::vector<Vec2>& poly, double z0, double z1) {
  SurfaceMesh m;
  const int n = static_cast<int>(poly.size());
  for (const auto& p : poly) m.add_vertex({p.x(), p.y(), z0});
  for (const auto& p : poly) m.add_vertex({p.x(), p.y(), z1});
  for (int i = 1; i + 1 < n; ++i) {
    m.tris.push_back({0, i + 1, i});              // bottom, facing -z
    m.tris.push_back({n, n + i, n + i + 1});      // top, facing +z
  }
  for (int i = 0; i < n; ++i) {
    const int j = (i + 1) % n;
    m.tris.push_back({i, j, n + j});
    m.tris.push_back({i, n + j, n + i});
  }
  m.finalize();
  return m;
}

/// Offsets a convex counter-clockwise polygon outward by `d` (edges moved along
/// their normals, corners at the intersections).
inline std::vector<Vec2> offset_convex_polygon(const std::vector<Vec2>& poly, double d) {
  const int n = static_cast<int>(poly.size());
  std::vector<Vec2> out(n);
  for (int i = 0; i < n; ++i) {
    const Vec2& prev = poly[(i + n - 1) % n];
    const Vec2& cur = poly[i];
    const Vec2& next = poly[(i + 1) % n];
    const Vec2 e0 = (cur - prev).normalized(), e1 = (next - cur).normalized();
    const Vec2 n0(e0.y(), -e0.x()), n1(e1.y(), -e1.x());
    const Vec2 bis = n0 + n1;
    out[i] = cur + d * bis / (1.0 + n0.dot(n1));
  }
  return out;
}

}  // namespace vitac
