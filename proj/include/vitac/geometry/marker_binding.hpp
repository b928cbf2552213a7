#pragma once

#include "vitac/geometry/primitives.hpp"
#include "vitac/geometry/tet_mesh.hpp"

#include <limits>

namespace vitac {

/// Regular marker layout on the sensing face, in the gel frame (meters).
struct MarkerGrid {
  int rows = 7;    // along gel y
  int cols = 9;    // along gel x
  double spacing = 2.78125e-3;
  Vec2 center = Vec2::Zero();

  std::vector<Vec2> points() const {
    std::vector<Vec2> out;
    out.reserve(rows * cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c)
        out.emplace_back(center.x() + (c - 0.5 * (cols - 1)) * spacing,
                         center.y() + (r - 0.5 * (rows - 1)) * spacing);
    return out;
  }
};

/// Spacing that keeps a `margin` gap to the face boundary on both axes.
inline double marker_spacing_for_margin(double face_x, double face_y, int rows, int cols, double margin) {
  double s = std::numeric_limits<double>::infinity();
  if (cols > 1) s = std::min(s, (face_x - 2 * margin) / (cols - 1));
  if (rows > 1) s = std::min(s, (face_y - 2 * margin) / (rows - 1));
  return std::isfinite(s) ? s : 0.0;
}

struct MarkerBinding {
  std::vector<int> facet;       // index into mesh.marker_surface_tris
  std::vector<Tri> vertices;    // that facet's vertex ids
  std::vector<Vec3> weights;    // barycentric (k1, k2, k3)

  int size() const { return static_cast<int>(facet.size()); }
};

class MarkerOutOfBounds : public Error {
 public:
  explicit MarkerOutOfBounds(int marker)
      : Error("marker-out-of-bounds", "marker " + std::to_string(marker) + " lies outside the marker surface"),
        marker_(marker) {}
  int marker() const { return marker_; }

 private:
  int marker_;
};

/// Binds each 3D point to the marker facet holding its closest-point projection.
/// A point whose projection is displaced tangentially (in gel xy) by more than
/// `tolerance` is outside the surface.
inline MarkerBinding bind_points(const TetMesh& mesh, const std::vector<Vec3>& points, double tolerance = 1e-9) {
  MarkerBinding out;
  for (int m = 0; m < static_cast<int>(points.size()); ++m) {
    const Vec3& p = points[m];
    int best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    Vec3 best_w;
    for (int f = 0; f < static_cast<int>(mesh.marker_surface_tris.size()); ++f) {
      const auto& tri = mesh.marker_surface_tris[f];
      const Vec3& a = mesh.vertices[tri[0]];
      const Vec3& b = mesh.vertices[tri[1]];
      const Vec3& c = mesh.vertices[tri[2]];
      const Vec3 w = closest_point_barycentric(p, a, b, c);
      const double d2 = (p - (w[0] * a + w[1] * b + w[2] * c)).squaredNorm();
      if (d2 < best_d2) {
        best_d2 = d2;
        best = f;
        best_w = w;
      }
    }
    if (best < 0) throw MarkerOutOfBounds(m);
    const auto& tri = mesh.marker_surface_tris[best];
    const Vec3 q = best_w[0] * mesh.vertices[tri[0]] + best_w[1] * mesh.vertices[tri[1]] +
                   best_w[2] * mesh.vertices[tri[2]];
    if ((q - p).head<2>().norm() > tolerance) throw MarkerOutOfBounds(m);
    best_w = best_w.cwiseMax(0.0);
    best_w /= best_w.sum();
    out.facet.push_back(best);
    out.vertices.push_back(tri);
    out.weights.push_back(best_w);
  }
  return out;
}

/// Grid points are lifted onto the sensing face plane (lowest z of the marker
/// surface) and then bound by closest point.
inline MarkerBinding bind_markers(const TetMesh& mesh, const MarkerGrid& grid) {
  double z_face = std::numeric_limits<double>::infinity();
  for (const auto& f : mesh.marker_surface_tris)
    for (int v : f) z_face = std::min(z_face, mesh.vertices[v].z());
  if (!std::isfinite(z_face)) throw MeshError("mesh-invalid", "mesh has no marker surface");
  std::vector<Vec3> pts;
  for (const auto& q : grid.points()) pts.emplace_back(q.x(), q.y(), z_face);
  return bind_points(mesh, pts);
}

}  // namespace vitac
