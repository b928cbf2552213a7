#pragma once

#include "vitac/geometry/tet_mesh.hpp"

namespace vitac {

/// Box-shaped elastomer. In the gel frame the 25.25 mm edge runs along x, the
/// shell-attachment face sits at z = +thickness/2 and the sensing face at
/// z = -thickness/2 (the camera looks from +z).
struct GelSpec {
  double base_x = 0.02525;
  double base_y = 0.02075;
  double thickness = 0.004;
  std::array<int, 3> subdivisions = {8, 6, 2};
  RigidTransform pose;
};

inline void validate(const GelSpec& spec) {
  if (!(spec.base_x > 0.0) || !(spec.base_y > 0.0) || !(spec.thickness > 0.0))
    throw MeshError("mesh-invalid", "gel dimensions must be positive");
  for (int s : spec.subdivisions)
    if (s < 1) throw MeshError("mesh-invalid", "gel subdivisions must be >= 1");
}

/// Structured box mesh, six tets per cell (Freudenthal split along the main
/// diagonal so neighbouring cells conform).
inline TetMesh generate_gel_mesh(const GelSpec& spec) {
  validate(spec);
  const auto [nx, ny, nz] = spec.subdivisions;
  const auto index = [&](int i, int j, int k) { return i + (nx + 1) * (j + (ny + 1) * k); };

  std::vector<Vec3> vertices;
  vertices.reserve((nx + 1) * (ny + 1) * (nz + 1));
  std::vector<int> constrained;
  for (int k = 0; k <= nz; ++k) {
    for (int j = 0; j <= ny; ++j) {
      for (int i = 0; i <= nx; ++i) {
        // Endpoints are set exactly so the footprint is preserved to the last bit.
        const auto lerp = [](double extent, int a, int n) {
          return a == n ? extent / 2 : -extent / 2 + extent * a / n;
        };
        vertices.emplace_back(lerp(spec.base_x, i, nx), lerp(spec.base_y, j, ny),
                              lerp(spec.thickness, k, nz));
        if (k == nz) constrained.push_back(index(i, j, k));
      }
    }
  }

  static constexpr std::array<std::array<int, 3>, 6> kAxisOrders = {
      {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  std::vector<Tet> tets;
  tets.reserve(6 * nx * ny * nz);
  for (int k = 0; k < nz; ++k) {
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) {
        for (const auto& order : kAxisOrders) {
          std::array<int, 3> c = {i, j, k};
          Tet t;
          t[0] = index(c[0], c[1], c[2]);
          for (int s = 0; s < 3; ++s) {
            ++c[order[s]];
            t[s + 1] = index(c[0], c[1], c[2]);
          }
          if (signed_tet_volume(vertices[t[0]], vertices[t[1]], vertices[t[2]], vertices[t[3]]) < 0)
            std::swap(t[2], t[3]);
          tets.push_back(t);
        }
      }
    }
  }

  for (auto& v : vertices) v = spec.pose.apply(v);
  TetMesh mesh = finalize_mesh(std::move(vertices), std::move(tets), std::move(constrained));

  // Sensing face = cells on the k == 0 layer, independent of pose.
  mesh.marker_surface_tris.clear();
  for (const auto& f : mesh.surface_tris) {
    const bool on_face = std::all_of(f.begin(), f.end(), [&](int v) { return v < (nx + 1) * (ny + 1); });
    if (on_face) mesh.marker_surface_tris.push_back(f);
  }
  validate(mesh);
  return mesh;
}

}  // namespace vitac
