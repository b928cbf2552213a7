#pragma once

#include "vitac/fem/neo_hookean.hpp"
#include "vitac/geometry/surface_mesh.hpp"

#include <memory>

namespace vitac {

/// Immutable per-mesh data shared by every gel built from the same mesh.
struct GelModel {
  std::shared_ptr<const TetMesh> mesh;
  std::vector<ElasticElement> elements;
  std::vector<double> vertex_volume;   // lumped rest volume
  std::vector<bool> constrained;
  std::vector<int> surface_vertices;
  std::vector<Edge> surface_edges;
  std::vector<double> vertex_area;     // per vertex, surface area share
  std::vector<double> edge_area;       // per surface edge
  std::vector<double> tri_area;        // per surface tri

  static std::shared_ptr<const GelModel> build(std::shared_ptr<const TetMesh> mesh) {
    auto m = std::make_shared<GelModel>();
    m->mesh = mesh;
    m->elements = make_elements(*mesh);
    m->vertex_volume.assign(mesh->num_vertices(), 0.0);
    for (int t = 0; t < mesh->num_tets(); ++t)
      for (int v : mesh->tets[t]) m->vertex_volume[v] += m->elements[t].volume / 4.0;
    m->constrained = mesh->constrained_mask();
    m->surface_vertices = referenced_vertices(mesh->surface_tris);
    m->surface_edges = unique_edges(mesh->surface_tris);
    m->vertex_area.assign(mesh->num_vertices(), 0.0);
    std::map<Edge, double> edge_area;
    for (const auto& f : mesh->surface_tris) {
      const Vec3& a = mesh->vertices[f[0]];
      const double area = 0.5 * (mesh->vertices[f[1]] - a).cross(mesh->vertices[f[2]] - a).norm();
      m->tri_area.push_back(area);
      for (int k = 0; k < 3; ++k) {
        m->vertex_area[f[k]] += area / 3.0;
        const int p = f[k], q = f[(k + 1) % 3];
        edge_area[Edge{std::min(p, q), std::max(p, q)}] += area / 3.0;
      }
    }
    for (const auto& e : m->surface_edges) m->edge_area.push_back(edge_area[e]);
    return m;
  }
};

struct GelBody {
  std::shared_ptr<const GelModel> model;
  std::vector<Vec3> x;  // current world positions of every vertex
};

/// Rigid collision body. A dynamic body has its translation solved for; its
/// rotation is prescribed. It is tied to `anchor` by a linear spring.
struct RigidBody {
  std::shared_ptr<const SurfaceMesh> shape;
  RigidTransform pose;
  bool dynamic = false;
  Vec3 anchor = Vec3::Zero();
  double tether_stiffness = 0.0;  // N/m
  double mass = 0.0;              // kg, scales the proximity term
  int id = 0;

  std::vector<Vec3> world_vertices() const {
    std::vector<Vec3> out;
    out.reserve(shape->vertices.size());
    for (const auto& v : shape->vertices) out.push_back(pose.apply(v));
    return out;
  }
};

struct SimState {
  std::vector<GelBody> gels;
  std::vector<RigidBody> rigids;
  double kappa = 1e4;  // adaptive barrier stiffness, carried across solves

  int num_bodies() const { return static_cast<int>(gels.size() + rigids.size()); }
};

/// World positions of every collision-relevant vertex, per body: gels first
/// (all mesh vertices), then rigid bodies (shape vertices).
struct Configuration {
  std::vector<std::vector<Vec3>> bodies;
};

inline Configuration configuration_of(const SimState& s) {
  Configuration c;
  for (const auto& g : s.gels) c.bodies.push_back(g.x);
  for (const auto& r : s.rigids) c.bodies.push_back(r.world_vertices());
  return c;
}

/// Minimum tet volume ratio J over every gel (positive means inversion-free).
inline double min_jacobian(const SimState& s, const Configuration& c) {
  double j = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < s.gels.size(); ++g) {
    const auto& model = *s.gels[g].model;
    const auto& x = c.bodies[g];
    for (int t = 0; t < model.mesh->num_tets(); ++t) {
      const auto& tet = model.mesh->tets[t];
      j = std::min(j, deformation_gradient(model.elements[t], x[tet[0]], x[tet[1]], x[tet[2]], x[tet[3]]).determinant());
    }
  }
  return j;
}

}  // namespace vitac
