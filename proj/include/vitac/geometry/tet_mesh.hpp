#pragma once

#include "vitac/core/types.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace vitac {

/// Raised by mesh construction/loading. Codes: mesh-parse, mesh-inverted-tet,
/// mesh-non-manifold, mesh-invalid.
class MeshError : public Error {
 public:
  using Error::Error;
};

inline double signed_tet_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  return (b - a).dot((c - a).cross(d - a)) / 6.0;
}

/// Volumetric elastomer mesh. Vertices are rest positions in the gel frame.
struct TetMesh {
  std::vector<Vec3> vertices;
  std::vector<Tet> tets;
  std::vector<Tri> surface_tris;          // outward oriented
  std::vector<int> constrained_set;       // sorted, attached to the sensor shell
  std::vector<Tri> marker_surface_tris;   // subset of surface_tris

  int num_vertices() const { return static_cast<int>(vertices.size()); }
  int num_tets() const { return static_cast<int>(tets.size()); }

  double rest_volume(int t) const {
    const auto& e = tets[t];
    return signed_tet_volume(vertices[e[0]], vertices[e[1]], vertices[e[2]], vertices[e[3]]);
  }

  std::vector<bool> constrained_mask() const {
    std::vector<bool> mask(vertices.size(), false);
    for (int i : constrained_set) mask[i] = true;
    return mask;
  }
};

namespace detail {
inline Tri sorted_tri(Tri t) {
  std::sort(t.begin(), t.end());
  return t;
}
}  // namespace detail

/// Boundary faces of a tet complex, oriented outward (tets must be positively
/// oriented). Throws mesh-non-manifold if a face is shared by more than two tets
/// or the boundary surface is not edge-manifold.
inline std::vector<Tri> extract_boundary(const std::vector<Tet>& tets) {
  std::map<Tri, std::pair<int, Tri>> faces;  // sorted key -> (count, oriented face)
  for (const auto& t : tets) {
    const std::array<Tri, 4> local = {Tri{t[0], t[2], t[1]}, Tri{t[0], t[1], t[3]},
                                      Tri{t[0], t[3], t[2]}, Tri{t[1], t[2], t[3]}};
    for (const auto& f : local) {
      auto& slot = faces[detail::sorted_tri(f)];
      if (slot.first == 0) slot.second = f;
      ++slot.first;
    }
  }
  std::vector<Tri> boundary;
  for (const auto& [key, slot] : faces) {
    if (slot.first > 2) throw MeshError("mesh-non-manifold", "face shared by more than two tets");
    if (slot.first == 1) boundary.push_back(slot.second);
  }
  // Every directed boundary edge must be matched by exactly one opposite edge.
  std::map<Edge, int> directed;
  for (const auto& f : boundary) {
    for (int k = 0; k < 3; ++k) ++directed[Edge{f[k], f[(k + 1) % 3]}];
  }
  for (const auto& [e, n] : directed) {
    auto opp = directed.find(Edge{e[1], e[0]});
    if (n != 1 || opp == directed.end() || opp->second != 1)
      throw MeshError("mesh-non-manifold", "boundary surface is not edge-manifold");
  }
  return boundary;
}

/// Unique undirected edges of a triangle list, sorted.
inline std::vector<Edge> unique_edges(const std::vector<Tri>& tris) {
  std::set<Edge> edges;
  for (const auto& f : tris) {
    for (int k = 0; k < 3; ++k) {
      int a = f[k], b = f[(k + 1) % 3];
      edges.insert(Edge{std::min(a, b), std::max(a, b)});
    }
  }
  return {edges.begin(), edges.end()};
}

/// Sorted unique vertex indices referenced by a triangle list.
inline std::vector<int> referenced_vertices(const std::vector<Tri>& tris) {
  std::set<int> v;
  for (const auto& f : tris) v.insert(f.begin(), f.end());
  return {v.begin(), v.end()};
}

/// V - E + F of a closed triangle surface.
inline int euler_characteristic(const std::vector<Tri>& tris) {
  return static_cast<int>(referenced_vertices(tris).size()) -
         static_cast<int>(unique_edges(tris).size()) + static_cast<int>(tris.size());
}

/// Checks every TetMesh invariant; throws MeshError on the first violation.
inline void validate(const TetMesh& mesh) {
  const int n = mesh.num_vertices();
  for (int t = 0; t < mesh.num_tets(); ++t) {
    for (int i : mesh.tets[t])
      if (i < 0 || i >= n) throw MeshError("mesh-invalid", "tet references missing vertex");
    if (!(mesh.rest_volume(t) > 0.0))
      throw MeshError("mesh-inverted-tet", "tet " + std::to_string(t) + " has non-positive volume");
  }
  const auto boundary = extract_boundary(mesh.tets);
  std::set<Tri> expected, actual;
  for (const auto& f : boundary) expected.insert(detail::sorted_tri(f));
  for (const auto& f : mesh.surface_tris) actual.insert(detail::sorted_tri(f));
  if (expected != actual || actual.size() != mesh.surface_tris.size())
    throw MeshError("mesh-invalid", "surface_tris is not the boundary of the tet complex");
  const auto mask = mesh.constrained_mask();
  for (int i : mesh.constrained_set)
    if (i < 0 || i >= n) throw MeshError("mesh-invalid", "constrained vertex out of range");
  for (const auto& f : mesh.marker_surface_tris) {
    if (!actual.count(detail::sorted_tri(f)))
      throw MeshError("mesh-invalid", "marker facet is not a surface facet");
    for (int i : f)
      if (mask[i]) throw MeshError("mesh-invalid", "marker facet touches a constrained vertex");
  }
}

struct AxisAlignedBox {
  Vec3 min = Vec3::Constant(-std::numeric_limits<double>::infinity());
  Vec3 max = Vec3::Constant(std::numeric_limits<double>::infinity());

  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

/// Default sensing surface: boundary facets facing -z whose vertices are all free.
inline std::vector<Tri> select_sensing_facets(const TetMesh& mesh, double min_cos = 0.9) {
  const auto mask = mesh.constrained_mask();
  std::vector<Tri> out;
  for (const auto& f : mesh.surface_tris) {
    const Vec3& a = mesh.vertices[f[0]];
    const Vec3 n = (mesh.vertices[f[1]] - a).cross(mesh.vertices[f[2]] - a).normalized();
    if (-n.z() < min_cos) continue;
    if (mask[f[0]] || mask[f[1]] || mask[f[2]]) continue;
    out.push_back(f);
  }
  return out;
}

/// Fills in surface and sensing facets from vertices/tets/constrained set, then validates.
inline TetMesh finalize_mesh(std::vector<Vec3> vertices, std::vector<Tet> tets,
                             std::vector<int> constrained) {
  TetMesh mesh;
  mesh.vertices = std::move(vertices);
  mesh.tets = std::move(tets);
  std::sort(constrained.begin(), constrained.end());
  constrained.erase(std::unique(constrained.begin(), constrained.end()), constrained.end());
  mesh.constrained_set = std::move(constrained);
  for (int t = 0; t < mesh.num_tets(); ++t) {
    if (!(mesh.rest_volume(t) > 0.0))
      throw MeshError("mesh-inverted-tet", "tet " + std::to_string(t) + " has non-positive volume");
  }
  mesh.surface_tris = extract_boundary(mesh.tets);
  mesh.marker_surface_tris = select_sensing_facets(mesh);
  validate(mesh);
  return mesh;
}

}  // namespace vitac
