#include <catch_amalgamated.hpp>

#include "vitac/geometry/gel_mesh.hpp"
#include "vitac/geometry/marker_binding.hpp"
#include "vitac/geometry/mesh_io.hpp"

#include <random>
#include <sstream>

using namespace vitac;
using Catch::Matchers::WithinAbs;

namespace {

std::pair<Vec3, Vec3> bounds(const TetMesh& m) {
  Vec3 lo = Vec3::Constant(1e9), hi = Vec3::Constant(-1e9);
  for (const auto& v : m.vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  return {lo, hi};
}

const char* kSingleTet =
    "tetmesh v1 unit=m\n"
    "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\n"
    "t 0 1 2 3\n";

}  // namespace

TEST_CASE("default gel lattice has 189 vertices and 63 constrained", "[geometry]") {
  const TetMesh m = generate_gel_mesh(GelSpec{});
  CHECK(m.num_vertices() == 189);
  CHECK(m.constrained_set.size() == 63);
  CHECK(m.num_tets() == 6 * 8 * 6 * 2);
  for (int i : m.constrained_set) CHECK(m.vertices[i].z() == 0.002);
}

TEST_CASE("unit subdivision gives 8 vertices, 4 constrained", "[geometry]") {
  GelSpec spec;
  spec.subdivisions = {1, 1, 1};
  const TetMesh m = generate_gel_mesh(spec);
  CHECK(m.num_vertices() == 8);
  CHECK(m.constrained_set.size() == 4);
  CHECK(m.surface_tris.size() == 12);
}

TEST_CASE("gel footprint is preserved", "[geometry]") {
  const auto [lo, hi] = bounds(generate_gel_mesh(GelSpec{}));
  CHECK_THAT(hi.x() - lo.x(), WithinAbs(0.02525, 1e-12));
  CHECK_THAT(hi.y() - lo.y(), WithinAbs(0.02075, 1e-12));
  CHECK_THAT(hi.z() - lo.z(), WithinAbs(0.004, 1e-12));
}

TEST_CASE("degenerate gel dimensions are rejected", "[geometry]") {
  GelSpec spec;
  spec.thickness = 0.0;
  CHECK_THROWS_AS(generate_gel_mesh(spec), MeshError);
  spec = GelSpec{};
  spec.subdivisions = {0, 1, 1};
  CHECK_THROWS_AS(generate_gel_mesh(spec), MeshError);
}

TEST_CASE("gel mesh invariants", "[geometry]") {
  const TetMesh m = generate_gel_mesh(GelSpec{});
  REQUIRE_NOTHROW(validate(m));
  CHECK(euler_characteristic(m.surface_tris) == 2);
  for (int t = 0; t < m.num_tets(); ++t) CHECK(m.rest_volume(t) > 0);
  // Sensing face is the z = -t/2 layer, disjoint from the constrained face.
  CHECK(m.marker_surface_tris.size() == 2 * 8 * 6);
  for (const auto& f : m.marker_surface_tris)
    for (int v : f) CHECK(m.vertices[v].z() == -0.002);
  // Every surface vertex belongs to a tet.
  std::vector<bool> used(m.num_vertices(), false);
  for (const auto& t : m.tets)
    for (int v : t) used[v] = true;
  for (const auto& f : m.surface_tris)
    for (int v : f) CHECK(used[v]);
  // Outward orientation: divergence theorem gives the box volume.
  double vol = 0;
  for (const auto& f : m.surface_tris)
    vol += m.vertices[f[0]].dot(m.vertices[f[1]].cross(m.vertices[f[2]])) / 6.0;
  CHECK_THAT(vol, WithinAbs(0.02525 * 0.02075 * 0.004, 1e-15));
}

TEST_CASE("posed gel keeps its sensing face", "[geometry]") {
  GelSpec spec;
  spec.pose = RigidTransform::from_axis_angle(Vec3::UnitX(), kPi / 2, Vec3(0, 0.01, 0));
  const TetMesh m = generate_gel_mesh(spec);
  CHECK(m.marker_surface_tris.size() == 96);
  CHECK(m.constrained_set.size() == 63);
}

TEST_CASE("single tet file", "[geometry]") {
  std::istringstream in(kSingleTet);
  const TetMesh m = parse_tet_mesh(in);
  CHECK(m.num_vertices() == 4);
  CHECK(m.surface_tris.size() == 4);
  CHECK(euler_characteristic(m.surface_tris) == 2);
}

TEST_CASE("mesh file errors carry distinct codes", "[geometry]") {
  const auto code_of = [](const std::string& text) -> std::string {
    std::istringstream in(text);
    try {
      parse_tet_mesh(in);
    } catch (const MeshError& e) {
      return e.code();
    }
    return "none";
  };
  CHECK(code_of("tetmesh v1 unit=m\nv 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nt 0 2 1 3\n") == "mesh-inverted-tet");
  CHECK(code_of("tetmesh v1 unit=m\nv 0 0 0\nq 1\n") == "mesh-parse");
  CHECK(code_of("not a mesh\n") == "mesh-parse");
  CHECK(code_of("tetmesh v1 unit=m\nv 0 0 0\nt 0 1 2 3\n") == "mesh-parse");
  // Two tets sharing only an edge.
  CHECK(code_of("tetmesh v1 unit=m\n"
                "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nv 0 0 -1\nv 0 -1 0\n"
                "t 0 1 2 3\nt 0 1 5 4\n") == "mesh-non-manifold");
}

TEST_CASE("mm unit header scales to meters", "[geometry]") {
  std::istringstream in("tetmesh v1 unit=mm\nv 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nt 0 1 2 3\n");
  const TetMesh m = parse_tet_mesh(in);
  CHECK(m.vertices[1].x() == 1e-3);
}

TEST_CASE("selector picks the top face of the default box", "[geometry]") {
  GelSpec spec;
  TetMesh gen = generate_gel_mesh(spec);
  std::stringstream file;
  gen.constrained_set.clear();
  write_tet_mesh(file, gen);
  AxisAlignedBox top;
  top.min = Vec3(-1, -1, 0.002 - 1e-9);
  const TetMesh m = parse_tet_mesh(file, top);
  CHECK(m.constrained_set.size() == 63);
  CHECK(m.num_vertices() == 189);
}

TEST_CASE("mesh round-trips through the text format", "[geometry]") {
  const TetMesh a = generate_gel_mesh(GelSpec{});
  std::stringstream file;
  write_tet_mesh(file, a);
  const TetMesh b = parse_tet_mesh(file);
  CHECK(a.vertices == b.vertices);
  CHECK(a.tets == b.tets);
  CHECK(a.constrained_set == b.constrained_set);
}

TEST_CASE("closest point barycentric cases", "[geometry]") {
  const Vec3 a(0, 0, 0), b(1, 0, 0), c(0, 1, 0);
  const Vec3 w = closest_point_barycentric(Vec3(1.0 / 3, 1.0 / 3, 0), a, b, c);
  CHECK_THAT(w[0], WithinAbs(1.0 / 3, 1e-15));
  CHECK_THAT(w[1], WithinAbs(1.0 / 3, 1e-15));
  CHECK_THAT(w[2], WithinAbs(1.0 / 3, 1e-15));
  const Vec3 p = w[0] * a + w[1] * b + w[2] * c;
  CHECK_THAT((p - Vec3(1.0 / 3, 1.0 / 3, 0)).norm(), WithinAbs(0, 1e-15));
  CHECK(closest_point_barycentric(b, a, b, c) == Vec3(0, 1, 0));
  CHECK_THAT(point_triangle_distance(Vec3(0.2, 0.2, 0.5), a, b, c), WithinAbs(0.5, 1e-15));
  CHECK_THAT(segment_segment_distance(Vec3(0, 0, 1), Vec3(1, 0, 1), Vec3(0.5, -1, 0), Vec3(0.5, 1, 0)),
             WithinAbs(1.0, 1e-15));
}

TEST_CASE("marker binding on the default gel", "[geometry]") {
  const TetMesh m = generate_gel_mesh(GelSpec{});
  const MarkerGrid grid;
  const MarkerBinding bind = bind_markers(m, grid);
  REQUIRE(bind.size() == 63);
  const auto pts = grid.points();
  for (int i = 0; i < bind.size(); ++i) {
    const Vec3& w = bind.weights[i];
    CHECK((w.array() >= 0).all());
    CHECK_THAT(w.sum(), WithinAbs(1.0, 1e-12));
    CHECK(bind.facet[i] >= 0);
    CHECK(bind.facet[i] < static_cast<int>(m.marker_surface_tris.size()));
    Vec3 p = Vec3::Zero();
    for (int k = 0; k < 3; ++k) p += w[k] * m.vertices[bind.vertices[i][k]];
    CHECK((p - Vec3(pts[i].x(), pts[i].y(), -0.002)).norm() < 1e-10);
  }
}

TEST_CASE("default marker spacing leaves a 1.5 mm margin", "[geometry]") {
  const double s = marker_spacing_for_margin(0.02525, 0.02075, 7, 9, 1.5e-3);
  CHECK_THAT(s, WithinAbs(MarkerGrid{}.spacing, 1e-15));
}

TEST_CASE("marker on a facet vertex gets a unit weight", "[geometry]") {
  GelSpec spec;
  spec.subdivisions = {1, 1, 1};
  const TetMesh m = generate_gel_mesh(spec);
  const MarkerBinding b = bind_points(m, {m.vertices[0]});
  CHECK(b.weights[0].maxCoeff() == 1.0);
  CHECK(b.weights[0].sum() == 1.0);
}

TEST_CASE("marker outside the face is rejected with its index", "[geometry]") {
  const TetMesh m = generate_gel_mesh(GelSpec{});
  MarkerGrid grid;
  grid.spacing = 4e-3;
  try {
    bind_markers(m, grid);
    FAIL("expected out-of-bounds");
  } catch (const MarkerOutOfBounds& e) {
    CHECK(e.code() == "marker-out-of-bounds");
    CHECK(e.marker() == 0);
  }
}

TEST_CASE("random points on the face reconstruct exactly", "[geometry]") {
  const TetMesh m = generate_gel_mesh(GelSpec{});
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ux(-0.0126, 0.0126), uy(-0.0103, 0.0103);
  std::vector<Vec3> pts;
  for (int i = 0; i < 500; ++i) pts.emplace_back(ux(rng), uy(rng), -0.002);
  const MarkerBinding b = bind_points(m, pts);
  for (int i = 0; i < b.size(); ++i) {
    Vec3 p = Vec3::Zero();
    for (int k = 0; k < 3; ++k) p += b.weights[i][k] * m.vertices[b.vertices[i][k]];
    CHECK((p - pts[i]).norm() < 1e-10);
    CHECK_THAT(b.weights[i].sum(), WithinAbs(1.0, 1e-12));
  }
}
