#pragma once

#include "vitac/geometry/tet_mesh.hpp"

#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

namespace vitac {

// Text format:
//   tetmesh v1 unit=m          (unit=mm also accepted)
//   v x y z
//   t i j k l                  (0-based, positively oriented)
//   c i                        (optional constrained vertex)
// Blank lines and lines starting with '#' are ignored.

inline TetMesh parse_tet_mesh(std::istream& in, const std::optional<AxisAlignedBox>& constrained_selector = {}) {
  std::string line;
  int line_no = 0;
  const auto fail = [&](const std::string& why) {
    throw MeshError("mesh-parse", "line " + std::to_string(line_no) + ": " + why);
  };

  double scale = 0.0;
  while (scale == 0.0 && std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream hs(line);
    std::string magic, version, unit;
    hs >> magic >> version >> unit;
    if (magic != "tetmesh" || version != "v1") fail("expected header 'tetmesh v1 unit=<m|mm>'");
    if (unit == "unit=m") scale = 1.0;
    else if (unit == "unit=mm") scale = 1e-3;
    else fail("unknown unit '" + unit + "'");
  }
  if (scale == 0.0) fail("missing header");

  std::vector<Vec3> vertices;
  std::vector<Tet> tets;
  std::vector<int> constrained;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      Vec3 p;
      if (!(ls >> p.x() >> p.y() >> p.z())) fail("bad vertex");
      vertices.push_back(p * scale);
    } else if (tag == "t") {
      Tet t;
      if (!(ls >> t[0] >> t[1] >> t[2] >> t[3])) fail("bad tet");
      tets.push_back(t);
    } else if (tag == "c") {
      int i;
      if (!(ls >> i)) fail("bad constrained index");
      constrained.push_back(i);
    } else {
      fail("unknown record '" + tag + "'");
    }
    std::string extra;
    if (ls >> extra) fail("trailing tokens");
  }
  const int n = static_cast<int>(vertices.size());
  for (const auto& t : tets)
    for (int i : t)
      if (i < 0 || i >= n) throw MeshError("mesh-parse", "tet index out of range");
  for (int i : constrained)
    if (i < 0 || i >= n) throw MeshError("mesh-parse", "constrained index out of range");
  if (tets.empty()) throw MeshError("mesh-parse", "mesh has no tets");

  if (constrained_selector) {
    for (int i = 0; i < n; ++i)
      if (constrained_selector->contains(vertices[i])) constrained.push_back(i);
  }
  return finalize_mesh(std::move(vertices), std::move(tets), std::move(constrained));
}

inline TetMesh load_tet_mesh(const std::string& path, const std::optional<AxisAlignedBox>& constrained_selector = {}) {
  std::ifstream in(path);
  if (!in) throw MeshError("mesh-parse", "cannot open " + path);
  return parse_tet_mesh(in, constrained_selector);
}

inline void write_tet_mesh(std::ostream& out, const TetMesh& mesh) {
  out << "tetmesh v1 unit=m\n" << std::setprecision(17);
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : mesh.tets) out << "t " << t[0] << ' ' << t[1] << ' ' << t[2] << ' ' << t[3] << '\n';
  for (int i : mesh.constrained_set) out << "c " << i << '\n';
}

inline void save_tet_mesh(const std::string& path, const TetMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw MeshError("mesh-parse", "cannot write " + path);
  write_tet_mesh(out, mesh);
}

}  // namespace vitac
