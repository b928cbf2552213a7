#pragma once

#include "vitac/geometry/surface_mesh.hpp"

namespace vitac {

/// Prism cross-section of a peg, counter-clockwise, centered on its axis, with
/// a pair of flats facing +-y for the gels to grip.
struct PegShape {
  std::string name;
  std::vector<Vec2> section;  // m
  int symmetry = 1;           // rotational order of the section
  double half_width_y = 0.0;  // distance from axis to the gripped flats
};

/// Regular n-gon with apothem `a` whose flats face +-y.
inline std::vector<Vec2> regular_polygon_with_flats(int n, double a) {
  const double r = a / std::cos(kPi / n);
  // A vertex at angle phi0 + k * 2pi/n; an edge is centered on +y when the
  // two vertices around 90 degrees are symmetric.
  const double phi0 = kPi / 2 - kPi / n;
  std::vector<Vec2> out;
  for (int k = 0; k < n; ++k) {
    const double phi = phi0 + 2 * kPi * k / n;
    out.emplace_back(r * std::cos(phi), r * std::sin(phi));
  }
  return out;
}

inline constexpr int kNumPegShapes = 3;

inline PegShape peg_shape(int id, double width = 8e-3) {
  const double a = width / 2;
  switch (id) {
    case 0: return {"square", {{-a, -a}, {a, -a}, {a, a}, {-a, a}}, 4, a};
    case 1: return {"hexagon", regular_polygon_with_flats(6, a), 6, a};
    case 2: return {"octagon", regular_polygon_with_flats(8, a), 8, a};
    default: throw Error("unknown-asset", "unknown peg id " + std::to_string(id));
  }
}

/// Peg prism with its bottom face at z = 0.
inline SurfaceMesh make_peg(const PegShape& shape, double height) { return make_prism(shape.section, 0.0, height); }

/// Hole cross-section for a peg: the section pushed out by `clearance`.
inline std::vector<Vec2> hole_section(const PegShape& shape, double clearance) {
  if (clearance == 0.0) return shape.section;
  return offset_convex_polygon(shape.section, clearance);
}

/// Closed square tile [-half, half]^2 x [-(depth + base), 0] with a convex hole
/// of the given depth through its top face. The hole must contain the origin.
/// The top face is split into one convex sector per hole edge, bounded by the
/// rays from the origin through the edge's endpoints.
inline SurfaceMesh make_hole_tile(const std::vector<Vec2>& hole, double half, double depth, double base) {
  SurfaceMesh m;
  const int n = static_cast<int>(hole.size());
  const double z_bot = -(depth + base);
  const std::array<Vec2, 4> corners = {Vec2(half, -half), Vec2(half, half), Vec2(-half, half), Vec2(-half, -half)};
  const auto corner_angle = [](const Vec2& c) { return std::atan2(c.y(), c.x()); };
  // Point where the ray from the origin through p leaves the square.
  const auto on_square = [&](const Vec2& p) {
    const double s = half / std::max(std::abs(p.x()), std::abs(p.y()));
    return Vec2(p * s);
  };
  const auto angle_in = [](double a, double lo, double hi) {
    // a strictly inside the counter-clockwise arc lo -> hi
    const auto wrap = [](double x) {
      while (x < 0) x += 2 * kPi;
      while (x >= 2 * kPi) x -= 2 * kPi;
      return x;
    };
    const double span = wrap(hi - lo), off = wrap(a - lo);
    return off > 0 && off < span;
  };

  for (int i = 0; i < n; ++i) {
    const Vec2& h0 = hole[i];
    const Vec2& h1 = hole[(i + 1) % n];
    std::vector<Vec2> outer = {on_square(h0)};
    const double a0 = std::atan2(h0.y(), h0.x()), a1 = std::atan2(h1.y(), h1.x());
    std::vector<std::pair<double, Vec2>> between;
    for (const auto& c : corners) {
      if (angle_in(corner_angle(c), a0, a1)) {
        double off = corner_angle(c) - a0;
        while (off < 0) off += 2 * kPi;
        between.emplace_back(off, c);
      }
    }
    std::sort(between.begin(), between.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    for (const auto& b : between) outer.push_back(b.second);
    outer.push_back(on_square(h1));
    // Sector polygon, counter-clockwise: h1, h0, outer...
    std::vector<int> poly = {m.add_vertex({h1.x(), h1.y(), 0.0}), m.add_vertex({h0.x(), h0.y(), 0.0})};
    for (const auto& p : outer) poly.push_back(m.add_vertex({p.x(), p.y(), 0.0}));
    // Orientation of h1, h0, outer is clockwise seen from +z? Check with the
    // signed area and emit the fan facing +z.
    std::vector<Vec2> poly2;
    for (int id : poly) poly2.emplace_back(m.vertices[id].x(), m.vertices[id].y());
    const bool ccw = polygon_area(poly2) > 0;
    for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
      if (ccw)
        m.tris.push_back({poly[0], poly[k], poly[k + 1]});
      else
        m.tris.push_back({poly[0], poly[k + 1], poly[k]});
    }
  }
  // Hole walls facing the hole axis, and the hole floor facing +z.
  std::vector<int> top(n), bottom(n);
  for (int i = 0; i < n; ++i) {
    top[i] = m.add_vertex({hole[i].x(), hole[i].y(), 0.0});
    bottom[i] = m.add_vertex({hole[i].x(), hole[i].y(), -depth});
  }
  for (int i = 0; i < n; ++i) {
    const int j = (i + 1) % n;
    m.tris.push_back({top[i], bottom[j], bottom[i]});
    m.tris.push_back({top[i], top[j], bottom[j]});
  }
  for (int i = 1; i + 1 < n; ++i) m.tris.push_back({bottom[0], bottom[i], bottom[i + 1]});
  // Outer block sides and base.
  std::array<int, 4> ot, ob;
  for (int k = 0; k < 4; ++k) {
    ot[k] = m.add_vertex({corners[k].x(), corners[k].y(), 0.0});
    ob[k] = m.add_vertex({corners[k].x(), corners[k].y(), z_bot});
  }
  for (int k = 0; k < 4; ++k) {
    const int l = (k + 1) % 4;
    m.tris.push_back({ob[k], ob[l], ot[l]});
    m.tris.push_back({ob[k], ot[l], ot[k]});
  }
  m.tris.push_back({ob[0], ob[2], ob[1]});
  m.tris.push_back({ob[0], ob[3], ob[2]});
  m.finalize();
  return m;
}

/// Box [lo, hi] as a closed mesh.
inline SurfaceMesh make_box(const Vec3& lo, const Vec3& hi) {
  return make_prism({{lo.x(), lo.y()}, {hi.x(), lo.y()}, {hi.x(), hi.y()}, {lo.x(), hi.y()}}, lo.z(), hi.z());
}

/// Flat key hanging blade-down: a bow for the gels at the top, a blade below
/// it and four teeth sticking out of the blade's +x edge. Local origin at the
/// blade tip center.
struct KeySpec {
  std::array<double, 4> teeth = {2e-3, 3e-3, 1e-3, 2e-3};  // protrusion along +x
  std::array<double, 4> tooth_z = {2.5e-3, 6e-3, 9.5e-3, 13e-3};
  double tooth_height = 2.5e-3;
  double blade_half_x = 3e-3, blade_half_y = 1e-3, blade_length = 30e-3;
  double bow_half_x = 5e-3, bow_half_y = 2e-3, bow_height = 12e-3;

  /// Reference point of tooth i (its tip center) in the key frame.
  Vec3 tooth_tip(int i) const { return {blade_half_x + teeth[i], 0.0, tooth_z[i]}; }
  double max_tooth() const { return *std::max_element(teeth.begin(), teeth.end()); }
};

inline constexpr int kNumKeys = 4;

inline KeySpec key_spec(int id) {
  static constexpr std::array<std::array<double, 4>, kNumKeys> kTeeth = {
      {{2e-3, 3e-3, 1e-3, 2e-3}, {3e-3, 1e-3, 2e-3, 3e-3}, {1e-3, 2e-3, 3e-3, 1e-3}, {2e-3, 1e-3, 3e-3, 2e-3}}};
  if (id < 0 || id >= kNumKeys) throw Error("unknown-asset", "unknown key id " + std::to_string(id));
  KeySpec k;
  k.teeth = kTeeth[id];
  return k;
}

inline SurfaceMesh make_key(const KeySpec& k) {
  SurfaceMesh m = make_box({-k.blade_half_x, -k.blade_half_y, 0.0}, {k.blade_half_x, k.blade_half_y, k.blade_length});
  for (int i = 0; i < 4; ++i) {
    m.append(make_box({k.blade_half_x, -k.blade_half_y, k.tooth_z[i] - k.tooth_height / 2},
                      {k.blade_half_x + k.teeth[i], k.blade_half_y, k.tooth_z[i] + k.tooth_height / 2}));
  }
  m.append(make_box({-k.bow_half_x, -k.bow_half_y, k.blade_length},
                    {k.bow_half_x, k.bow_half_y, k.blade_length + k.bow_height}));
  return m;
}

/// Keyway of a lock: the convex hull of the blade and teeth profile pushed out
/// by `clearance`.
inline std::vector<Vec2> keyway_section(const KeySpec& k, double clearance) {
  const double x0 = -k.blade_half_x - clearance, x1 = k.blade_half_x + k.max_tooth() + clearance;
  const double y = k.blade_half_y + clearance;
  return {{x0, -y}, {x1, -y}, {x1, y}, {x0, y}};
}

/// Groove (pin) targets of a lock matched to key `k`, in the lock frame (top
/// face at z = 0), for a key pushed in to `insertion`.
inline std::array<Vec3, 4> lock_pins(const KeySpec& k, double insertion) {
  std::array<Vec3, 4> out;
  for (int i = 0; i < 4; ++i) out[i] = k.tooth_tip(i) - Vec3(0, 0, insertion);
  return out;
}

}  // namespace vitac
