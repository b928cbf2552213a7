#pragma once

#include "vitac/geometry/surface_mesh.hpp"

#include <cstdint>
#include <numeric>

namespace vitac {

/// Pinhole depth camera. `pose` maps world points into the camera frame
/// (X right, Y down, Z forward). Pixel (u, v) looks through its integer center.
struct CameraModel {
  RigidTransform pose;
  double fx = 277.0, fy = 277.0;
  double cx = 160.0, cy = 120.0;
  int width = 320, height = 240;
  double near = 0.01, far = 2.0;  // m

  Vec3 ray(int u, int v) const { return {(u - cx) / fx, (v - cy) / fy, 1.0}; }
  Vec2 project(const Vec3& camera_point) const {
    return {cx + fx * camera_point.x() / camera_point.z(), cy + fy * camera_point.y() / camera_point.z()};
  }
};

inline void validate(const CameraModel& c) {
  if (!(c.near > 0.0)) throw Error("config-invalid", "depth near plane must be > 0");
  if (!(c.far > c.near)) throw Error("config-invalid", "depth far plane must exceed near");
  if (!(c.fx > 0.0 && c.fy > 0.0)) throw Error("config-invalid", "focal lengths must be > 0");
  if (c.width < 1 || c.height < 1) throw Error("config-invalid", "image size must be positive");
}

/// World-to-camera transform for a camera at `eye` looking at `target`; image
/// up follows `up` as closely as possible.
inline RigidTransform look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 z = (target - eye).normalized();
  const Vec3 x = z.cross(up).normalized();  // right
  const Vec3 y = z.cross(x);                // down
  Mat3 r;
  r.row(0) = x;
  r.row(1) = y;
  r.row(2) = z;
  return {r, -(r * eye)};
}

struct RenderItem {
  const SurfaceMesh* mesh = nullptr;
  RigidTransform pose;  // local -> world
  int id = 0;           // >= 0
};

inline constexpr float kInvalidDepth = 0.0f;
inline constexpr std::int32_t kNoInstance = -1;

struct DepthRender {
  int width = 0, height = 0;
  std::vector<float> depth;        // row-major, m, kInvalidDepth when nothing is hit
  std::vector<std::int32_t> ids;   // instance id or kNoInstance
  std::vector<std::uint8_t> rgb;   // flat-shaded per-instance color, 3 bytes per pixel

  bool valid(int i) const { return depth[i] != kInvalidDepth; }
};

/// Bounding-volume hierarchy over triangles in the camera frame.
class TriangleBvh {
 public:
  struct Hit {
    double t = std::numeric_limits<double>::infinity();
    int tri = -1;
  };

  TriangleBvh(std::vector<std::array<Vec3, 3>> tris) : tris_(std::move(tris)) {
    if (tris_.empty()) return;
    std::vector<int> order(tris_.size());
    std::iota(order.begin(), order.end(), 0);
    nodes_.reserve(2 * tris_.size());
    nodes_.emplace_back();
    build(0, order, 0, static_cast<int>(order.size()));
    order_ = std::move(order);
  }

  /// Closest hit along origin + t * dir with t in (t_min, t_max); ties resolve
  /// to the lowest triangle index.
  Hit intersect(const Vec3& origin, const Vec3& dir, double t_min, double t_max) const {
    Hit best;
    best.t = t_max;
    if (nodes_.empty()) return {};
    const Vec3 inv(1.0 / dir.x(), 1.0 / dir.y(), 1.0 / dir.z());
    int stack[128];
    int sp = 0;
    stack[sp++] = 0;
    while (sp) {
      const Node& n = nodes_[stack[--sp]];
      if (!slab(n.box, origin, inv, t_min, best.t)) continue;
      if (n.count > 0) {
        for (int i = n.start; i < n.start + n.count; ++i) {
          const int tri = order_[i];
          const double t = ray_triangle(origin, dir, tris_[tri]);
          if (t > t_min && (t < best.t || (t == best.t && tri < best.tri))) {
            best.t = t;
            best.tri = tri;
          }
        }
      } else {
        stack[sp++] = n.left;
        stack[sp++] = n.left + 1;
      }
    }
    if (best.tri < 0) best.t = std::numeric_limits<double>::infinity();
    return best;
  }

  /// Moller-Trumbore; returns the ray parameter or +inf. Edges count as hits.
  static double ray_triangle(const Vec3& o, const Vec3& d, const std::array<Vec3, 3>& tri) {
    const Vec3 e1 = tri[1] - tri[0], e2 = tri[2] - tri[0];
    const Vec3 p = d.cross(e2);
    const double det = e1.dot(p);
    if (det == 0.0) return std::numeric_limits<double>::infinity();
    const double inv = 1.0 / det;
    const Vec3 s = o - tri[0];
    const double u = s.dot(p) * inv;
    if (u < 0.0 || u > 1.0) return std::numeric_limits<double>::infinity();
    const Vec3 q = s.cross(e1);
    const double v = d.dot(q) * inv;
    if (v < 0.0 || u + v > 1.0) return std::numeric_limits<double>::infinity();
    return e2.dot(q) * inv;
  }

  const std::array<Vec3, 3>& triangle(int i) const { return tris_[i]; }

 private:
  struct Node {
    Aabb box;
    int left = -1;   // children at left, left + 1
    int start = 0, count = 0;
  };

  static bool slab(const Aabb& b, const Vec3& o, const Vec3& inv, double t0, double t1) {
    for (int k = 0; k < 3; ++k) {
      double a = (b.lo[k] - o[k]) * inv[k], c = (b.hi[k] - o[k]) * inv[k];
      if (a > c) std::swap(a, c);
      if (std::isnan(a) || std::isnan(c)) continue;  // ray parallel and on a slab plane
      t0 = std::max(t0, a);
      t1 = std::min(t1, c);
      if (t0 > t1) return false;
    }
    return true;
  }

  // Fills nodes_[id] for order[start, end), allocating children as a pair.
  void build(int id, std::vector<int>& order, int start, int end) {
    Aabb box, centers;
    for (int i = start; i < end; ++i) {
      for (const auto& v : tris_[order[i]]) box.expand(v);
      centers.expand(centroid(order[i]));
    }
    nodes_[id].box = box;
    if (end - start <= 4) {
      nodes_[id].start = start;
      nodes_[id].count = end - start;
      return;
    }
    int axis = 0;
    const Vec3 ext = centers.hi - centers.lo;
    if (ext.y() > ext[axis]) axis = 1;
    if (ext.z() > ext[axis]) axis = 2;
    const int mid = (start + end) / 2;
    std::nth_element(order.begin() + start, order.begin() + mid, order.begin() + end, [&](int a, int b) {
      const double ca = centroid(a)[axis], cb = centroid(b)[axis];
      return ca < cb || (ca == cb && a < b);
    });
    const int left = static_cast<int>(nodes_.size());
    nodes_[id].left = left;
    nodes_.emplace_back();
    nodes_.emplace_back();
    build(left, order, start, mid);
    build(left + 1, order, mid, end);
  }

  Vec3 centroid(int t) const { return (tris_[t][0] + tris_[t][1] + tris_[t][2]) / 3.0; }

  std::vector<std::array<Vec3, 3>> tris_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

/// Per-instance tag color.
inline std::array<std::uint8_t, 3> instance_color(int id) {
  static constexpr std::array<std::array<std::uint8_t, 3>, 8> kPalette = {{{230, 80, 60},
                                                                           {70, 160, 220},
                                                                           {90, 190, 100},
                                                                           {240, 200, 60},
                                                                           {170, 100, 200},
                                                                           {60, 200, 190},
                                                                           {240, 140, 40},
                                                                           {150, 150, 150}}};
  return kPalette[static_cast<std::size_t>(id) % kPalette.size()];
}

/// Ground-truth depth (camera-frame Z), instance ids and a flat tag image.
inline DepthRender render_depth(const std::vector<RenderItem>& scene, const CameraModel& cam) {
  validate(cam);
  std::vector<std::array<Vec3, 3>> tris;
  std::vector<int> owner;
  for (const auto& item : scene) {
    for (const auto& t : item.mesh->tris) {
      std::array<Vec3, 3> tri;
      for (int k = 0; k < 3; ++k) tri[k] = cam.pose.apply(item.pose.apply(item.mesh->vertices[t[k]]));
      tris.push_back(tri);
      owner.push_back(item.id);
    }
  }
  const TriangleBvh bvh(std::move(tris));
  DepthRender out;
  out.width = cam.width;
  out.height = cam.height;
  const std::size_t n = static_cast<std::size_t>(cam.width) * cam.height;
  out.depth.assign(n, kInvalidDepth);
  out.ids.assign(n, kNoInstance);
  out.rgb.assign(3 * n, 0);
  for (int v = 0; v < cam.height; ++v) {
    for (int u = 0; u < cam.width; ++u) {
      const Vec3 dir = cam.ray(u, v);  // z component 1, so t is the depth
      const auto hit = bvh.intersect(Vec3::Zero(), dir, 0.0, std::numeric_limits<double>::infinity());
      if (hit.tri < 0 || !(hit.t > cam.near && hit.t < cam.far)) continue;
      const std::size_t i = static_cast<std::size_t>(v) * cam.width + u;
      out.depth[i] = static_cast<float>(hit.t);
      out.ids[i] = owner[hit.tri];
      const auto& tri = bvh.triangle(hit.tri);
      const Vec3 nrm = (tri[1] - tri[0]).cross(tri[2] - tri[0]).normalized();
      const double shade = 0.4 + 0.6 * std::abs(nrm.dot(dir.normalized()));
      const auto c = instance_color(owner[hit.tri]);
      for (int k = 0; k < 3; ++k) out.rgb[3 * i + k] = static_cast<std::uint8_t>(std::lround(c[k] * shade));
    }
  }
  return out;
}

struct PointCloud {
  std::vector<Vec3> points;  // camera frame, m
  std::vector<std::int32_t> labels;
  std::vector<std::array<int, 2>> pixels;  // (u, v) each point came from
};

/// Back-projects every valid (and masked, if a mask is given) pixel.
inline PointCloud depth_to_pointcloud(const DepthRender& r, const CameraModel& cam,
                                      const std::vector<std::uint8_t>* mask = nullptr) {
  PointCloud out;
  for (int v = 0; v < r.height; ++v) {
    for (int u = 0; u < r.width; ++u) {
      const std::size_t i = static_cast<std::size_t>(v) * r.width + u;
      if (!r.valid(i) || (mask && !(*mask)[i])) continue;
      const double z = r.depth[i];
      out.points.emplace_back((u - cam.cx) * z / cam.fx, (v - cam.cy) * z / cam.fy, z);
      out.labels.push_back(r.ids.empty() ? kNoInstance : r.ids[i]);
      out.pixels.push_back({u, v});
    }
  }
  return out;
}

struct InstanceMask {
  std::vector<std::uint8_t> mask;
  bool unknown_id = false;  // some target id never appears in the render
};

inline InstanceMask segment_instances(const std::vector<std::int32_t>& ids, const std::vector<int>& targets) {
  InstanceMask out;
  out.mask.assign(ids.size(), 0);
  std::vector<bool> seen(targets.size(), false);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t k = 0; k < targets.size(); ++k) {
      if (ids[i] == targets[k]) {
        out.mask[i] = 1;
        seen[k] = true;
      }
    }
  }
  out.unknown_id = std::find(seen.begin(), seen.end(), false) != seen.end();
  return out;
}

}  // namespace vitac
