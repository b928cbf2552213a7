#pragma once

#include "vitac/geometry/marker_binding.hpp"

#include <cstdint>
#include <numeric>
#include <random>

namespace vitac {

/// Marker positions from the current vertex positions of the bound mesh.
inline std::vector<Vec3> marker_world_positions(const MarkerBinding& binding, const std::vector<Vec3>& positions) {
  std::vector<Vec3> out;
  out.reserve(binding.size());
  for (int i = 0; i < binding.size(); ++i) {
    const Tri& t = binding.vertices[i];
    const Vec3& k = binding.weights[i];
    out.push_back(k[0] * positions[t[0]] + k[1] * positions[t[1]] + k[2] * positions[t[2]]);
  }
  return out;
}

/// Gel-to-camera transform for a camera on the +z side of the gel looking down
/// -z with its optical center at (0, 0, offset) in the gel frame.
inline RigidTransform camera_pose_behind_gel(double offset) {
  RigidTransform t;
  t.rotation = Vec3(1.0, -1.0, -1.0).asDiagonal();
  t.translation = t.rotation * Vec3(0, 0, -offset);
  return t;
}

/// Pinhole camera behind the gel. `pose` maps gel-frame points into the camera
/// frame (Z along the optical axis).
struct SensorCamera {
  double optical_center_offset = 0.020;  // m, optical center to gel-frame center
  RigidTransform pose = camera_pose_behind_gel(optical_center_offset);
  double fx = 265.0, fy = 265.0;
  double cx = 160.0, cy = 120.0;
  int width = 320, height = 240;
};

inline void validate(const SensorCamera& c) {
  if (!(c.fx > 0.0 && c.fy > 0.0)) throw Error("config-invalid", "focal lengths must be > 0");
  if (c.width < 1 || c.height < 1) throw Error("config-invalid", "image size must be positive");
  if (!(c.cx >= 0.0 && c.cx < c.width && c.cy >= 0.0 && c.cy < c.height))
    throw Error("config-invalid", "principal point must lie inside the image");
}

struct Projection {
  std::vector<Vec2> pixels;
  std::vector<double> depth;  // camera-frame Z
  std::vector<std::uint8_t> valid;
};

inline bool in_image(const SensorCamera& c, const Vec2& px) {
  return px.x() >= 0.0 && px.x() < c.width && px.y() >= 0.0 && px.y() < c.height;
}

/// Pinhole projection of gel-frame points. Points behind the camera or off the
/// image are flagged invalid (their pixel is still reported when Z > 0).
inline Projection project_to_camera(const std::vector<Vec3>& points, const SensorCamera& c) {
  Projection out;
  out.pixels.reserve(points.size());
  for (const auto& p : points) {
    const Vec3 q = c.pose.apply(p);
    out.depth.push_back(q.z());
    if (!(q.z() > 0.0)) {
      out.pixels.emplace_back(std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN());
      out.valid.push_back(0);
      continue;
    }
    const Vec2 px(c.cx + c.fx * q.x() / q.z(), c.cy + c.fy * q.y() / q.z());
    out.pixels.push_back(px);
    out.valid.push_back(in_image(c, px) ? 1 : 0);
  }
  return out;
}

/// Gel-frame point seen at pixel (u, v) with camera-frame depth Z.
inline Vec3 back_project(const Vec2& px, double depth, const SensorCamera& c) {
  const Vec3 q((px.x() - c.cx) * depth / c.fx, (px.y() - c.cy) * depth / c.fy, depth);
  return c.pose.apply_inverse(q);
}

struct NoiseConfig {
  double pixel_sigma = 0.5;   // px
  double dropout_prob = 0.05;
  std::uint64_t stream = 0;   // mixed into the episode seed
};

inline void validate(const NoiseConfig& n) {
  if (!(n.pixel_sigma >= 0.0)) throw Error("config-invalid", "pixel_sigma must be >= 0");
  if (!(n.dropout_prob >= 0.0 && n.dropout_prob <= 1.0)) throw Error("config-invalid", "dropout_prob must lie in [0, 1]");
}

struct MarkerFlow {
  std::vector<Vec2> initial;
  std::vector<Vec2> current;
  std::vector<std::uint8_t> valid;

  int size() const { return static_cast<int>(initial.size()); }
};

/// Which source marker fills each of the `n` output slots. With at least `n`
/// markers a seeded subset (in ascending order) is kept; with fewer, every
/// marker appears once and the rest of the slots cycle through a seeded
/// permutation.
inline std::vector<int> flow_selection(int markers, int n, std::uint64_t seed) {
  std::vector<int> out;
  if (markers <= 0 || n <= 0) return out;
  std::vector<int> perm(markers);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  if (markers >= n) {
    out.assign(perm.begin(), perm.begin() + n);
    std::sort(out.begin(), out.end());
    return out;
  }
  out.resize(markers);
  std::iota(out.begin(), out.end(), 0);
  for (int i = 0; out.size() < static_cast<std::size_t>(n); ++i) out.push_back(perm[i % markers]);
  return out;
}

/// Noisy, fixed-size flow. `selection` picks the source marker of every slot
/// (see flow_selection); an empty selection keeps the inputs as they are.
/// Markers invalid in `input_valid`, dropped, or pushed off-image by noise are
/// invalid and frozen at their initial pixel.
inline MarkerFlow marker_flow_observation(const std::vector<Vec2>& initial_px, const std::vector<Vec2>& current_px,
                                          const NoiseConfig& noise, std::mt19937_64& rng,
                                          const std::vector<int>& selection = {},
                                          const std::vector<std::uint8_t>& input_valid = {},
                                          const SensorCamera* camera = nullptr) {
  std::vector<int> sel = selection;
  if (sel.empty()) {
    sel.resize(initial_px.size());
    std::iota(sel.begin(), sel.end(), 0);
  }
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  MarkerFlow out;
  out.initial.reserve(sel.size());
  out.current.reserve(sel.size());
  out.valid.reserve(sel.size());
  for (int src : sel) {
    const Vec2 init = initial_px[src];
    // Draws happen for every slot so the stream does not depend on validity.
    const double nx = gauss(rng), ny = gauss(rng);
    const bool dropped = unit(rng) < noise.dropout_prob;
    Vec2 cur = current_px[src] + noise.pixel_sigma * Vec2(nx, ny);
    bool ok = !dropped && (input_valid.empty() || input_valid[src]);
    if (ok && camera && !in_image(*camera, cur)) ok = false;
    if (!ok) cur = init;
    out.initial.push_back(init);
    out.current.push_back(cur);
    out.valid.push_back(ok ? 1 : 0);
  }
  return out;
}

/// Mean Euclidean distance between index-aligned point sets.
inline double surface_diff(const std::vector<Vec3>& current, const std::vector<Vec3>& initial) {
  if (current.size() != initial.size()) throw Error("size-mismatch", "point sets differ in size");
  if (current.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < current.size(); ++i) s += (current[i] - initial[i]).norm();
  return s / static_cast<double>(current.size());
}

enum class ContactState { no_contact, contact, excessive_force };

inline const char* to_string(ContactState s) {
  switch (s) {
    case ContactState::no_contact: return "no_contact";
    case ContactState::contact: return "contact";
    case ContactState::excessive_force: return "excessive_force";
  }
  return "?";
}

struct ContactDetection {
  ContactState state = ContactState::no_contact;
  bool no_valid_markers = false;
  double mean_displacement = 0.0;  // px
  double max_displacement = 0.0;   // px
};

inline ContactDetection detect_contact(const MarkerFlow& flow, double mean_thresh, double max_thresh) {
  ContactDetection out;
  int n = 0;
  for (int i = 0; i < flow.size(); ++i) {
    if (!flow.valid[i]) continue;
    const double d = (flow.current[i] - flow.initial[i]).norm();
    out.mean_displacement += d;
    out.max_displacement = std::max(out.max_displacement, d);
    ++n;
  }
  if (n == 0) {
    out.no_valid_markers = true;
    return out;
  }
  out.mean_displacement /= n;
  if (out.max_displacement > max_thresh)
    out.state = ContactState::excessive_force;
  else if (out.mean_displacement >= mean_thresh)
    out.state = ContactState::contact;
  return out;
}

}  // namespace vitac
