#pragma once

#include "vitac/core/types.hpp"

#include <optional>
#include <string_view>

namespace vitac {

enum class Task { peg, lock, fusion };

inline std::string_view to_string(Task t) {
  switch (t) {
    case Task::peg: return "peg";
    case Task::lock: return "lock";
    case Task::fusion: return "fusion";
  }
  return "?";
}

inline Task task_from_string(std::string_view s) {
  if (s == "peg") return Task::peg;
  if (s == "lock") return Task::lock;
  if (s == "fusion") return Task::fusion;
  throw Error("unknown-task", "unknown task '" + std::string(s) + "'");
}

/// Number of action components per task: peg (dx, dy, dtheta), lock (dx, dy, dz),
/// fusion (dx, dy, dtheta, dz).
inline int action_arity(Task t) { return t == Task::fusion ? 4 : 3; }

/// Agent-facing action in millimeters / degrees, ordered per `action_arity`.
struct ActionCommand {
  Task task = Task::peg;
  std::array<double, 4> values{};

  int arity() const { return action_arity(task); }
  bool operator==(const ActionCommand&) const = default;
};

inline ActionCommand make_action(Task task, std::initializer_list<double> v) {
  if (static_cast<int>(v.size()) != action_arity(task))
    throw Error("bad-action", "action arity does not match task");
  ActionCommand a{task, {}};
  std::copy(v.begin(), v.end(), a.values.begin());
  return a;
}

/// The same increment in SI units (meters, radians).
struct Increment {
  double dx = 0, dy = 0, dz = 0, dtheta = 0;
};

inline Increment to_si(const ActionCommand& a) {
  const auto& v = a.values;
  switch (a.task) {
    case Task::peg: return {mm_to_m(v[0]), mm_to_m(v[1]), 0.0, deg_to_rad(v[2])};
    case Task::lock: return {mm_to_m(v[0]), mm_to_m(v[1]), mm_to_m(v[2]), 0.0};
    case Task::fusion: return {mm_to_m(v[0]), mm_to_m(v[1]), mm_to_m(v[3]), deg_to_rad(v[2])};
  }
  return {};
}

struct OffsetState {
  double x_offset = 0, y_offset = 0, z_offset = 0;  // m
  double theta_offset = 0;                          // rad
  double theta_current = 0;                         // rad, tracks theta_offset

  bool operator==(const OffsetState&) const = default;
};

struct MotionLimits {
  std::array<double, 4> max_action = {1.0, 1.0, 1.0, 1.0};  // mm / deg, per action slot
  double v_max = 2e-3;       // m/s
  double omega_max = 0.2;    // rad/s
  double x_max = 12e-3;      // m
  double y_max = 12e-3;
  double z_max = 40e-3;
  double theta_max = deg_to_rad(15.0);
  double dt = 0.1;           // s
};

inline ActionCommand clip_action(const ActionCommand& a, const MotionLimits& limits) {
  ActionCommand out = a;
  for (int i = 0; i < a.arity(); ++i)
    out.values[i] = std::clamp(a.values[i], -limits.max_action[i], limits.max_action[i]);
  return out;
}

/// Local (peg-attached) increment rotated into the global frame by theta_current.
inline Vec2 local_to_global(double dx, double dy, double theta_current) {
  const double c = std::cos(theta_current), s = std::sin(theta_current);
  return {c * dx - s * dy, s * dx + c * dy};
}

inline OffsetState update_offsets(OffsetState state, double dx_global, double dy_global, double dtheta, double dz) {
  state.x_offset += dx_global;
  state.y_offset += dy_global;
  state.z_offset += dz;
  state.theta_offset += dtheta;
  state.theta_current = state.theta_offset;
  return state;
}

namespace detail {
// ceil() that ignores round-off just above an integer (relative 1e-9).
inline int tolerant_ceil(double x) {
  return static_cast<int>(std::ceil(x - 1e-9 * std::max(1.0, std::abs(x))));
}
}  // namespace detail

inline int substep_count_peg(double dx_global, double dy_global, double dtheta, const MotionLimits& limits) {
  const double lin = std::max(std::abs(dx_global), std::abs(dy_global)) / (limits.v_max * limits.dt);
  const double ang = std::abs(dtheta) / (limits.omega_max * limits.dt);
  return std::max({1, detail::tolerant_ceil(lin), detail::tolerant_ceil(ang)});
}

inline int substep_count_lock(double dx, double dy, double dz, double dt, double v_max = 2e-3) {
  const double lin = std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) / (v_max * dt);
  return std::max(1, detail::tolerant_ceil(lin));
}

inline int substep_count_fusion(double dx_global, double dy_global, double dz, double dtheta, double dt,
                                double v_max = 5e-3, double omega_max = 0.2) {
  const double lin = std::max({std::abs(dx_global), std::abs(dy_global), std::abs(dz)}) / (v_max * dt);
  const double ang = std::abs(dtheta) / (omega_max * dt);
  return std::max({1, detail::tolerant_ceil(lin), detail::tolerant_ceil(ang)});
}

struct SubstepVelocity {
  Vec3 linear = Vec3::Zero();  // m/s
  double angular = 0.0;        // rad/s
};

inline SubstepVelocity substep_velocities(const Vec3& displacement, double dtheta, int n_sub, double dt) {
  const double span = n_sub * dt;
  return {displacement / span, dtheta / span};
}

/// Rotation by `angle` about unit axis `d`. Exact quarter turns produce exact
/// sine/cosine values.
inline Mat3 axis_rotation(const Vec3& d, double angle) {
  double c = std::cos(angle), s = std::sin(angle);
  const double quarter = angle / (kPi / 2);
  if (quarter == std::round(quarter)) {
    const int q = static_cast<int>(std::fmod(std::fmod(std::round(quarter), 4.0) + 4.0, 4.0));
    static constexpr double kCos[4] = {1, 0, -1, 0};
    static constexpr double kSin[4] = {0, 1, 0, -1};
    c = kCos[q];
    s = kSin[q];
  }
  Mat3 k;
  k << 0, -d.z(), d.y(), d.z(), 0, -d.x(), -d.y(), d.x(), 0;
  return Mat3::Identity() + s * k + (1 - c) * k * k;
}

struct BoundaryMotion {
  Vec3 position;
  Vec3 velocity;
};

/// Next position and velocity of a shell-attached vertex moved by a linear
/// velocity plus a rotation about (axis, pivot).
inline BoundaryMotion boundary_vertex_motion(const Vec3& x, const Vec3& v, double omega, const Vec3& axis,
                                             const Vec3& pivot, double dt) {
  const Vec3 next = v * dt + axis_rotation(axis, omega * dt) * (x - pivot) + pivot;
  return {next, (next - x) / dt};
}

/// The same rigid increment as a transform, for moving frames and whole bodies.
inline RigidTransform substep_transform(const Vec3& v, double omega, const Vec3& axis, const Vec3& pivot, double dt) {
  const Mat3 r = axis_rotation(axis, omega * dt);
  return {r, v * dt + pivot - r * pivot};
}

enum class LimitAxis { none, x, y, z, theta };

struct LimitCheck {
  LimitAxis axis = LimitAxis::none;
  bool ok() const { return axis == LimitAxis::none; }
};

inline std::string_view to_string(LimitAxis a) {
  switch (a) {
    case LimitAxis::none: return "none";
    case LimitAxis::x: return "x";
    case LimitAxis::y: return "y";
    case LimitAxis::z: return "z";
    case LimitAxis::theta: return "theta";
  }
  return "?";
}

/// Closed bounds: |offset| <= max is allowed.
inline LimitCheck check_offset_limits(const OffsetState& s, const MotionLimits& limits) {
  if (std::abs(s.x_offset) > limits.x_max) return {LimitAxis::x};
  if (std::abs(s.y_offset) > limits.y_max) return {LimitAxis::y};
  if (std::abs(s.z_offset) > limits.z_max) return {LimitAxis::z};
  if (std::abs(s.theta_offset) > limits.theta_max) return {LimitAxis::theta};
  return {};
}

}  // namespace vitac
