#pragma once

#include "vitac/env/environment.hpp"

#include <random>

namespace vitac {

struct OraclePolicyConfig {
  Task task = Task::peg;
  double gain = 1.0;
  std::array<double, 4> caps = {1.0, 1.0, 1.0, 1.0};  // mm / deg, per action slot
  // Hold the z slot (lock, fusion) until every other slot's offset is within
  // this many mm / deg, so the object is centred before it goes down.
  // Non-positive disables the gate.
  double z_gate = 0.1;
};

inline void validate(const OraclePolicyConfig& c, const MotionLimits& limits) {
  if (!(c.gain > 0.0)) throw Error("config-invalid", "oracle gain must be > 0");
  for (int i = 0; i < action_arity(c.task); ++i)
    if (!(c.caps[i] > 0.0 && c.caps[i] <= limits.max_action[i]))
      throw Error("config-invalid", "oracle caps must lie in (0, max_action]");
}

/// Slot holding the z increment, or -1 for the peg task.
inline int z_slot(Task t) {
  switch (t) {
    case Task::peg: return -1;
    case Task::lock: return 2;
    case Task::fusion: return 3;
  }
  return -1;
}

/// Proportional controller on ground-truth offsets: clamp(-gain * offset) per
/// slot, with the x/y correction turned into the peg-local frame first.
/// `offset` is in action slot order and units.
inline ActionCommand oracle_policy(const std::array<double, 4>& offset, double theta_current,
                                   const OraclePolicyConfig& c) {
  ActionCommand a{c.task, {}};
  const int n = action_arity(c.task);
  std::array<double, 4> u{};
  for (int i = 0; i < n; ++i) u[i] = -c.gain * offset[i];
  if (c.task != Task::lock) {
    // Inverse of local_to_global.
    const double cs = std::cos(theta_current), sn = std::sin(theta_current);
    const double gx = u[0], gy = u[1];
    u[0] = cs * gx + sn * gy;
    u[1] = -sn * gx + cs * gy;
  }
  const int zs = z_slot(c.task);
  if (zs >= 0 && c.z_gate > 0.0) {
    for (int i = 0; i < n; ++i)
      if (i != zs && std::abs(offset[i]) > c.z_gate) u[zs] = 0.0;
  }
  for (int i = 0; i < n; ++i) a.values[i] = std::clamp(u[i], -c.caps[i], c.caps[i]);
  return a;
}

inline ActionCommand oracle_policy(const Privileged& p, const OraclePolicyConfig& c) {
  return oracle_policy(p.offset, p.offsets.theta_current, c);
}

struct TactileGains {
  double shear = 0.2;    // mm per px of common u flow
  double torque = 0.5;   // deg per px of differential u flow
  double advance = -0.5; // mm per step on the z slot (lock, fusion)
  std::array<double, 4> caps = {1.0, 1.0, 1.0, 1.0};
};

/// Mean displacement (px) of the valid markers, and whether there were any.
inline std::pair<Vec2, bool> mean_flow(const MarkerFlow& f) {
  Vec2 s = Vec2::Zero();
  int n = 0;
  for (int i = 0; i < f.size(); ++i) {
    if (!f.valid[i]) continue;
    s += f.current[i] - f.initial[i];
    ++n;
  }
  if (n == 0) return {Vec2::Zero(), false};
  return {s / n, true};
}

/// Flow heuristic. Image u is the gripper x axis on both sensors, so the
/// common u flow is the lateral load on the object and the left/right
/// difference is a twist about z. The action pushes against both. A side
/// without valid markers contributes nothing; with none at all the action is
/// zero.
inline ActionCommand tactile_heuristic_policy(const Observation& obs, Task task, const TactileGains& g) {
  ActionCommand a{task, {}};
  const auto [ml, okl] = mean_flow(obs.flow_left);
  const auto [mr, okr] = mean_flow(obs.flow_right);
  if (!okl && !okr) return a;
  const double l = okl ? ml.x() : 0.0, r = okr ? mr.x() : 0.0;
  const double common = okl && okr ? 0.5 * (l + r) : l + r;
  const double twist = okl && okr ? 0.5 * (l - r) : 0.0;
  const double dx = -g.shear * common;
  const double dtheta = -g.torque * twist;
  switch (task) {
    case Task::peg: a.values = {dx, 0.0, dtheta, 0.0}; break;
    case Task::lock: a.values = {dx, 0.0, g.advance, 0.0}; break;
    case Task::fusion: a.values = {dx, 0.0, dtheta, g.advance}; break;
  }
  for (int i = 0; i < a.arity(); ++i) a.values[i] = std::clamp(a.values[i], -g.caps[i], g.caps[i]);
  return a;
}

/// Uniform over the clipped action box.
class RandomPolicy {
 public:
  RandomPolicy(Task task, const MotionLimits& limits, std::uint64_t seed)
      : task_(task), limits_(limits), rng_(seed) {}

  ActionCommand operator()() {
    ActionCommand a{task_, {}};
    for (int i = 0; i < a.arity(); ++i) {
      std::uniform_real_distribution<double> u(-limits_.max_action[i], limits_.max_action[i]);
      a.values[i] = u(rng_);
    }
    return a;
  }

 private:
  Task task_;
  MotionLimits limits_;
  std::mt19937_64 rng_;
};

enum class PolicyKind { oracle, tactile, random };

inline PolicyKind policy_from_string(std::string_view s) {
  if (s == "oracle") return PolicyKind::oracle;
  if (s == "tactile") return PolicyKind::tactile;
  if (s == "random") return PolicyKind::random;
  throw Error("unknown-policy", "unknown policy '" + std::string(s) + "'");
}

inline std::string_view to_string(PolicyKind p) {
  switch (p) {
    case PolicyKind::oracle: return "oracle";
    case PolicyKind::tactile: return "tactile";
    case PolicyKind::random: return "random";
  }
  return "?";
}

/// One of the built-in policies bound to an environment for one episode.
class BuiltinAgent {
 public:
  BuiltinAgent(PolicyKind kind, const Environment& env, std::uint64_t seed)
      : kind_(kind), env_(env), random_(env.task(), env.config().limits, seed) {
    oracle_.task = env.task();
    for (int i = 0; i < 4; ++i) oracle_.caps[i] = env.config().limits.max_action[i];
    for (int i = 0; i < 4; ++i) tactile_.caps[i] = env.config().limits.max_action[i];
  }

  ActionCommand act(const Observation& obs) {
    switch (kind_) {
      case PolicyKind::oracle: return oracle_policy(env_.privileged(), oracle_);
      case PolicyKind::tactile: return tactile_heuristic_policy(obs, env_.task(), tactile_);
      case PolicyKind::random: return random_();
    }
    return {};
  }

 private:
  PolicyKind kind_;
  const Environment& env_;
  OraclePolicyConfig oracle_;
  TactileGains tactile_;
  RandomPolicy random_;
};

}  // namespace vitac
