#pragma once

#include "vitac/env/config.hpp"

namespace vitac {

enum class Status { running, success, error_too_large, too_many_steps };

inline std::string_view to_string(Status s) {
  switch (s) {
    case Status::running: return "running";
    case Status::success: return "success";
    case Status::error_too_large: return "error_too_large";
    case Status::too_many_steps: return "too_many_steps";
  }
  return "?";
}

inline Status status_from_string(std::string_view s) {
  for (Status v : {Status::running, Status::success, Status::error_too_large, Status::too_many_steps})
    if (to_string(v) == s) return v;
  throw Error("bad-status", "unknown status '" + std::string(s) + "'");
}

/// Peg error: e_x, e_y in mm and e_theta in degrees.
inline double peg_error(double ex_mm, double ey_mm, double etheta_deg) {
  return std::sqrt(ex_mm * ex_mm + ey_mm * ey_mm + etheta_deg * etheta_deg);
}

/// Lock error from the mean tooth-to-pin offset in meters.
inline double lock_error(double ex, double ey, double ez, double scale = 500.0) {
  return scale * (std::abs(ex) + std::abs(ey) + std::abs(ez));
}

/// Fusion error: e_x, e_y, e_z in mm and e_theta in degrees.
inline double fusion_error(double ex_mm, double ey_mm, double ez_mm, double etheta_deg) {
  return std::sqrt(ex_mm * ex_mm + ey_mm * ey_mm + ez_mm * ez_mm + etheta_deg * etheta_deg);
}

struct Reward {
  double progress = 0.0;  // e_{t-1} - e_t
  double penalty = 0.0;   // -P
  double final = 0.0;     // success bonus
  double fail = 0.0;
  double total() const { return progress + penalty + final + fail; }
};

/// Peg and fusion share the same composition: the failure penalty applies to
/// error_too_large only.
inline Reward reward_peg(double e_prev, double e_t, Status status, int t, const EnvConfig& c) {
  Reward r;
  r.progress = e_prev - e_t;
  r.penalty = -c.reward.step_penalty;
  if (status == Status::success) r.final = c.reward.success_reward;
  if (status == Status::error_too_large)
    r.fail = -c.reward.fail_factor * (c.max_steps - t) * c.reward.step_penalty;
  return r;
}

inline Reward reward_fusion(double e_prev, double e_t, Status status, int t, const EnvConfig& c) {
  return reward_peg(e_prev, e_t, status, t, c);
}

/// Lock failure (either terminal failure status) also subtracts the summed
/// surface drift, in meters.
inline Reward reward_lock(double e_prev, double e_t, Status status, int t, double surface_diff_sum,
                          const EnvConfig& c) {
  Reward r;
  r.progress = e_prev - e_t;
  r.penalty = -c.reward.step_penalty;
  if (status == Status::success) r.final = c.reward.success_reward;
  if (status == Status::error_too_large || status == Status::too_many_steps)
    r.fail = -c.reward.lock_fail_factor * (c.max_steps - t) * c.reward.step_penalty - surface_diff_sum;
  return r;
}

/// What the evaluation needs after a step. `failed` covers limit violations,
/// solver aborts and the lateral/angle error bounds.
struct StepOutcome {
  int t = 0;
  bool failed = false;
  double depth = 0.0;      // m, peg: t * z_step; fusion: peg bottom below the hole top
  double l_diff = 0.0;     // m
  double r_diff = 0.0;     // m
  bool aligned = true;     // lock: every pair within tau_xyz; fusion: lateral bound met
};

/// Failure first, then success, then the step budget.
inline Status evaluate_step(const StepOutcome& o, const EnvConfig& c) {
  if (o.failed) return Status::error_too_large;
  const bool surface_ok = o.l_diff < c.thresholds.surface_diff && o.r_diff < c.thresholds.surface_diff;
  bool success = surface_ok && o.aligned;
  if (c.task != Task::lock) success = success && o.depth >= c.success_depth * (1.0 - 1e-9);
  if (success) return Status::success;
  if (o.t >= c.max_steps) return Status::too_many_steps;
  return Status::running;
}

}  // namespace vitac
