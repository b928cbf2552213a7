#pragma once

#include "vitac/env/assets.hpp"
#include "vitac/env/reward.hpp"
#include "vitac/geometry/marker_binding.hpp"

#include <optional>

namespace vitac {

/// Rendered fusion channels, world camera frame.
struct VisionFrame {
  DepthRender render;
  PointCloud cloud;
};

struct Observation {
  std::array<double, 4> relative_motion{};  // x, y, z in mm, theta in degrees
  MarkerFlow flow_left, flow_right;
  std::optional<VisionFrame> vision;
};

struct Diagnostics {
  double e_t = 0.0;
  std::vector<double> error;         // peg (mm, mm, deg); lock (m, m, m); fusion (mm, mm, mm, deg)
  double l_diff = 0.0, r_diff = 0.0; // m
  double surface_diff = 0.0;         // l_diff + r_diff
  double depth = 0.0;                // m
  std::vector<double> pair_errors;   // lock, m per tooth
  double tether_force = 0.0;         // N
  double min_distance = std::numeric_limits<double>::infinity();
  int solver_iterations = 0;
  int substeps = 0;
  std::string failure;               // empty unless the step failed
  ContactState contact_left = ContactState::no_contact, contact_right = ContactState::no_contact;
  Reward reward;
};

struct StepResult {
  int t = 0;
  Observation observation;
  double reward = 0.0;
  bool done = false;
  Status status = Status::running;
  Diagnostics diagnostics;
};

/// Ground truth for oracles and critics: the current task error in action
/// slot order and units, plus the agent-facing offsets.
struct Privileged {
  std::array<double, 4> offset{};
  OffsetState offsets;
};

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream));
}
inline double wrap_angle(double a, double period) { return a - period * std::round(a / period); }
}  // namespace detail

enum Side { kLeft = 0, kRight = 1 };

class Environment {
 public:
  explicit Environment(EnvConfig config)
      : cfg_(validated(std::move(config))), solver_(cfg_.solver, cfg_.material) {
    build_assets();
  }

  const EnvConfig& config() const { return cfg_; }
  /// Sees every accepted Newton iterate of every solve, reset included.
  void set_iterate_observer(QuasiStaticSolver::Observer observer) { observer_ = std::move(observer); }
  Task task() const { return cfg_.task; }
  int t() const { return t_; }
  bool is_reset() const { return reset_; }
  bool done() const { return status_ != Status::running; }
  Status status() const { return status_; }
  std::uint64_t seed() const { return seed_; }
  const SimState& sim() const { return sim_; }
  const OffsetState& offsets() const { return offsets_; }
  const RigidTransform& grip() const { return grip_; }
  RigidTransform shell_pose(int side) const { return grip_.compose(shell_local_[side]); }
  const MarkerBinding& binding() const { return binding_; }
  const SensorCamera& sensor_camera() const { return sensor_cam_; }
  /// Initial marker pixels of a side, captured at reset (before selection).
  const std::vector<Vec2>& initial_pixels(int side) const { return init_px_[side]; }
  /// Whether the fusion scene put the matching hole at +x.
  bool matching_at_positive_x() const { return match_sign_ > 0; }

  Observation reset(std::optional<std::uint64_t> seed = std::nullopt) {
    seed_ = seed.value_or(cfg_.seed);
    t_ = 0;
    status_ = Status::running;
    offsets_ = {};
    reset_ = false;

    std::mt19937_64 rng(detail::stream_seed(seed_, 0));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto sample = [&](double half) { return half * (2.0 * unit(rng) - 1.0); };
    const auto& rnd = cfg_.randomization;
    const double rx = sample(rnd.xy), ry = sample(rnd.xy);
    const double r3 = sample(cfg_.task == Task::lock ? rnd.z : rnd.theta);
    match_sign_ = unit(rng) < 0.5 ? 1 : -1;
    for (int s = 0; s < 2; ++s) noise_rng_[s].seed(detail::stream_seed(seed_, 1 + s));
    for (int s = 0; s < 2; ++s)
      selection_[s] = flow_selection(binding_.size(), cfg_.sensor.flow_markers, detail::stream_seed(seed_, 3 + s));

    // Object pose and grip frame.
    RigidTransform object;
    theta0_ = 0.0;
    if (cfg_.task == Task::lock) {
      object.translation = Vec3(rx, ry, cfg_.scene.lock_travel - cfg_.scene.lock_insertion + r3);
    } else {
      theta0_ = r3;
      object = RigidTransform::rot_z(theta0_, Vec3(rx, ry, cfg_.scene.peg_start_height));
    }
    object_in_grip_ = {Mat3::Identity(), Vec3(0, 0, -grip_height_)};
    grip_ = object.compose(object_in_grip_.inverse());

    // Fixtures.
    sim_ = SimState{};
    sim_.kappa = cfg_.solver.barrier_stiffness;
    RigidBody obj;
    obj.shape = object_mesh_;
    obj.pose = object;
    obj.dynamic = false;  // held at the sampled pose while the gels close
    obj.anchor = object.translation;
    obj.tether_stiffness = cfg_.grip.tether_stiffness;
    obj.mass = cfg_.grip.object_mass;
    obj.id = 1;
    sim_.rigids.push_back(obj);
    fixture_poses_.clear();
    if (cfg_.task == Task::fusion) {
      fixture_poses_.push_back(RigidTransform{Mat3::Identity(), Vec3(match_sign_ * cfg_.scene.fusion_hole_spacing, 0, 0)});
      fixture_poses_.push_back(RigidTransform{Mat3::Identity(), Vec3(-match_sign_ * cfg_.scene.fusion_hole_spacing, 0, 0)});
    } else {
      fixture_poses_.push_back(RigidTransform{});
    }
    for (std::size_t f = 0; f < fixture_poses_.size(); ++f) {
      RigidBody b;
      b.shape = fixture_meshes_[f];
      b.pose = fixture_poses_[f];
      b.id = 2 + static_cast<int>(f);
      sim_.rigids.push_back(b);
    }

    // Gels, open by `gap`, then squeezed onto the object.
    const double open = half_width_ + cfg_.grip.gap + gel_spec_.thickness / 2;
    Mat3 left, right;
    left << 1, 0, 0, 0, 0, 1, 0, -1, 0;   // columns X, -Z, Y
    right << 1, 0, 0, 0, 0, -1, 0, 1, 0;  // columns X, Z, -Y
    shell_local_[kLeft] = {left, Vec3(0, open, 0)};
    shell_local_[kRight] = {right, Vec3(0, -open, 0)};
    for (int s = 0; s < 2; ++s) {
      GelBody g;
      g.model = gel_model_;
      const RigidTransform pose = shell_pose(s);
      for (const auto& v : gel_mesh_->vertices) g.x.push_back(pose.apply(v));
      sim_.gels.push_back(std::move(g));
    }
    const double travel = cfg_.grip.gap + cfg_.grip.squeeze;
    const int n = std::max(1, detail::tolerant_ceil(travel / cfg_.grip.squeeze_step));
    try {
      for (int k = 1; k <= n; ++k) {
        const double y = open - travel * k / n;
        const std::array<Vec3, 2> delta = {grip_.rotation * Vec3(0, y - shell_local_[kLeft].translation.y(), 0),
                                           grip_.rotation * Vec3(0, -y - shell_local_[kRight].translation.y(), 0)};
        shell_local_[kLeft].translation.y() = y;
        shell_local_[kRight].translation.y() = -y;
        SolveRequest req = hold_request();
        for (int s = 0; s < 2; ++s)
          for (auto& p : req.gel_predictor[s]) p += delta[s];
        set_constrained_targets(req);
        solver_.solve(sim_, req, observer_);
      }
      // Preload the tether with the squeeze force so the sampled pose is the
      // equilibrium of the free object.
      const Vec3 f = solver_.rigid_contact_force(sim_, 0);
      anchor_bias_ = grip_.rotation.transpose() * (-f / cfg_.grip.tether_stiffness);
      RigidBody& held = sim_.rigids[0];
      held.dynamic = true;
      held.anchor = tether_anchor();
      solver_.solve(sim_, hold_request(), observer_);
    } catch (const SolverError& e) {
      throw Error("reset-failed", std::string("grip squeeze failed: ") + e.what());
    }

    for (int s = 0; s < 2; ++s) {
      ref_markers_[s] = gel_frame_markers(s);
      const Projection p = project_to_camera(ref_markers_[s], sensor_cam_);
      init_px_[s] = p.pixels;
      init_valid_[s] = p.valid;
    }
    const Measure m = measure();
    e_prev_ = m.e_t;
    reset_ = true;
    return observe();
  }

  StepResult step(const ActionCommand& action) {
    if (!reset_) throw Error("not-reset", "step before reset");
    if (done()) throw Error("episode-done", "episode already finished");
    if (action.task != cfg_.task) throw Error("bad-action", "action is for a different task");
    for (int i = 0; i < action_arity(cfg_.task); ++i)
      if (!std::isfinite(action.values[i])) throw Error("bad-action", "action components must be finite");
    ++t_;

    const ActionCommand a = clip_action(action, cfg_.limits);
    const Increment inc = to_si(a);
    const Vec2 g = cfg_.task == Task::lock ? Vec2(inc.dx, inc.dy)
                                           : local_to_global(inc.dx, inc.dy, offsets_.theta_current);
    const double descent = cfg_.task == Task::peg ? -cfg_.z_step : 0.0;
    const OffsetState next = update_offsets(offsets_, g.x(), g.y(), inc.dtheta, inc.dz + descent);
    const LimitCheck limit = check_offset_limits(next, cfg_.limits);

    StepResult out;
    Diagnostics& d = out.diagnostics;
    bool failed = false;
    if (!limit.ok()) {
      failed = true;
      d.failure = "limit-" + std::string(to_string(limit.axis));
    } else {
      offsets_ = next;
      try {
        const auto& L = cfg_.limits;
        if (cfg_.task == Task::peg) {
          move(substep_count_peg(g.x(), g.y(), inc.dtheta, L), Vec3(g.x(), g.y(), 0), inc.dtheta, d);
          move(std::max(1, detail::tolerant_ceil(cfg_.z_step / (L.v_max * L.dt))), Vec3(0, 0, descent), 0.0, d);
        } else if (cfg_.task == Task::lock) {
          move(substep_count_lock(g.x(), g.y(), inc.dz, L.dt, L.v_max), Vec3(g.x(), g.y(), inc.dz), 0.0, d);
        } else {
          move(substep_count_fusion(g.x(), g.y(), inc.dz, inc.dtheta, L.dt, L.v_max, L.omega_max),
               Vec3(g.x(), g.y(), inc.dz), inc.dtheta, d);
        }
      } catch (const SolverError& e) {
        failed = true;
        d.failure = e.code();
      }
    }

    const Measure m = measure();
    d.e_t = m.e_t;
    d.error = m.error;
    d.pair_errors = m.pair_errors;
    d.depth = m.depth;
    d.l_diff = m.l_diff;
    d.r_diff = m.r_diff;
    d.surface_diff = m.l_diff + m.r_diff;
    const RigidBody& obj = sim_.rigids[0];
    d.tether_force = cfg_.grip.tether_stiffness * (obj.pose.translation - obj.anchor).norm();
    if (!failed && !m.bound_violation.empty()) {
      failed = true;
      d.failure = m.bound_violation;
    }

    StepOutcome o;
    o.t = t_;
    o.failed = failed;
    o.depth = m.depth;
    o.l_diff = m.l_diff;
    o.r_diff = m.r_diff;
    o.aligned = m.aligned;
    status_ = evaluate_step(o, cfg_);

    switch (cfg_.task) {
      case Task::peg: d.reward = reward_peg(e_prev_, m.e_t, status_, t_, cfg_); break;
      case Task::lock: d.reward = reward_lock(e_prev_, m.e_t, status_, t_, d.surface_diff, cfg_); break;
      case Task::fusion: d.reward = reward_fusion(e_prev_, m.e_t, status_, t_, cfg_); break;
    }
    e_prev_ = m.e_t;

    out.t = t_;
    out.reward = d.reward.total();
    out.status = status_;
    out.done = done();
    out.observation = observe();
    d.contact_left = detect_contact(out.observation.flow_left, cfg_.sensor.contact_mean_px, cfg_.sensor.contact_max_px).state;
    d.contact_right =
        detect_contact(out.observation.flow_right, cfg_.sensor.contact_mean_px, cfg_.sensor.contact_max_px).state;
    return out;
  }

  /// Current task error e_t.
  double error() const { return measure().e_t; }

  Privileged privileged() const {
    Privileged p;
    p.offsets = offsets_;
    const Measure m = measure();
    if (cfg_.task == Task::lock) {
      for (int i = 0; i < 3; ++i) p.offset[i] = m.error[i] * 1e3;
    } else if (cfg_.task == Task::peg) {
      for (int i = 0; i < 3; ++i) p.offset[i] = m.error[i];
    } else {
      p.offset = {m.error[0], m.error[1], m.error[3], m.error[2]};
    }
    return p;
  }

  /// Marker positions of a side in its shell (gel) frame.
  std::vector<Vec3> gel_frame_markers(int side) const {
    const RigidTransform pose = shell_pose(side);
    std::vector<Vec3> out = marker_world_positions(binding_, sim_.gels[side].x);
    for (auto& p : out) p = pose.apply_inverse(p);
    return out;
  }

  /// Scene for the depth camera: object id 1, matching fixture 2, the other
  /// fixture 3, gels 4 and 5 when enabled.
  VisionFrame render() const {
    std::vector<RenderItem> items;
    for (const auto& r : sim_.rigids) items.push_back({r.shape.get(), r.pose, r.id});
    std::array<SurfaceMesh, 2> gel_surfaces;
    if (cfg_.scene.render_gels) {
      for (int s = 0; s < 2; ++s) {
        gel_surfaces[s].vertices = sim_.gels[s].x;
        gel_surfaces[s].tris = gel_mesh_->surface_tris;
        items.push_back({&gel_surfaces[s], RigidTransform{}, 4 + s});
      }
    }
    const CameraModel cam = cfg_.vision.camera();
    VisionFrame f;
    f.render = render_depth(items, cam);
    f.cloud = depth_to_pointcloud(f.render, cam);
    return f;
  }

 private:
  struct Measure {
    double e_t = 0.0;
    std::vector<double> error;
    std::vector<double> pair_errors;
    double depth = 0.0;
    double l_diff = 0.0, r_diff = 0.0;
    bool aligned = true;
    std::string bound_violation;
  };

  static EnvConfig validated(EnvConfig c) {
    validate(c);
    return c;
  }

  void build_assets() {
    gel_spec_ = GelSpec{};
    gel_spec_.subdivisions = cfg_.sensor.gel_subdivisions;
    gel_mesh_ = std::make_shared<const TetMesh>(generate_gel_mesh(gel_spec_));
    gel_model_ = GelModel::build(gel_mesh_);
    MarkerGrid grid;
    grid.rows = cfg_.sensor.marker_rows;
    grid.cols = cfg_.sensor.marker_cols;
    grid.spacing = cfg_.sensor.marker_spacing;
    binding_ = bind_markers(*gel_mesh_, grid);
    sensor_cam_ = cfg_.sensor.camera();

    const auto& sc = cfg_.scene;
    fixture_meshes_.clear();
    if (cfg_.task == Task::lock) {
      key_ = key_spec(cfg_.asset_id);
      object_mesh_ = std::make_shared<const SurfaceMesh>(make_key(key_));
      grip_height_ = sc.key_grip_height;
      half_width_ = key_.bow_half_y;
      const auto keyway = keyway_section(key_, cfg_.clearance);
      double extent = 0.0;
      for (const auto& p : keyway) extent = std::max({extent, std::abs(p.x()), std::abs(p.y())});
      fixture_meshes_.push_back(std::make_shared<const SurfaceMesh>(
          make_hole_tile(keyway, std::max(sc.tile_half, extent + 2e-3), sc.keyway_depth, sc.tile_base)));
      pins_ = lock_pins(key_, sc.lock_insertion);
    } else {
      shape_ = peg_shape(cfg_.asset_id, sc.peg_width);
      object_mesh_ = std::make_shared<const SurfaceMesh>(make_peg(shape_, sc.peg_height));
      grip_height_ = sc.peg_grip_height;
      half_width_ = shape_.half_width_y;
      const auto tile = [&](const PegShape& s) {
        const auto hole = hole_section(s, cfg_.clearance);
        for (const auto& p : hole)
          if (std::max(std::abs(p.x()), std::abs(p.y())) >= sc.tile_half)
            throw Error("config-invalid", "hole does not fit in the fixture tile");
        return std::make_shared<const SurfaceMesh>(make_hole_tile(hole, sc.tile_half, sc.hole_depth, sc.tile_base));
      };
      fixture_meshes_.push_back(tile(shape_));
      if (cfg_.task == Task::fusion)
        fixture_meshes_.push_back(tile(peg_shape((cfg_.asset_id + 1) % kNumPegShapes, sc.peg_width)));
    }
  }

  Vec3 tether_anchor() const { return grip_.compose(object_in_grip_).translation + grip_.rotation * anchor_bias_; }

  /// Request that keeps everything where it is.
  SolveRequest hold_request() const {
    SolveRequest req;
    for (const auto& g : sim_.gels) req.gel_predictor.push_back(g.x);
    for (const auto& r : sim_.rigids) req.rigid_predictor.push_back(r.pose);
    return req;
  }

  void set_constrained_targets(SolveRequest& req) const {
    for (int s = 0; s < 2; ++s) {
      const RigidTransform pose = shell_pose(s);
      for (int v : gel_mesh_->constrained_set) req.gel_predictor[s][v] = pose.apply(gel_mesh_->vertices[v]);
    }
  }

  /// Moves the grip by `displacement` and `dtheta` about the grip axis in
  /// `n` equal substeps, solving after each.
  void move(int n, const Vec3& displacement, double dtheta, Diagnostics& d) {
    const SubstepVelocity vel = substep_velocities(displacement, dtheta, n, cfg_.limits.dt);
    for (int i = 0; i < n; ++i) {
      const RigidTransform T =
          substep_transform(vel.linear, vel.angular, Vec3::UnitZ(), grip_.translation, cfg_.limits.dt);
      grip_ = T.compose(grip_);
      SolveRequest req;
      for (const auto& g : sim_.gels) {
        std::vector<Vec3> pred(g.x.size());
        for (std::size_t v = 0; v < pred.size(); ++v) pred[v] = T.apply(g.x[v]);
        req.gel_predictor.push_back(std::move(pred));
      }
      set_constrained_targets(req);
      RigidBody& obj = sim_.rigids[0];
      req.rigid_predictor.push_back({T.rotation * obj.pose.rotation, T.apply(obj.pose.translation)});
      for (std::size_t r = 1; r < sim_.rigids.size(); ++r) req.rigid_predictor.push_back(sim_.rigids[r].pose);
      obj.anchor = tether_anchor();
      const SolveStats st = solver_.solve(sim_, req, observer_);
      d.solver_iterations += st.iterations;
      d.min_distance = std::min(d.min_distance, st.min_distance);
      ++d.substeps;
    }
  }

  Measure measure() const {
    Measure m;
    const RigidBody& obj = sim_.rigids[0];
    const auto& th = cfg_.thresholds;
    if (cfg_.task == Task::lock) {
      Vec3 mean = Vec3::Zero();
      m.aligned = true;
      for (int i = 0; i < 4; ++i) {
        const Vec3 diff = obj.pose.apply(key_.tooth_tip(i)) - pins_[i];
        mean += diff / 4.0;
        m.pair_errors.push_back(diff.norm());
        m.aligned = m.aligned && diff.norm() < th.tau_xyz;
      }
      m.error = {mean.x(), mean.y(), mean.z()};
      m.e_t = lock_error(mean.x(), mean.y(), mean.z(), cfg_.reward.lock_error_scale);
      m.depth = -(obj.pose.translation.z());
      if (std::abs(mean.x()) >= th.tau_xy || std::abs(mean.y()) >= th.tau_xy) m.bound_violation = "lateral-error";
    } else {
      const Vec3 hole = fixture_poses_.empty() ? Vec3::Zero() : fixture_poses_[0].translation;
      const Vec3 p = obj.pose.translation;
      const double ex = (p.x() - hole.x()) * 1e3, ey = (p.y() - hole.y()) * 1e3;
      const double theta = theta0_ + offsets_.theta_offset;
      const double eth = rad_to_deg(detail::wrap_angle(theta, 2 * kPi / shape_.symmetry));
      if (cfg_.task == Task::peg) {
        m.error = {ex, ey, eth};
        m.e_t = peg_error(ex, ey, eth);
        m.depth = t_ * cfg_.z_step;
      } else {
        const double target = -(cfg_.success_depth + cfg_.scene.fusion_depth_margin);
        const double ez = (p.z() - target) * 1e3;
        m.error = {ex, ey, ez, eth};
        m.e_t = fusion_error(ex, ey, ez, eth);
        m.depth = hole.z() - p.z();
        m.aligned = std::hypot(ex, ey) * 1e-3 <= th.fusion_xy;
      }
      if (std::abs(ex) * 1e-3 >= th.tau_xy || std::abs(ey) * 1e-3 >= th.tau_xy)
        m.bound_violation = "lateral-error";
      else if (std::abs(deg_to_rad(eth)) >= th.tau_theta)
        m.bound_violation = "angle-error";
    }
    if (!ref_markers_[0].empty()) {
      m.l_diff = surface_diff(gel_frame_markers(kLeft), ref_markers_[kLeft]);
      m.r_diff = surface_diff(gel_frame_markers(kRight), ref_markers_[kRight]);
    }
    return m;
  }

  Observation observe() {
    Observation o;
    o.relative_motion = {offsets_.x_offset * 1e3, offsets_.y_offset * 1e3, offsets_.z_offset * 1e3,
                         rad_to_deg(offsets_.theta_offset)};
    const NoiseConfig noise = cfg_.sensor.noise();
    for (int s = 0; s < 2; ++s) {
      const Projection p = project_to_camera(gel_frame_markers(s), sensor_cam_);
      std::vector<std::uint8_t> valid(p.valid.size());
      for (std::size_t i = 0; i < valid.size(); ++i) valid[i] = p.valid[i] && init_valid_[s][i];
      MarkerFlow f = marker_flow_observation(init_px_[s], p.pixels, noise, noise_rng_[s], selection_[s], valid, &sensor_cam_);
      (s == kLeft ? o.flow_left : o.flow_right) = std::move(f);
    }
    if (cfg_.task == Task::fusion) o.vision = render();
    return o;
  }

  EnvConfig cfg_;
  QuasiStaticSolver solver_;
  QuasiStaticSolver::Observer observer_;

  // Assets, fixed per config.
  GelSpec gel_spec_;
  std::shared_ptr<const TetMesh> gel_mesh_;
  std::shared_ptr<const GelModel> gel_model_;
  MarkerBinding binding_;
  SensorCamera sensor_cam_;
  std::shared_ptr<const SurfaceMesh> object_mesh_;
  std::vector<std::shared_ptr<const SurfaceMesh>> fixture_meshes_;  // matching first
  PegShape shape_;
  KeySpec key_;
  std::array<Vec3, 4> pins_{};
  double grip_height_ = 0.0, half_width_ = 0.0;

  // Episode state.
  std::uint64_t seed_ = 0;
  bool reset_ = false;
  int t_ = 0;
  Status status_ = Status::running;
  OffsetState offsets_;
  double theta0_ = 0.0;
  double e_prev_ = 0.0;
  int match_sign_ = 1;
  SimState sim_;
  RigidTransform grip_, object_in_grip_;
  Vec3 anchor_bias_ = Vec3::Zero();  // grip frame
  std::array<RigidTransform, 2> shell_local_;
  std::vector<RigidTransform> fixture_poses_;
  std::array<std::vector<Vec3>, 2> ref_markers_;
  std::array<std::vector<Vec2>, 2> init_px_;
  std::array<std::vector<std::uint8_t>, 2> init_valid_;
  std::array<std::vector<int>, 2> selection_;
  std::array<std::mt19937_64, 2> noise_rng_;
};

}  // namespace vitac
