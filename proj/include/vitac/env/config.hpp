#pragma once

#include "vitac/depth/render.hpp"
#include "vitac/fem/solver.hpp"
#include "vitac/geometry/gel_mesh.hpp"
#include "vitac/kinematics/action.hpp"
#include "vitac/tactile/sensor.hpp"

#include <json.hpp>
#include <openssl/sha.h>

#include <fstream>
#include <sstream>

namespace vitac {

/// Half-widths of the uniform initial offset distribution.
struct Randomization {
  double xy = 3e-3;                    // m
  double theta = deg_to_rad(5.0);      // rad (peg, fusion)
  double z = 3e-3;                     // m (lock)
};

struct Thresholds {
  double tau_xy = 6e-3;                // m
  double tau_theta = deg_to_rad(10.0); // rad
  double tau_xyz = 1e-3;               // m, per key/lock pair
  double surface_diff = 2e-5;          // m, bound on l_diff and r_diff for success
  double fusion_xy = 1e-3;             // m, lateral bound for fusion success
};

struct RewardConfig {
  double step_penalty = 0.05;
  double success_reward = 10.0;
  double fail_factor = 2.0;            // peg, fusion
  double lock_fail_factor = 10.0;
  double lock_error_scale = 500.0;     // per meter
};

struct GripConfig {
  double gap = 0.2e-3;                 // m, gel to object before the squeeze
  double squeeze = 0.5e-3;             // m, indentation after the squeeze
  double squeeze_step = 0.1e-3;        // m per solve
  double tether_stiffness = 5000.0;    // N/m
  double object_mass = 0.01;           // kg
};

/// Sizes of the procedurally generated scene, all in meters.
struct SceneConfig {
  double peg_width = 8e-3;
  double peg_height = 30e-3;
  double peg_grip_height = 28e-3;      // grip center above the peg bottom
  double peg_start_height = 4e-3;      // peg bottom above the hole top at reset
  double tile_half = 7.5e-3;
  double hole_depth = 12e-3;
  double tile_base = 3e-3;
  double key_grip_height = 36e-3;      // grip center above the key tip
  double lock_insertion = 12e-3;       // key tip depth below the lock top when matched
  double lock_travel = 16e-3;          // nominal start height above the matched pose
  double keyway_depth = 20e-3;
  double fusion_hole_spacing = 12e-3;  // hole centers at x = +-spacing
  double fusion_depth_margin = 0.5e-3; // descent target past the success depth
  bool render_gels = false;
};

struct VisionConfig {
  std::array<double, 3> eye = {0.0, -0.12, 0.10};
  std::array<double, 3> target = {0.0, 0.0, 0.0};
  std::array<double, 3> up = {0.0, 0.0, 1.0};
  double fx = 400.0, fy = 400.0, cx = 160.0, cy = 120.0;
  int width = 320, height = 240;
  double near = 0.01, far = 2.0;

  CameraModel camera() const {
    CameraModel c;
    c.pose = look_at(Vec3(eye[0], eye[1], eye[2]), Vec3(target[0], target[1], target[2]), Vec3(up[0], up[1], up[2]));
    c.fx = fx;
    c.fy = fy;
    c.cx = cx;
    c.cy = cy;
    c.width = width;
    c.height = height;
    c.near = near;
    c.far = far;
    return c;
  }
};

struct SensorConfig {
  double optical_center_offset = 0.020;
  double fx = 265.0, fy = 265.0, cx = 160.0, cy = 120.0;
  int width = 320, height = 240;
  int flow_markers = 128;
  double pixel_sigma = 0.5;
  double dropout_prob = 0.05;
  double contact_mean_px = 1.0;
  double contact_max_px = 10.0;
  int marker_rows = 7, marker_cols = 9;
  double marker_spacing = 2.78125e-3;
  std::array<int, 3> gel_subdivisions = {8, 6, 2};

  SensorCamera camera() const {
    SensorCamera c;
    c.optical_center_offset = optical_center_offset;
    c.pose = camera_pose_behind_gel(optical_center_offset);
    c.fx = fx;
    c.fy = fy;
    c.cx = cx;
    c.cy = cy;
    c.width = width;
    c.height = height;
    return c;
  }
  NoiseConfig noise() const { return {pixel_sigma, dropout_prob, 0}; }
};

struct EnvConfig {
  Task task = Task::peg;
  int asset_id = 0;
  std::uint64_t seed = 0;
  int max_steps = 50;                  // t_max
  double z_step = 0.5e-3;              // m per step, peg descent
  double success_depth = 10e-3;        // m
  double clearance = 0.3e-3;           // m
  Randomization randomization;
  Thresholds thresholds;
  RewardConfig reward;
  GripConfig grip;
  SceneConfig scene;
  MotionLimits limits;
  SolverConfig solver;
  MaterialParams material;
  SensorConfig sensor;
  VisionConfig vision;
};

/// Per-task defaults. Fusion starts the peg between two holes, so its lateral
/// failure threshold and workspace are wider.
inline EnvConfig default_config(Task task) {
  EnvConfig c;
  c.task = task;
  if (task == Task::lock) c.max_steps = 100;
  if (task == Task::fusion) {
    c.thresholds.tau_xy = 20e-3;
    c.limits.x_max = 24e-3;
    c.limits.y_max = 24e-3;
  }
  return c;
}

inline void validate(const EnvConfig& c) {
  const auto require = [](bool ok, const std::string& what) {
    if (!ok) throw Error("config-invalid", what);
  };
  require(c.max_steps >= 1, "max_steps must be >= 1");
  require(c.asset_id >= 0, "asset_id must be >= 0");
  require(c.z_step > 0.0, "z_step must be > 0");
  require(c.success_depth > 0.0, "success_depth must be > 0");
  require(c.clearance >= 0.0, "clearance must be >= 0");
  const auto& r = c.randomization;
  require(r.xy >= 0.0 && r.theta >= 0.0 && r.z >= 0.0, "randomization ranges must be >= 0");
  require(r.xy <= c.limits.x_max && r.xy <= c.limits.y_max, "xy randomization exceeds the offset limits");
  require(r.theta <= c.limits.theta_max, "theta randomization exceeds the offset limit");
  require(r.z <= c.limits.z_max, "z randomization exceeds the offset limit");
  const auto& t = c.thresholds;
  require(t.tau_xy > 0.0 && t.tau_theta > 0.0 && t.tau_xyz > 0.0 && t.surface_diff > 0.0 && t.fusion_xy > 0.0,
          "thresholds must be > 0");
  require(c.reward.step_penalty >= 0.0, "step_penalty must be >= 0");
  const auto& g = c.grip;
  require(g.squeeze > 0.0, "grip squeeze must be > 0");
  require(g.gap > c.solver.barrier_distance, "grip gap must exceed the barrier distance");
  require(g.squeeze_step > 0.0, "squeeze_step must be > 0");
  require(g.tether_stiffness > 0.0 && g.object_mass > 0.0, "tether stiffness and object mass must be > 0");
  const auto& s = c.scene;
  require(s.peg_width > 0 && s.peg_height > 0 && s.tile_half > 0 && s.hole_depth > 0 && s.tile_base > 0,
          "scene sizes must be positive");
  require(s.peg_start_height > 0.0, "peg_start_height must be > 0");
  require(s.lock_travel > s.lock_insertion + c.randomization.z, "lock_travel must clear the lock top");
  require(s.keyway_depth > s.lock_insertion, "keyway must be deeper than the insertion");
  require(c.sensor.flow_markers >= 1, "flow_markers must be >= 1");
  require(c.sensor.marker_rows >= 1 && c.sensor.marker_cols >= 1, "marker grid must be non-empty");
  require(c.limits.v_max > 0.0 && c.limits.omega_max > 0.0 && c.limits.dt > 0.0, "velocity caps must be > 0");
  for (double m : c.limits.max_action) require(m > 0.0, "max_action must be > 0");
  validate(c.solver);
  validate(c.material);
  validate(c.sensor.camera());
  validate(c.sensor.noise());
  validate(c.vision.camera());
}

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(Randomization, xy, theta, z)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(Thresholds, tau_xy, tau_theta, tau_xyz, surface_diff, fusion_xy)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(RewardConfig, step_penalty, success_reward, fail_factor,
                                                lock_fail_factor, lock_error_scale)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(GripConfig, gap, squeeze, squeeze_step, tether_stiffness, object_mass)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SceneConfig, peg_width, peg_height, peg_grip_height, peg_start_height,
                                                tile_half, hole_depth, tile_base, key_grip_height, lock_insertion,
                                                lock_travel, keyway_depth, fusion_hole_spacing, fusion_depth_margin,
                                                render_gels)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(VisionConfig, eye, target, up, fx, fy, cx, cy, width, height, near, far)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SensorConfig, optical_center_offset, fx, fy, cx, cy, width, height,
                                                flow_markers, pixel_sigma, dropout_prob, contact_mean_px,
                                                contact_max_px, marker_rows, marker_cols, marker_spacing,
                                                gel_subdivisions)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(MotionLimits, max_action, v_max, omega_max, x_max, y_max, z_max,
                                                theta_max, dt)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SolverConfig, barrier_stiffness, barrier_distance, newton_tol,
                                                max_newton_iters, ccd_safety, dt, max_barrier_stiffness,
                                                rigid_contact_area)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(MaterialParams, youngs_modulus, poisson_ratio, density, damping)

inline void to_json(nlohmann::json& j, const EnvConfig& c) {
  j = nlohmann::json{{"task", std::string(to_string(c.task))},
                     {"asset_id", c.asset_id},
                     {"seed", c.seed},
                     {"max_steps", c.max_steps},
                     {"z_step", c.z_step},
                     {"success_depth", c.success_depth},
                     {"clearance", c.clearance},
                     {"randomization", c.randomization},
                     {"thresholds", c.thresholds},
                     {"reward", c.reward},
                     {"grip", c.grip},
                     {"scene", c.scene},
                     {"limits", c.limits},
                     {"solver", c.solver},
                     {"material", c.material},
                     {"sensor", c.sensor},
                     {"vision", c.vision}};
}

namespace detail {
// Keys of `given` that `known` does not have, as dotted paths.
inline void unknown_keys(const nlohmann::json& given, const nlohmann::json& known, const std::string& prefix,
                         std::vector<std::string>& out) {
  for (auto it = given.begin(); it != given.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!known.contains(it.key())) {
      out.push_back(path);
    } else if (it->is_object() && known[it.key()].is_object()) {
      unknown_keys(*it, known[it.key()], path, out);
    }
  }
}
}  // namespace detail

/// Task defaults patched with `overrides` (a partial config object). Unknown
/// keys and type mismatches are config errors.
inline EnvConfig make_config(const nlohmann::json& overrides = nlohmann::json::object()) {
  if (!overrides.is_object()) throw Error("config-invalid", "config must be an object");
  try {
    const Task task = task_from_string(overrides.value("task", std::string("peg")));
    nlohmann::json base = default_config(task);
    std::vector<std::string> unknown;
    detail::unknown_keys(overrides, base, "", unknown);
    if (!unknown.empty()) throw Error("config-invalid", "unknown config key '" + unknown.front() + "'");
    base.merge_patch(overrides);
    EnvConfig c = default_config(task);
    const auto& j = base;
    c.asset_id = j.at("asset_id").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.max_steps = j.at("max_steps").get<int>();
    c.z_step = j.at("z_step").get<double>();
    c.success_depth = j.at("success_depth").get<double>();
    c.clearance = j.at("clearance").get<double>();
    c.randomization = j.at("randomization").get<Randomization>();
    c.thresholds = j.at("thresholds").get<Thresholds>();
    c.reward = j.at("reward").get<RewardConfig>();
    c.grip = j.at("grip").get<GripConfig>();
    c.scene = j.at("scene").get<SceneConfig>();
    c.limits = j.at("limits").get<MotionLimits>();
    c.solver = j.at("solver").get<SolverConfig>();
    c.material = j.at("material").get<MaterialParams>();
    c.sensor = j.at("sensor").get<SensorConfig>();
    c.vision = j.at("vision").get<VisionConfig>();
    validate(c);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error("config-invalid", e.what());
  }
}

/// SHA-256 of the canonical JSON form, hex encoded.
inline std::string config_hash(const EnvConfig& c) {
  const std::string text = nlohmann::json(c).dump();
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(text.data()), text.size(), digest);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned char b : digest) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 15]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Key/value config files: `[section]` headers, `key = value` lines, `#`
// comments. Values are numbers, booleans, double-quoted strings or flat
// arrays of those. Dotted keys and section names nest.

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_dotted(const std::string& key) {
  std::vector<std::string> parts;
  std::stringstream ss(key);
  std::string p;
  while (std::getline(ss, p, '.')) parts.push_back(trim(p));
  return parts;
}

class ValueParser {
 public:
  ValueParser(std::string_view text, int line) : s_(text), line_(line) {}

  nlohmann::json parse() {
    nlohmann::json v = value();
    skip_ws();
    if (pos_ != s_.size()) fail("trailing characters");
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw Error("config-parse", "line " + std::to_string(line_) + ": " + what);
  }
  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }
  nlohmann::json value() {
    skip_ws();
    if (pos_ >= s_.size()) fail("missing value");
    const char c = s_[pos_];
    if (c == '"') return string();
    if (c == '[') return array();
    std::size_t end = pos_;
    while (end < s_.size() && s_[end] != ',' && s_[end] != ']' && s_[end] != ' ' && s_[end] != '\t') ++end;
    const std::string tok(s_.substr(pos_, end - pos_));
    pos_ = end;
    if (tok == "true") return true;
    if (tok == "false") return false;
    std::string digits;
    for (char ch : tok)
      if (ch != '_') digits.push_back(ch);
    const bool integral = digits.find_first_of(".eEn") == std::string::npos;  // "n" covers nan/inf
    try {
      std::size_t used = 0;
      if (integral) {
        const long long v = std::stoll(digits, &used);
        if (used == digits.size()) return v;
      } else {
        const double v = std::stod(digits, &used);
        if (used == digits.size()) return v;
      }
    } catch (const std::exception&) {
    }
    fail("bad value '" + tok + "'");
  }
  nlohmann::json string() {
    std::string out;
    for (++pos_; pos_ < s_.size(); ++pos_) {
      const char c = s_[pos_];
      if (c == '"') {
        ++pos_;
        return out;
      }
      if (c == '\\' && pos_ + 1 < s_.size()) {
        const char n = s_[++pos_];
        out.push_back(n == 'n' ? '\n' : n == 't' ? '\t' : n);
      } else {
        out.push_back(c);
      }
    }
    fail("unterminated string");
  }
  nlohmann::json array() {
    nlohmann::json out = nlohmann::json::array();
    ++pos_;
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == ']') {
      ++pos_;
      return out;
    }
    for (;;) {
      out.push_back(value());
      skip_ws();
      if (pos_ >= s_.size()) fail("unterminated array");
      if (s_[pos_] == ']') {
        ++pos_;
        return out;
      }
      if (s_[pos_] != ',') fail("expected ',' in array");
      ++pos_;
    }
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  int line_;
};

inline std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

}  // namespace detail

inline nlohmann::json parse_kv_config(std::string_view text) {
  nlohmann::json root = nlohmann::json::object();
  std::vector<std::string> section;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = detail::trim(detail::strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw Error("config-parse", "line " + std::to_string(line_no) + ": bad section header");
      section = detail::split_dotted(detail::trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error("config-parse", "line " + std::to_string(line_no) + ": expected key = value");
    std::vector<std::string> path = section;
    for (auto& p : detail::split_dotted(detail::trim(line.substr(0, eq)))) path.push_back(p);
    nlohmann::json* node = &root;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      if (path[i].empty()) throw Error("config-parse", "line " + std::to_string(line_no) + ": empty key");
      node = &(*node)[path[i]];
      if (!node->is_null() && !node->is_object())
        throw Error("config-parse", "line " + std::to_string(line_no) + ": '" + path[i] + "' is not a table");
    }
    if (path.back().empty()) throw Error("config-parse", "line " + std::to_string(line_no) + ": empty key");
    if (node->contains(path.back()))
      throw Error("config-parse", "line " + std::to_string(line_no) + ": duplicate key '" + path.back() + "'");
    (*node)[path.back()] = detail::ValueParser(line.substr(eq + 1), line_no).parse();
  }
  return root;
}

inline nlohmann::json read_kv_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("config-io", "cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_kv_config(ss.str());
}

}  // namespace vitac
