#pragma once

#include "vitac/env/environment.hpp"
#include "vitac/service/codec.hpp"

#include <map>
#include <optional>
#include <variant>

namespace vitac {

inline constexpr const char* kProtocolVersion = "v1";
inline constexpr const char* kCodeVersion = "1.0.0";

// Requests.
struct Hello {
  std::string version = kProtocolVersion;
  bool operator==(const Hello&) const = default;
};

struct ResetRequest {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> task;
  nlohmann::json config = nlohmann::json::object();  // partial overrides
  bool operator==(const ResetRequest&) const = default;
};

struct StepRequest {
  std::vector<double> action;
  bool operator==(const StepRequest&) const = default;
};

struct CloseRequest {
  bool operator==(const CloseRequest&) const = default;
};

// Responses.
struct HelloAck {
  std::string version = kProtocolVersion;
  std::string server = std::string("vitac ") + kCodeVersion;
  std::vector<std::string> tasks = {"peg", "lock", "fusion"};
  std::vector<std::string> capabilities;
  bool operator==(const HelloAck&) const = default;
};

/// Observation with binary channels as typed arrays:
///   flow_left, flow_right    f32 [N,2,2]  (marker, initial/current, u/v), pixels
///   valid_left, valid_right  u8  [N]
///   depth f32 [H,W], rgb u8 [H,W,3], instance i32 [H,W],
///   point_cloud f32 [M,3], point_labels i32 [M]   (fusion only)
struct WireObservation {
  std::array<double, 4> relative_motion{};
  std::map<std::string, WireArray> arrays;
  bool operator==(const WireObservation&) const = default;
};

struct ObservationMsg {
  std::string task;
  std::uint64_t seed = 0;
  std::string config_hash;
  WireObservation observation;
  std::optional<nlohmann::json> privileged;
  bool operator==(const ObservationMsg&) const = default;
};

struct StepResultMsg {
  int t = 0;
  double reward = 0.0;
  bool done = false;
  std::string status;
  WireObservation observation;
  nlohmann::json diagnostics = nlohmann::json::object();
  std::optional<nlohmann::json> privileged;
  bool operator==(const StepResultMsg&) const = default;
};

struct ErrorMsg {
  std::string code;
  std::string message;
  bool operator==(const ErrorMsg&) const = default;
};

struct ClosedMsg {
  bool operator==(const ClosedMsg&) const = default;
};

inline std::vector<std::string> server_capabilities(bool privileged) {
  std::vector<std::string> c = {"relative_motion", "marker_flow", "diagnostics", "depth", "rgb", "instance", "point_cloud"};
  if (privileged) c.push_back("privileged");
  return c;
}

using Message = std::variant<Hello, ResetRequest, StepRequest, CloseRequest, HelloAck, ObservationMsg, StepResultMsg,
                             ErrorMsg, ClosedMsg>;

namespace detail {

inline WireArray flow_array(const MarkerFlow& f) {
  std::vector<float> v;
  v.reserve(4 * f.initial.size());
  for (int i = 0; i < f.size(); ++i) {
    v.push_back(static_cast<float>(f.initial[i].x()));
    v.push_back(static_cast<float>(f.initial[i].y()));
    v.push_back(static_cast<float>(f.current[i].x()));
    v.push_back(static_cast<float>(f.current[i].y()));
  }
  return make_wire_array("f32", {f.size(), 2, 2}, v);
}

inline MarkerFlow flow_from_arrays(const WireArray& flow, const WireArray& valid) {
  if (flow.shape.size() != 3 || flow.shape[1] != 2 || flow.shape[2] != 2)
    throw ProtocolError("bad-message", "marker flow must have shape [N,2,2]");
  const auto v = wire_values<float>(flow);
  MarkerFlow f;
  for (int i = 0; i < flow.shape[0]; ++i) {
    f.initial.emplace_back(v[4 * i], v[4 * i + 1]);
    f.current.emplace_back(v[4 * i + 2], v[4 * i + 3]);
  }
  f.valid = wire_values<std::uint8_t>(valid);
  if (f.valid.size() != f.initial.size()) throw ProtocolError("bad-message", "marker mask size mismatch");
  return f;
}

inline nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

}  // namespace detail

inline WireObservation to_wire(const Observation& o) {
  WireObservation w;
  w.relative_motion = o.relative_motion;
  w.arrays["flow_left"] = detail::flow_array(o.flow_left);
  w.arrays["flow_right"] = detail::flow_array(o.flow_right);
  w.arrays["valid_left"] = make_wire_array("u8", {o.flow_left.size()}, o.flow_left.valid);
  w.arrays["valid_right"] = make_wire_array("u8", {o.flow_right.size()}, o.flow_right.valid);
  if (o.vision) {
    const DepthRender& r = o.vision->render;
    w.arrays["depth"] = make_wire_array("f32", {r.height, r.width}, r.depth);
    w.arrays["rgb"] = make_wire_array("u8", {r.height, r.width, 3}, r.rgb);
    w.arrays["instance"] = make_wire_array("i32", {r.height, r.width}, r.ids);
    const PointCloud& c = o.vision->cloud;
    std::vector<float> pts;
    pts.reserve(3 * c.points.size());
    for (const Vec3& p : c.points)
      for (int k = 0; k < 3; ++k) pts.push_back(static_cast<float>(p[k]));
    const int m = static_cast<int>(c.points.size());
    w.arrays["point_cloud"] = make_wire_array("f32", {m, 3}, pts);
    w.arrays["point_labels"] = make_wire_array("i32", {m}, c.labels);
  }
  return w;
}

/// Tactile part of a wire observation back as library types (f32 precision).
inline std::array<MarkerFlow, 2> flows_from_wire(const WireObservation& w) {
  const auto get = [&](const char* name) -> const WireArray& {
    const auto it = w.arrays.find(name);
    if (it == w.arrays.end()) throw ProtocolError("bad-message", std::string("missing array '") + name + "'");
    return it->second;
  };
  return {detail::flow_from_arrays(get("flow_left"), get("valid_left")),
          detail::flow_from_arrays(get("flow_right"), get("valid_right"))};
}

inline nlohmann::json diagnostics_json(const Diagnostics& d) {
  return {{"e_t", d.e_t},
          {"error", d.error},
          {"l_diff", d.l_diff},
          {"r_diff", d.r_diff},
          {"surface_diff", d.surface_diff},
          {"depth", d.depth},
          {"pair_errors", d.pair_errors},
          {"tether_force", d.tether_force},
          {"min_distance", detail::number_or_null(d.min_distance)},
          {"solver_iterations", d.solver_iterations},
          {"substeps", d.substeps},
          {"failure", d.failure},
          {"contact_left", to_string(d.contact_left)},
          {"contact_right", to_string(d.contact_right)},
          {"reward_terms",
           {{"progress", d.reward.progress},
            {"penalty", d.reward.penalty},
            {"final", d.reward.final},
            {"fail", d.reward.fail}}}};
}

inline nlohmann::json privileged_json(const Privileged& p) {
  return {{"offset", p.offset},
          {"x_offset", p.offsets.x_offset},
          {"y_offset", p.offsets.y_offset},
          {"z_offset", p.offsets.z_offset},
          {"theta_offset", p.offsets.theta_offset}};
}

/// SHA-256 over the full-precision observation, for logs.
inline std::string observation_digest(const Observation& o) {
  std::vector<std::uint8_t> buf;
  const auto put = [&](const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf.insert(buf.end(), b, b + n);
  };
  put(o.relative_motion.data(), sizeof(double) * 4);
  for (const MarkerFlow* f : {&o.flow_left, &o.flow_right}) {
    for (int i = 0; i < f->size(); ++i) {
      put(f->initial[i].data(), 2 * sizeof(double));
      put(f->current[i].data(), 2 * sizeof(double));
    }
    put(f->valid.data(), f->valid.size());
  }
  if (o.vision) {
    const DepthRender& r = o.vision->render;
    put(r.depth.data(), r.depth.size() * sizeof(float));
    put(r.ids.data(), r.ids.size() * sizeof(std::int32_t));
    for (const Vec3& p : o.vision->cloud.points) put(p.data(), 3 * sizeof(double));
  }
  return sha256_hex(buf.data(), buf.size());
}

// ---------------------------------------------------------------------------
// JSON mapping. Every message is one object with a "type" field.

inline void to_json(nlohmann::json& j, const WireObservation& w) {
  j = nlohmann::json::object();
  j["relative_motion"] = w.relative_motion;
  for (const auto& [name, a] : w.arrays) j[name] = a;
}

inline void from_json(const nlohmann::json& j, WireObservation& w) {
  if (!j.is_object()) throw ProtocolError("bad-message", "observation must be an object");
  w.relative_motion = j.at("relative_motion").get<std::array<double, 4>>();
  w.arrays.clear();
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "relative_motion") w.arrays[it.key()] = it->get<WireArray>();
}

inline nlohmann::json to_json_message(const Message& m) {
  using nlohmann::json;
  return std::visit(
      [](const auto& v) -> json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Hello>) {
          return {{"type", "hello"}, {"version", v.version}};
        } else if constexpr (std::is_same_v<T, ResetRequest>) {
          json j = {{"type", "reset"}, {"config", v.config}};
          if (v.seed) j["seed"] = *v.seed;
          if (v.task) j["task"] = *v.task;
          return j;
        } else if constexpr (std::is_same_v<T, StepRequest>) {
          return {{"type", "step"}, {"action", v.action}};
        } else if constexpr (std::is_same_v<T, CloseRequest>) {
          return {{"type", "close"}};
        } else if constexpr (std::is_same_v<T, HelloAck>) {
          return {{"type", "hello-ack"}, {"version", v.version}, {"server", v.server},
                  {"tasks", v.tasks},    {"capabilities", v.capabilities}};
        } else if constexpr (std::is_same_v<T, ObservationMsg>) {
          json j = {{"type", "observation"}, {"task", v.task}, {"seed", v.seed},
                    {"config_hash", v.config_hash}, {"observation", v.observation}};
          if (v.privileged) j["privileged"] = *v.privileged;
          return j;
        } else if constexpr (std::is_same_v<T, StepResultMsg>) {
          json j = {{"type", "step-result"}, {"t", v.t},
                    {"reward", v.reward},    {"done", v.done},
                    {"status", v.status},    {"observation", v.observation},
                    {"diagnostics", v.diagnostics}};
          if (v.privileged) j["privileged"] = *v.privileged;
          return j;
        } else if constexpr (std::is_same_v<T, ErrorMsg>) {
          return {{"type", "error"}, {"code", v.code}, {"message", v.message}};
        } else {
          return {{"type", "closed"}};
        }
      },
      m);
}

inline Message from_json_message(const nlohmann::json& j) {
  if (!j.is_object()) throw ProtocolError("bad-message", "message must be a JSON object");
  if (!j.contains("type") || !j["type"].is_string()) throw ProtocolError("bad-message", "message has no type");
  const std::string type = j["type"].get<std::string>();
  try {
    if (type == "hello") return Hello{j.value("version", std::string(kProtocolVersion))};
    if (type == "reset") {
      ResetRequest r;
      if (j.contains("seed") && !j["seed"].is_null()) {
        if (!j["seed"].is_number_unsigned()) throw ProtocolError("bad-message", "seed must be a non-negative integer");
        r.seed = j["seed"].get<std::uint64_t>();
      }
      if (j.contains("task") && !j["task"].is_null()) r.task = j["task"].get<std::string>();
      if (j.contains("config")) r.config = j["config"];
      if (!r.config.is_object()) throw ProtocolError("bad-message", "reset config must be an object");
      return r;
    }
    if (type == "step") return StepRequest{j.at("action").get<std::vector<double>>()};
    if (type == "close") return CloseRequest{};
    if (type == "hello-ack") {
      return HelloAck{j.at("version").get<std::string>(), j.at("server").get<std::string>(),
                      j.at("tasks").get<std::vector<std::string>>(),
                      j.at("capabilities").get<std::vector<std::string>>()};
    }
    if (type == "observation") {
      ObservationMsg m;
      m.task = j.at("task").get<std::string>();
      m.seed = j.at("seed").get<std::uint64_t>();
      m.config_hash = j.at("config_hash").get<std::string>();
      m.observation = j.at("observation").get<WireObservation>();
      if (j.contains("privileged")) m.privileged = j["privileged"];
      return m;
    }
    if (type == "step-result") {
      StepResultMsg m;
      m.t = j.at("t").get<int>();
      m.reward = j.at("reward").get<double>();
      m.done = j.at("done").get<bool>();
      m.status = j.at("status").get<std::string>();
      m.observation = j.at("observation").get<WireObservation>();
      m.diagnostics = j.at("diagnostics");
      if (j.contains("privileged")) m.privileged = j["privileged"];
      return m;
    }
    if (type == "error") return ErrorMsg{j.at("code").get<std::string>(), j.at("message").get<std::string>()};
    if (type == "closed") return ClosedMsg{};
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError("bad-message", std::string("malformed '") + type + "' message: " + e.what());
  }
  throw ProtocolError("unknown-type", "unknown message type '" + type + "'");
}

/// One line of the wire format, without the trailing newline.
inline std::string encode(const Message& m) { return to_json_message(m).dump(); }

inline Message decode(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ProtocolError("bad-message", std::string("invalid JSON: ") + e.what());
  }
  return from_json_message(j);
}

inline std::string message_type(const Message& m) {
  static constexpr const char* kNames[] = {"hello",       "reset", "step",  "close", "hello-ack",
                                           "observation", "step-result", "error", "closed"};
  return kNames[m.index()];
}

}  // namespace vitac
