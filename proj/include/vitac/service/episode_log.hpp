#pragma once

#include "vitac/agents/policies.hpp"
#include "vitac/service/protocol.hpp"

#include <filesystem>
#include <fstream>
#include <memory>

namespace vitac {

inline constexpr const char* kLogFormat = "vitac-episode-log";
inline constexpr int kLogVersion = 1;

/// Newline-delimited episode log: a header (seed, full config, config hash,
/// versions), a reset record, one record per step and a footer.
class EpisodeLogWriter {
 public:
  explicit EpisodeLogWriter(std::ostream& out) : out_(&out) {}
  explicit EpisodeLogWriter(const std::filesystem::path& path) : file_(path), out_(&file_) {
    if (!file_) throw Error("log-io", "cannot open '" + path.string() + "' for writing");
  }

  void header(const EnvConfig& cfg, std::uint64_t seed) {
    write({{"kind", "header"},
           {"format", kLogFormat},
           {"version", kLogVersion},
           {"code_version", kCodeVersion},
           {"protocol", kProtocolVersion},
           {"task", to_string(cfg.task)},
           {"asset_id", cfg.asset_id},
           {"seed", seed},
           {"config", cfg},
           {"config_hash", config_hash(cfg)}});
  }

  void reset(const Environment& env, const Observation& obs) {
    write({{"kind", "reset"}, {"e_0", env.error()}, {"observation_digest", observation_digest(obs)}});
  }

  void step(const ActionCommand& a, const StepResult& r) {
    write({{"kind", "step"},
           {"t", r.t},
           {"action", std::vector<double>(a.values.begin(), a.values.begin() + a.arity())},
           {"reward", r.reward},
           {"status", to_string(r.status)},
           {"done", r.done},
           {"diagnostics", diagnostics_json(r.diagnostics)},
           {"observation_digest", observation_digest(r.observation)}});
  }

  void footer(const std::string& status, int steps, double total_reward, bool aborted, const std::string& reason = {}) {
    nlohmann::json j = {{"kind", "footer"}, {"status", status}, {"steps", steps},
                        {"total_reward", total_reward}, {"aborted", aborted}};
    if (!reason.empty()) j["reason"] = reason;
    write(j);
  }

 private:
  void write(const nlohmann::json& j) {
    *out_ << j.dump() << '\n';
    out_->flush();
  }

  std::ofstream file_;
  std::ostream* out_;
};

struct EpisodeLog {
  nlohmann::json header;
  std::optional<nlohmann::json> reset;
  std::vector<nlohmann::json> steps;
  std::optional<nlohmann::json> footer;
};

inline EpisodeLog parse_episode_log(std::istream& in) {
  EpisodeLog log;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error("log-invalid", "line " + std::to_string(line_no) + ": " + e.what());
    }
    const std::string kind = j.value("kind", "");
    if (line_no == 1 && kind != "header") throw Error("log-invalid", "log does not start with a header");
    if (kind == "header") {
      if (line_no != 1) throw Error("log-invalid", "header on line " + std::to_string(line_no));
      log.header = j;
    } else if (kind == "reset") {
      log.reset = j;
    } else if (kind == "step") {
      log.steps.push_back(j);
    } else if (kind == "footer") {
      log.footer = j;
    } else {
      throw Error("log-invalid", "line " + std::to_string(line_no) + ": unknown record kind '" + kind + "'");
    }
  }
  if (line_no == 0) throw Error("log-invalid", "empty log");
  return log;
}

inline EpisodeLog read_episode_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("log-io", "cannot read '" + path.string() + "'");
  return parse_episode_log(in);
}

/// Config stored in a log header, checked against this build. Throws
/// "replay-refused" when the log cannot be replayed faithfully.
inline EnvConfig logged_config(const EpisodeLog& log) {
  const auto& h = log.header;
  if (h.value("format", "") != kLogFormat || h.value("version", 0) != kLogVersion)
    throw Error("replay-refused", "unsupported log format");
  if (h.value("code_version", "") != kCodeVersion)
    throw Error("replay-refused", "log written by version " + h.value("code_version", std::string("?")) +
                                      ", this is " + kCodeVersion);
  EnvConfig cfg;
  try {
    cfg = make_config(h.at("config"));
  } catch (const nlohmann::json::exception& e) {
    throw Error("replay-refused", std::string("log has no usable config: ") + e.what());
  } catch (const Error& e) {
    throw Error("replay-refused", "logged config rejected: " + std::string(e.what()));
  }
  if (config_hash(cfg) != h.value("config_hash", ""))
    throw Error("replay-refused", "config hash mismatch (log " + h.value("config_hash", std::string("?")) +
                                      ", rebuilt " + config_hash(cfg) + ")");
  return cfg;
}

inline ActionCommand logged_action(Task task, const nlohmann::json& step) {
  const auto v = step.at("action").get<std::vector<double>>();
  if (static_cast<int>(v.size()) != action_arity(task)) throw Error("log-invalid", "logged action has wrong arity");
  ActionCommand a{task, {}};
  std::copy(v.begin(), v.end(), a.values.begin());
  return a;
}

struct Divergence {
  int step = 0;  // 0 is the reset
  std::string field;
  nlohmann::json expected, actual;
};

struct ReplayReport {
  bool refused = false;
  std::string reason;
  int steps_replayed = 0;
  std::optional<Divergence> divergence;

  bool ok() const { return !refused && !divergence; }
};

/// Re-executes the logged actions from the logged seed and compares every
/// logged field bit for bit.
inline ReplayReport replay(const EpisodeLog& log) {
  ReplayReport rep;
  EnvConfig cfg;
  try {
    cfg = logged_config(log);
  } catch (const Error& e) {
    rep.refused = true;
    rep.reason = e.what();
    return rep;
  }
  const auto diverge = [&](int step, std::string field, nlohmann::json expected, nlohmann::json actual) {
    rep.divergence = Divergence{step, std::move(field), std::move(expected), std::move(actual)};
    return rep;
  };

  Environment env(cfg);
  const std::uint64_t seed = log.header.at("seed").get<std::uint64_t>();
  Observation obs;
  try {
    obs = env.reset(seed);
  } catch (const Error& e) {
    if (log.reset) return diverge(0, "reset", "ok", e.code());
    return rep;  // the logged episode failed to reset as well
  }
  if (!log.reset) return diverge(0, "reset", nullptr, "ok");
  if (log.reset->at("observation_digest") != observation_digest(obs))
    return diverge(0, "observation_digest", log.reset->at("observation_digest"), observation_digest(obs));
  if (log.reset->at("e_0") != nlohmann::json(env.error())) return diverge(0, "e_0", log.reset->at("e_0"), env.error());

  double total = 0.0;
  for (const auto& rec : log.steps) {
    const int t = rec.at("t").get<int>();
    if (env.done()) return diverge(t, "done", false, true);
    StepResult r;
    try {
      r = env.step(logged_action(cfg.task, rec));
    } catch (const Error& e) {
      return diverge(t, "error", nullptr, e.code());
    }
    total += r.reward;
    ++rep.steps_replayed;
    const nlohmann::json actual = {{"t", r.t},
                                   {"reward", r.reward},
                                   {"status", to_string(r.status)},
                                   {"done", r.done},
                                   {"observation_digest", observation_digest(r.observation)}};
    for (const char* key : {"t", "reward", "status", "done", "observation_digest"})
      if (rec.at(key) != actual[key]) return diverge(t, key, rec.at(key), actual[key]);
    const nlohmann::json diag = diagnostics_json(r.diagnostics);
    const auto& logged = rec.at("diagnostics");
    for (auto it = diag.begin(); it != diag.end(); ++it) {
      const nlohmann::json expected = logged.contains(it.key()) ? logged[it.key()] : nlohmann::json();
      if (expected != *it) return diverge(t, "diagnostics." + it.key(), expected, *it);
    }
  }
  if (log.footer && !log.footer->value("aborted", false)) {
    const auto& f = *log.footer;
    const int n = rep.steps_replayed;
    const std::string status(to_string(env.status()));
    if (f.at("status") != status) return diverge(n, "footer.status", f.at("status"), status);
    if (f.at("steps") != n) return diverge(n, "footer.steps", f.at("steps"), n);
    if (f.at("total_reward") != nlohmann::json(total))
      return diverge(n, "footer.total_reward", f.at("total_reward"), total);
  }
  return rep;
}

inline ReplayReport replay(const std::filesystem::path& path) { return replay(read_episode_log(path)); }

/// Observation after `step` logged actions (0 is the reset observation),
/// checked against the logged digest. Throws "replay-divergence" on mismatch.
inline Observation replay_observation(const EpisodeLog& log, int step) {
  const EnvConfig cfg = logged_config(log);
  if (step < 0 || step > static_cast<int>(log.steps.size()) || !log.reset)
    throw Error("bad-step", "log has no step " + std::to_string(step));
  Environment env(cfg);
  Observation obs = env.reset(log.header.at("seed").get<std::uint64_t>());
  for (int i = 0; i < step; ++i) obs = env.step(logged_action(cfg.task, log.steps[i])).observation;
  const auto& rec = step == 0 ? *log.reset : log.steps[step - 1];
  if (rec.at("observation_digest") != observation_digest(obs))
    throw Error("replay-divergence", "observation at step " + std::to_string(step) + " does not match the log");
  return obs;
}

// ---------------------------------------------------------------------------
// Policies driven by the evaluation harness.

class Policy {
 public:
  virtual ~Policy() = default;
  virtual void begin_episode(const Environment&, const Observation&) {}
  /// `last` is null for the first action of an episode.
  virtual ActionCommand act(const Environment& env, const Observation& obs, const StepResult* last) = 0;
  virtual void end_episode(const Environment&, const StepResult&) {}
};

class BuiltinPolicy : public Policy {
 public:
  explicit BuiltinPolicy(PolicyKind kind) : kind_(kind) {}

  void begin_episode(const Environment& env, const Observation&) override {
    agent_ = std::make_unique<BuiltinAgent>(kind_, env, detail::stream_seed(env.seed(), 101));
  }
  ActionCommand act(const Environment&, const Observation& obs, const StepResult*) override { return agent_->act(obs); }

 private:
  PolicyKind kind_;
  std::unique_ptr<BuiltinAgent> agent_;
};

struct EpisodeRecord {
  std::uint64_t seed = 0;
  std::string status;  // terminal status, or "aborted"
  int steps = 0;
  double total_reward = 0.0;
  bool aborted = false;
  std::string reason;  // error code when aborted
  std::string log_path;
};

/// Runs one seeded episode to completion. Policy and reset failures abort the
/// episode instead of propagating.
inline EpisodeRecord run_episode(Environment& env, Policy& policy, std::uint64_t seed, EpisodeLogWriter* log = nullptr) {
  EpisodeRecord rec;
  rec.seed = seed;
  if (log) log->header(env.config(), seed);
  const auto abort = [&](const std::string& reason) {
    rec.aborted = true;
    rec.status = "aborted";
    rec.reason = reason;
    if (log) log->footer("aborted", rec.steps, rec.total_reward, true, reason);
    return rec;
  };
  Observation obs;
  try {
    obs = env.reset(seed);
  } catch (const Error& e) {
    return abort(e.code());
  }
  if (log) log->reset(env, obs);
  StepResult last;
  try {
    policy.begin_episode(env, obs);
    while (!env.done()) {
      const ActionCommand a = policy.act(env, obs, rec.steps ? &last : nullptr);
      last = env.step(a);
      obs = last.observation;
      ++rec.steps;
      rec.total_reward += last.reward;
      if (log) log->step(a, last);
    }
    policy.end_episode(env, last);
  } catch (const Error& e) {
    return abort(e.code());
  } catch (const std::exception&) {
    return abort("policy-error");
  }
  rec.status = std::string(to_string(env.status()));
  if (log) log->footer(rec.status, rec.steps, rec.total_reward, false);
  return rec;
}

struct EvaluationSummary {
  std::string task, policy;
  int episodes = 0, completed = 0, aborted = 0, successes = 0;
  double success_rate = 0.0;  // over completed episodes
  double mean_steps = 0.0, mean_reward = 0.0;
  std::vector<EpisodeRecord> runs;
};

inline EvaluationSummary summarize(std::string task, std::string policy, std::vector<EpisodeRecord> runs) {
  EvaluationSummary s;
  s.task = std::move(task);
  s.policy = std::move(policy);
  s.episodes = static_cast<int>(runs.size());
  for (const auto& r : runs) {
    if (r.aborted) {
      ++s.aborted;
      continue;
    }
    ++s.completed;
    if (r.status == "success") ++s.successes;
    s.mean_steps += r.steps;
    s.mean_reward += r.total_reward;
  }
  if (s.completed > 0) {
    s.success_rate = double(s.successes) / s.completed;
    s.mean_steps /= s.completed;
    s.mean_reward /= s.completed;
  }
  s.runs = std::move(runs);
  return s;
}

/// One episode per seed. Logs go to `<log_dir>/<task>_<policy>_<seed>.ndjson`.
inline EvaluationSummary evaluate(const EnvConfig& cfg, Policy& policy, const std::string& policy_name,
                                  const std::vector<std::uint64_t>& seeds,
                                  const std::optional<std::filesystem::path>& log_dir = std::nullopt) {
  std::vector<EpisodeRecord> runs;
  if (seeds.empty()) return summarize(std::string(to_string(cfg.task)), policy_name, {});
  if (log_dir) std::filesystem::create_directories(*log_dir);
  Environment env(cfg);
  for (std::uint64_t seed : seeds) {
    std::unique_ptr<EpisodeLogWriter> log;
    std::string path;
    if (log_dir) {
      path = (*log_dir / (std::string(to_string(cfg.task)) + "_" + policy_name + "_" + std::to_string(seed) + ".ndjson"))
                 .string();
      log = std::make_unique<EpisodeLogWriter>(path);
    }
    EpisodeRecord r = run_episode(env, policy, seed, log.get());
    r.log_path = path;
    runs.push_back(std::move(r));
  }
  return summarize(std::string(to_string(cfg.task)), policy_name, std::move(runs));
}

inline std::string format_summary(const EvaluationSummary& s) {
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof buf, "%-8s %-10s %8s %9s %7s %12s %11s %11s\n", "task", "policy", "episodes", "completed",
                "aborted", "success_rate", "mean_steps", "mean_reward");
  out += buf;
  std::snprintf(buf, sizeof buf, "%-8s %-10s %8d %9d %7d %12.3f %11.2f %11.3f\n", s.task.c_str(), s.policy.c_str(),
                s.episodes, s.completed, s.aborted, s.success_rate, s.mean_steps, s.mean_reward);
  out += buf;
  return out;
}

inline nlohmann::json summary_json(const EvaluationSummary& s) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : s.runs) {
    nlohmann::json j = {{"seed", r.seed}, {"status", r.status}, {"steps", r.steps},
                        {"total_reward", r.total_reward}, {"aborted", r.aborted}};
    if (!r.reason.empty()) j["reason"] = r.reason;
    if (!r.log_path.empty()) j["log"] = r.log_path;
    runs.push_back(j);
  }
  return {{"task", s.task},           {"policy", s.policy},         {"episodes", s.episodes},
          {"completed", s.completed}, {"aborted", s.aborted},       {"successes", s.successes},
          {"success_rate", s.success_rate}, {"mean_steps", s.mean_steps}, {"mean_reward", s.mean_reward},
          {"runs", runs}};
}

}  // namespace vitac
