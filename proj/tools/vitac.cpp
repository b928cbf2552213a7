#include "vitac/geometry/mesh_io.hpp"
#include "vitac/service/png.hpp"
#include "vitac/service/process_policy.hpp"
#include "vitac/service/server.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <iostream>

using namespace vitac;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfigError = 2, kProtocolError = 3, kReplayDivergence = 4 };

int exit_code_for(const std::string& code) {
  for (const char* c : {"config-invalid", "config-parse", "config-io", "unknown-task", "unknown-policy", "mesh-invalid",
                        "mesh-parse", "log-io", "log-invalid", "bad-step", "replay-refused", "bad-address"})
    if (code == c) return kConfigError;
  for (const char* c : {"port-busy", "bind-failed", "bad-message", "unknown-type", "client-disconnected"})
    if (code == c) return kProtocolError;
  if (code == "replay-divergence") return kReplayDivergence;
  return kFailure;
}

struct LoadedConfig {
  nlohmann::json env = nlohmann::json::object();  // environment overrides
  int max_sessions = 8;
  std::optional<std::string> log_dir;
};

/// Reads the key/value config file. A `[service]` table holds server
/// settings; everything else is environment config.
LoadedConfig load_config(const std::string& path) {
  LoadedConfig out;
  if (path.empty()) return out;
  nlohmann::json j = read_kv_config_file(path);
  if (j.contains("service")) {
    const nlohmann::json svc = j["service"];
    j.erase("service");
    for (auto it = svc.begin(); it != svc.end(); ++it) {
      if (it.key() == "max_sessions" && it->is_number_integer() && it->get<int>() > 0) {
        out.max_sessions = it->get<int>();
      } else if (it.key() == "log_dir" && it->is_string()) {
        out.log_dir = it->get<std::string>();
      } else {
        throw Error("config-invalid", "bad service setting '" + it.key() + "'");
      }
    }
  }
  out.env = j;
  return out;
}

EnvConfig env_config(const LoadedConfig& c, const std::string& task) {
  nlohmann::json j = c.env;
  if (!task.empty()) j["task"] = task;
  return make_config(j);
}

std::unique_ptr<Policy> make_policy(const std::string& spec, bool privileged) {
  if (spec.rfind("exec:", 0) == 0) return std::make_unique<ProcessPolicy>(spec.substr(5), privileged);
  return std::make_unique<BuiltinPolicy>(policy_from_string(spec));
}

std::string policy_label(const std::string& spec) { return spec.rfind("exec:", 0) == 0 ? "exec" : spec; }

/// "S" means S, S+1, ...; "a,b,c" is an explicit list.
std::vector<std::uint64_t> parse_seeds(const std::string& text, std::optional<int> episodes) {
  std::vector<std::uint64_t> seeds;
  try {
    if (text.find(',') != std::string::npos) {
      std::stringstream ss(text);
      std::string item;
      while (std::getline(ss, item, ',')) seeds.push_back(std::stoull(item));
      if (episodes && *episodes != static_cast<int>(seeds.size()))
        throw Error("config-invalid", "--episodes does not match the number of --seeds");
    } else {
      const std::uint64_t start = text.empty() ? 0 : std::stoull(text);
      for (int i = 0; i < episodes.value_or(1); ++i) seeds.push_back(start + static_cast<std::uint64_t>(i));
    }
  } catch (const std::logic_error&) {
    throw Error("config-invalid", "cannot parse seeds '" + text + "'");
  }
  return seeds;
}

std::string default_config_path() {
  const char* env = std::getenv("VITAC_CONFIG");
  return env ? env : "";
}

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGPIPE, SIG_IGN);
  CLI::App app{"Tactile manipulation simulator: environments, service and tools"};
  app.set_version_flag("--version", std::string("vitac ") + kCodeVersion);
  app.require_subcommand(1);
  std::string config_path = default_config_path();
  app.add_option("--config", config_path, "Config file (default: $VITAC_CONFIG)");

  auto* serve = app.add_subcommand("serve", "Run the environment service");
  std::string addr = "127.0.0.1:7007";
  bool privileged = false;
  std::optional<int> max_sessions;
  std::string serve_log_dir;
  serve->add_option("--addr", addr, "host:port to listen on, or 'stdio'")->capture_default_str();
  serve->add_option("--config", config_path, "Config file (default: $VITAC_CONFIG)");
  serve->add_flag("--privileged", privileged, "Expose ground-truth offsets to clients");
  serve->add_option("--max-sessions", max_sessions, "Concurrent session limit");
  serve->add_option("--log-dir", serve_log_dir, "Write an episode log per reset");

  auto* run = app.add_subcommand("run-episode", "Run one episode with a policy");
  std::string task, policy = "oracle", seed_text = "0", log_path;
  bool verbose = false;
  run->add_option("--task", task, "peg, lock or fusion");
  run->add_option("--policy", policy, "oracle, tactile, random or exec:COMMAND")->capture_default_str();
  run->add_option("--seed", seed_text)->capture_default_str();
  run->add_option("--log", log_path, "Episode log to write");
  run->add_option("--config", config_path, "Config file (default: $VITAC_CONFIG)");
  run->add_flag("--privileged", privileged, "Send ground-truth offsets to an exec policy");
  run->add_flag("-v,--verbose", verbose, "Print every step");

  auto* eval = app.add_subcommand("evaluate", "Run seeded episodes and summarize");
  std::optional<int> episodes;
  std::string seeds_text = "0", eval_log_dir, json_out;
  eval->add_option("--task", task, "peg, lock or fusion");
  eval->add_option("--policy", policy, "oracle, tactile, random or exec:COMMAND")->capture_default_str();
  eval->add_option("--episodes", episodes, "Number of episodes (default 1, or the seed list size)");
  eval->add_option("--seeds", seeds_text, "First seed, or a comma-separated list")->capture_default_str();
  eval->add_option("--log-dir", eval_log_dir, "Directory for per-episode logs");
  eval->add_option("--json", json_out, "Also write the summary as JSON");
  eval->add_option("--config", config_path, "Config file (default: $VITAC_CONFIG)");
  eval->add_flag("--privileged", privileged, "Send ground-truth offsets to an exec policy");

  auto* rep = app.add_subcommand("replay", "Re-execute an episode log and verify it");
  std::string replay_log;
  rep->add_option("--log", replay_log, "Episode log")->required();

  auto* gel = app.add_subcommand("gen-gel", "Generate a gel tet mesh");
  std::string gel_spec, gel_out;
  gel->add_option("--spec", gel_spec, "Key/value file: base_x, base_y, thickness (m), subdivisions");
  gel->add_option("--out", gel_out, "Output mesh path")->required();

  auto* markers = app.add_subcommand("render-markers", "Draw the marker flow of a logged step as PNG");
  std::string marker_log, marker_out;
  int marker_step = 0;
  markers->add_option("--log", marker_log, "Episode log")->required();
  markers->add_option("--step", marker_step, "Step index, 0 for the reset observation")->capture_default_str();
  markers->add_option("--out", marker_out, "PNG path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (*serve) {
      const LoadedConfig cfg = load_config(config_path);
      make_config(cfg.env);  // reject a bad config at startup
      ServerOptions opts;
      opts.session.base_config = cfg.env;
      opts.session.privileged = privileged;
      if (!serve_log_dir.empty()) opts.session.log_dir = serve_log_dir;
      else if (cfg.log_dir) opts.session.log_dir = *cfg.log_dir;
      opts.max_sessions = max_sessions.value_or(cfg.max_sessions);
      if (addr == "stdio") {
        serve_stream(std::cin, std::cout, opts.session);
        return kOk;
      }
      TcpServer server(addr, opts);
      std::cerr << "vitac: listening on port " << server.port() << "\n";
      server.run();
      return kOk;
    }

    if (*run) {
      const LoadedConfig cfg = load_config(config_path);
      Environment env(env_config(cfg, task));
      auto pol = make_policy(policy, privileged);
      std::unique_ptr<EpisodeLogWriter> log;
      if (!log_path.empty()) log = std::make_unique<EpisodeLogWriter>(std::filesystem::path(log_path));
      struct Verbose : Policy {
        Policy& inner;
        bool on;
        Verbose(Policy& p, bool v) : inner(p), on(v) {}
        void begin_episode(const Environment& e, const Observation& o) override { inner.begin_episode(e, o); }
        ActionCommand act(const Environment& e, const Observation& o, const StepResult* last) override {
          if (on && last)
            std::cout << "t=" << last->t << " reward=" << last->reward << " e_t=" << last->diagnostics.e_t
                      << " status=" << to_string(last->status) << "\n";
          return inner.act(e, o, last);
        }
        void end_episode(const Environment& e, const StepResult& last) override {
          if (on)
            std::cout << "t=" << last.t << " reward=" << last.reward << " e_t=" << last.diagnostics.e_t
                      << " status=" << to_string(last.status) << "\n";
          inner.end_episode(e, last);
        }
      } wrapped(*pol, verbose);
      const EpisodeRecord r = run_episode(env, wrapped, parse_seeds(seed_text, 1).front(), log.get());
      nlohmann::json j = {{"task", to_string(env.task())}, {"policy", policy_label(policy)}, {"seed", r.seed},
                          {"status", r.status},            {"steps", r.steps},             {"total_reward", r.total_reward}};
      if (r.aborted) j["reason"] = r.reason;
      std::cout << j.dump() << "\n";
      return r.aborted ? exit_code_for(r.reason) : kOk;
    }

    if (*eval) {
      const LoadedConfig cfg = load_config(config_path);
      const EnvConfig env_cfg = env_config(cfg, task);
      if (episodes && *episodes < 0) throw Error("config-invalid", "--episodes must be >= 0");
      const auto seeds = parse_seeds(seeds_text, episodes);
      if (policy.rfind("exec:", 0) != 0) policy_from_string(policy);  // validate the name even when n = 0
      // No client process is started for an empty evaluation.
      auto pol = seeds.empty() ? std::make_unique<BuiltinPolicy>(PolicyKind::random) : make_policy(policy, privileged);
      std::optional<std::filesystem::path> dir;
      if (!eval_log_dir.empty()) dir = eval_log_dir;
      const EvaluationSummary s = evaluate(env_cfg, *pol, policy_label(policy), seeds, dir);
      std::cout << format_summary(s);
      for (const auto& r : s.runs)
        if (r.aborted) std::cout << "aborted: seed " << r.seed << " (" << r.reason << ")\n";
      if (!json_out.empty()) {
        std::ofstream f(json_out);
        if (!f) throw Error("config-io", "cannot write '" + json_out + "'");
        f << summary_json(s).dump(2) << "\n";
      }
      return kOk;
    }

    if (*rep) {
      const ReplayReport report = replay(std::filesystem::path(replay_log));
      if (report.refused) {
        std::cout << "refused: " << report.reason << "\n";
        return kConfigError;
      }
      if (report.divergence) {
        const Divergence& d = *report.divergence;
        std::cout << "divergence at step " << d.step << ", field " << d.field << ": logged " << d.expected.dump()
                  << ", replayed " << d.actual.dump() << "\n";
        return kReplayDivergence;
      }
      std::cout << "ok: " << report.steps_replayed << " steps replayed, no divergence\n";
      return kOk;
    }

    if (*gel) {
      GelSpec spec;
      if (!gel_spec.empty()) {
        const nlohmann::json j = read_kv_config_file(gel_spec);
        for (auto it = j.begin(); it != j.end(); ++it) {
          const std::string& k = it.key();
          try {
            if (k == "base_x") spec.base_x = it->get<double>();
            else if (k == "base_y") spec.base_y = it->get<double>();
            else if (k == "thickness") spec.thickness = it->get<double>();
            else if (k == "subdivisions") spec.subdivisions = it->get<std::array<int, 3>>();
            else throw Error("config-invalid", "unknown gel spec key '" + k + "'");
          } catch (const nlohmann::json::exception&) {
            throw Error("config-invalid", "bad value for gel spec key '" + k + "'");
          }
        }
      }
      const TetMesh mesh = generate_gel_mesh(spec);
      save_tet_mesh(gel_out, mesh);
      std::cout << gel_out << ": " << mesh.vertices.size() << " vertices, " << mesh.tets.size() << " tets, "
                << mesh.constrained_set.size() << " constrained\n";
      return kOk;
    }

    if (*markers) {
      const EpisodeLog log = read_episode_log(marker_log);
      const Observation obs = replay_observation(log, marker_step);
      const EnvConfig cfg = logged_config(log);
      write_png(marker_out, marker_scatter(obs.flow_left, obs.flow_right, cfg.sensor.width, cfg.sensor.height));
      std::cout << marker_out << "\n";
      return kOk;
    }
  } catch (const Error& e) {
    std::cerr << "vitac: " << e.code() << ": " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "vitac: " << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}
