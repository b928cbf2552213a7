#pragma once

#include "vitac/service/episode_log.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <csignal>
#include <cstdio>
#include <thread>

namespace vitac {

/// Policy backed by an ordinary protocol client running as a child process
/// on the other end of a pipe pair. The harness plays the server: the
/// client's reset is answered with the harness's current episode (its seed,
/// task and config override are ignored), each step request becomes the
/// episode's next action, and its step-result is sent once the environment
/// has stepped. A reset mid-episode, close, EOF or a dead child aborts the
/// episode.
class ProcessPolicy : public Policy {
 public:
  explicit ProcessPolicy(const std::string& command, bool privileged = false) : privileged_(privileged) {
    std::signal(SIGPIPE, SIG_IGN);  // a dead client must surface as an error, not end the harness
    int to_child[2], from_child[2];
    if (::pipe(to_child) != 0) throw Error("spawn-failed", std::strerror(errno));
    if (::pipe(from_child) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw Error("spawn-failed", std::strerror(errno));
    }
    pid_ = ::fork();
    if (pid_ < 0) throw Error("spawn-failed", std::strerror(errno));
    if (pid_ == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) ::close(fd);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    in_fd_ = to_child[1];
    out_ = ::fdopen(from_child[0], "r");
  }

  ProcessPolicy(const ProcessPolicy&) = delete;
  ProcessPolicy& operator=(const ProcessPolicy&) = delete;

  ~ProcessPolicy() override {
    if (in_fd_ >= 0) ::close(in_fd_);
    if (out_) std::fclose(out_);
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(pid_, nullptr, WNOHANG) != 0) return;
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, nullptr, 0);
  }

  void begin_episode(const Environment& env, const Observation& obs) override {
    ObservationMsg m;
    m.task = to_string(env.task());
    m.seed = env.seed();
    m.config_hash = config_hash(env.config());
    m.observation = to_wire(obs);
    if (privileged_) m.privileged = privileged_json(env.privileged());
    observation_ = m;
    awaiting_reset_ = true;
  }

  ActionCommand act(const Environment& env, const Observation&, const StepResult* last) override {
    if (last) send(step_message(env, *last));
    for (;;) {
      Message request;
      try {
        request = receive();
      } catch (const ProtocolError& e) {
        send(ErrorMsg{e.code(), e.what()});
        continue;
      }
      if (std::holds_alternative<Hello>(request)) {
        HelloAck ack;
        ack.capabilities = server_capabilities(privileged_);
        send(ack);
      } else if (std::holds_alternative<ResetRequest>(request)) {
        if (!awaiting_reset_) throw Error("client-reset", "client reset in the middle of an evaluation episode");
        awaiting_reset_ = false;
        send(observation_);
      } else if (const auto* s = std::get_if<StepRequest>(&request)) {
        if (awaiting_reset_) {
          send(ErrorMsg{"not-reset", "step before reset"});
        } else if (static_cast<int>(s->action.size()) != action_arity(env.task())) {
          send(ErrorMsg{"bad-action", "wrong number of action values"});
        } else {
          ActionCommand a{env.task(), {}};
          std::copy(s->action.begin(), s->action.end(), a.values.begin());
          return a;
        }
      } else if (std::holds_alternative<CloseRequest>(request)) {
        send(ClosedMsg{});
        throw Error("client-disconnected", "client closed the session");
      } else {
        send(ErrorMsg{"unexpected-message", "clients may send hello, reset, step or close"});
      }
    }
  }

  void end_episode(const Environment& env, const StepResult& last) override {
    // The episode is complete either way; a client gone by now is not an abort.
    try {
      send(step_message(env, last));
    } catch (const Error&) {
    }
  }

 private:
  Message step_message(const Environment& env, const StepResult& r) const {
    StepResultMsg m;
    m.t = r.t;
    m.reward = r.reward;
    m.done = r.done;
    m.status = to_string(r.status);
    m.observation = to_wire(r.observation);
    m.diagnostics = diagnostics_json(r.diagnostics);
    if (privileged_) m.privileged = privileged_json(env.privileged());
    return m;
  }

  void send(const Message& m) {
    const std::string line = encode(m) + '\n';
    std::size_t sent = 0;
    while (sent < line.size()) {
      const ssize_t n = ::write(in_fd_, line.data() + sent, line.size() - sent);
      if (n <= 0) throw Error("client-disconnected", "client stopped reading");
      sent += static_cast<std::size_t>(n);
    }
  }

  Message receive() {
    char* buf = nullptr;
    std::size_t cap = 0;
    const ssize_t n = ::getline(&buf, &cap, out_);
    std::string line = n > 0 ? std::string(buf, static_cast<std::size_t>(n)) : std::string();
    std::free(buf);
    if (n <= 0) throw Error("client-disconnected", "client closed its output");
    while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.pop_back();
    return decode(line);
  }

  bool privileged_;
  pid_t pid_ = -1;
  int in_fd_ = -1;
  std::FILE* out_ = nullptr;
  ObservationMsg observation_;
  bool awaiting_reset_ = false;
};

}  // namespace vitac
