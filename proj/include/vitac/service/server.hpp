#pragma once

#include "vitac/service/episode_log.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <iostream>
#include <list>
#include <mutex>
#include <thread>

namespace vitac {

struct SessionOptions {
  nlohmann::json base_config = nlohmann::json::object();  // overrides applied before each reset's own
  bool privileged = false;
  std::optional<std::filesystem::path> log_dir;
};

/// One client's view of the service: owns its environment exclusively and
/// answers each request with exactly one response.
class Session {
 public:
  explicit Session(SessionOptions opts = {}) : opts_(std::move(opts)) {
    if (!opts_.base_config.is_object()) throw Error("config-invalid", "base config must be an object");
  }
  ~Session() { finish_log("aborted", "session-ended"); }

  bool closed() const { return closed_; }
  const Environment* environment() const { return env_.get(); }

  Message handle(const Message& request) {
    try {
      return std::visit([this](const auto& m) { return on(m); }, request);
    } catch (const Error& e) {
      return ErrorMsg{e.code(), e.what()};
    } catch (const std::exception& e) {
      return ErrorMsg{"internal", e.what()};
    }
  }

  /// Decodes, handles and encodes one wire line. Malformed input gives an
  /// error response; the session stays usable.
  std::string handle_line(std::string_view line) {
    Message request;
    try {
      request = decode(line);
    } catch (const Error& e) {
      return encode(ErrorMsg{e.code(), e.what()});
    }
    return encode(handle(request));
  }

 private:
  Message on(const Hello& h) {
    if (h.version != kProtocolVersion)
      return ErrorMsg{"version-mismatch", "server speaks " + std::string(kProtocolVersion) + ", client " + h.version};
    HelloAck ack;
    ack.capabilities = server_capabilities(opts_.privileged);
    return ack;
  }

  Message on(const ResetRequest& r) {
    nlohmann::json overrides = opts_.base_config;
    overrides.merge_patch(r.config);
    if (r.task) overrides["task"] = *r.task;
    const EnvConfig cfg = make_config(overrides);
    const std::string hash = config_hash(cfg);
    if (!env_ || hash != hash_) {
      env_.reset();
      env_ = std::make_unique<Environment>(cfg);
      hash_ = hash;
    }
    finish_log("aborted", "superseded");
    const std::uint64_t seed = r.seed.value_or(cfg.seed);
    open_log(cfg, seed);
    Observation obs;
    try {
      obs = env_->reset(seed);
    } catch (const Error& e) {
      finish_log("aborted", e.code());
      throw;
    }
    if (log_) log_->reset(*env_, obs);
    ObservationMsg m;
    m.task = to_string(cfg.task);
    m.seed = seed;
    m.config_hash = hash;
    m.observation = to_wire(obs);
    if (opts_.privileged) m.privileged = privileged_json(env_->privileged());
    return m;
  }

  Message on(const StepRequest& s) {
    if (!env_ || !env_->is_reset()) return ErrorMsg{"not-reset", "step before reset"};
    if (env_->done()) return ErrorMsg{"episode-done", "episode is over; send reset"};
    const Task task = env_->task();
    if (static_cast<int>(s.action.size()) != action_arity(task))
      return ErrorMsg{"bad-action", "task " + std::string(to_string(task)) + " takes " +
                                        std::to_string(action_arity(task)) + " action values"};
    ActionCommand a{task, {}};
    std::copy(s.action.begin(), s.action.end(), a.values.begin());
    const StepResult r = env_->step(a);
    steps_ += 1;
    total_ += r.reward;
    if (log_) log_->step(a, r);
    if (r.done) finish_log(std::string(to_string(r.status)), {});
    StepResultMsg m;
    m.t = r.t;
    m.reward = r.reward;
    m.done = r.done;
    m.status = to_string(r.status);
    m.observation = to_wire(r.observation);
    m.diagnostics = diagnostics_json(r.diagnostics);
    if (opts_.privileged) m.privileged = privileged_json(env_->privileged());
    return m;
  }

  Message on(const CloseRequest&) {
    finish_log("aborted", "closed");
    env_.reset();
    closed_ = true;
    return ClosedMsg{};
  }

  template <class T>
  Message on(const T&) {
    return ErrorMsg{"unexpected-message", "clients may send hello, reset, step or close"};
  }

  void open_log(const EnvConfig& cfg, std::uint64_t seed) {
    steps_ = 0;
    total_ = 0.0;
    if (!opts_.log_dir) return;
    std::filesystem::create_directories(*opts_.log_dir);
    static std::atomic<std::uint64_t> counter{0};
    const std::string name = std::string(to_string(cfg.task)) + "_" + std::to_string(seed) + "_" +
                             std::to_string(::getpid()) + "_" + std::to_string(counter++) + ".ndjson";
    log_ = std::make_unique<EpisodeLogWriter>(*opts_.log_dir / name);
    log_->header(cfg, seed);
  }

  void finish_log(const std::string& status, const std::string& reason) {
    if (!log_) return;
    log_->footer(status, steps_, total_, !reason.empty(), reason);
    log_.reset();
  }

  SessionOptions opts_;
  std::unique_ptr<Environment> env_;
  std::string hash_;
  std::unique_ptr<EpisodeLogWriter> log_;
  int steps_ = 0;
  double total_ = 0.0;
  bool closed_ = false;
};

/// Serves one session over a pair of streams (stdio mode) until close or EOF.
inline void serve_stream(std::istream& in, std::ostream& out, const SessionOptions& opts) {
  Session session(opts);
  std::string line;
  while (!session.closed() && std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    out << session.handle_line(line) << '\n';
    out.flush();
  }
}

struct ServerOptions {
  SessionOptions session;
  int max_sessions = 8;
  std::size_t max_line = std::size_t(64) << 20;
};

/// Parses "host:port", ":port" or "port". The host defaults to 127.0.0.1.
inline std::pair<std::string, int> parse_address(const std::string& addr) {
  std::string host = "127.0.0.1", port = addr;
  if (const auto colon = addr.rfind(':'); colon != std::string::npos) {
    if (colon > 0) host = addr.substr(0, colon);
    port = addr.substr(colon + 1);
  }
  try {
    std::size_t used = 0;
    const int p = std::stoi(port, &used);
    if (used != port.size() || p < 0 || p > 65535) throw std::invalid_argument(port);
    return {host, p};
  } catch (const std::exception&) {
    throw Error("bad-address", "cannot parse listen address '" + addr + "'");
  }
}

/// TCP listener with one thread and one Session per connection.
class TcpServer {
 public:
  TcpServer(const std::string& addr, ServerOptions opts) : opts_(std::move(opts)) {
    const auto [host, port] = parse_address(addr);
    addrinfo hints{}, *res = nullptr;
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_flags = AI_PASSIVE;
    if (getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res)
      throw Error("bad-address", "cannot resolve '" + host + "'");
    fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    if (fd_ < 0) {
      freeaddrinfo(res);
      throw Error("bind-failed", std::strerror(errno));
    }
    const int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd_, res->ai_addr, res->ai_addrlen) != 0 || ::listen(fd_, 16) != 0) {
      const int err = errno;
      freeaddrinfo(res);
      ::close(fd_);
      throw Error(err == EADDRINUSE ? "port-busy" : "bind-failed", addr + ": " + std::strerror(err));
    }
    freeaddrinfo(res);
    sockaddr_storage bound{};
    socklen_t len = sizeof bound;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = bound.ss_family == AF_INET6 ? ntohs(reinterpret_cast<sockaddr_in6*>(&bound)->sin6_port)
                                        : ntohs(reinterpret_cast<sockaddr_in*>(&bound)->sin_port);
  }

  ~TcpServer() {
    stop();
    std::lock_guard lock(mu_);
    for (auto& c : connections_) {
      c.thread.join();
      ::close(c.fd);
    }
    ::close(fd_);
  }

  int port() const { return port_; }

  /// Accepts until stop() is called.
  void run() {
    while (!stopping_) {
      pollfd p{fd_, POLLIN, 0};
      if (::poll(&p, 1, 100) <= 0) {
        reap();
        continue;
      }
      const int client = ::accept(fd_, nullptr, nullptr);
      if (client < 0) continue;
      reap();
      std::lock_guard lock(mu_);
      if (static_cast<int>(connections_.size()) >= opts_.max_sessions) {
        send_line(client, encode(ErrorMsg{"session-limit", "too many sessions"}));
        ::close(client);
        continue;
      }
      auto& c = connections_.emplace_back();
      c.fd = client;
      c.thread = std::thread([this, &c] {
        handle(c.fd);
        c.finished = true;
      });
    }
  }

  void stop() {
    stopping_ = true;
    std::lock_guard lock(mu_);
    for (auto& c : connections_)
      if (!c.finished) ::shutdown(c.fd, SHUT_RDWR);
  }

 private:
  struct Connection {
    int fd = -1;
    std::thread thread;
    std::atomic<bool> finished{false};
  };

  static bool send_line(int fd, const std::string& line) {
    std::string data = line + '\n';
    std::size_t sent = 0;
    while (sent < data.size()) {
      const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
      if (n <= 0) return false;
      sent += static_cast<std::size_t>(n);
    }
    return true;
  }

  void handle(int fd) {
    Session session(opts_.session);
    std::string buffer;
    char chunk[65536];
    while (!session.closed()) {
      const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
      if (n <= 0) break;
      buffer.append(chunk, static_cast<std::size_t>(n));
      std::size_t start = 0, nl;
      bool ok = true;
      while (ok && !session.closed() && (nl = buffer.find('\n', start)) != std::string::npos) {
        std::string_view line(buffer.data() + start, nl - start);
        start = nl + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!line.empty()) ok = send_line(fd, session.handle_line(line));
      }
      buffer.erase(0, start);
      if (!ok) break;
      if (buffer.size() > opts_.max_line) {
        send_line(fd, encode(ErrorMsg{"bad-message", "line too long"}));
        break;
      }
    }
    ::shutdown(fd, SHUT_RDWR);  // closed by reap() so stop() never touches a reused descriptor
  }

  void reap() {
    std::lock_guard lock(mu_);
    for (auto it = connections_.begin(); it != connections_.end();) {
      if (it->finished) {
        it->thread.join();
        ::close(it->fd);
        it = connections_.erase(it);
      } else {
        ++it;
      }
    }
  }

  ServerOptions opts_;
  int fd_ = -1;
  int port_ = 0;
  std::atomic<bool> stopping_{false};
  std::mutex mu_;
  std::list<Connection> connections_;
};

}  // namespace vitac
