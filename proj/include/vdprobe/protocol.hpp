#pragma once

// Wire protocol for external agents.
//
// The harness starts the agent as a child process and talks to it over the
// child's stdin/stdout: one JSON object per line, UTF-8, '\n'-terminated.
// Every request gets exactly one reply, and the harness never has more than
// one request outstanding on a process. Unknown fields in replies are ignored.
//
//   harness -> agent                                     agent -> harness
//   {"type":"hello","role","feature_dim","vocab_digest","rounds"}
//                                                        {"type":"ready","name","version"}
//   {"type":"begin_game","session","round":1,"caption"[,"image"]}
//                                                        {"type":"ack","session","round"}
//   {"type":"ask","session","round"}                     {"type":"question","session","round","tokens"}
//   {"type":"answer_request","session","round","question","image"}
//                                                        {"type":"answer","session","round","tokens"}
//   {"type":"predict","session","round","answer"}        {"type":"prediction","session","round","vector"}
//   {"type":"end_game","session","round"}                {"type":"ack","session","round"}
//
// A reply must echo the request's session and round.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "vdprobe/agents.hpp"
#include "vdprobe/types.hpp"

extern char** environ;

namespace vdprobe {

enum class Role { Questioner, Answerer };

inline std::string_view to_string(Role r) { return r == Role::Questioner ? "questioner" : "answerer"; }

struct Timeouts {
  std::chrono::milliseconds handshake{10'000};
  std::chrono::milliseconds message{30'000};
};

// Messages -------------------------------------------------------------------

inline std::string encode_line(const json& message) {
  // dump() escapes control characters, so the line has no embedded newline.
  return message.dump() + "\n";
}

// Parses one line (without its terminator) into a JSON object.
inline json decode_line(std::string_view line) {
  json j = json::parse(line.begin(), line.end(), nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw AgentError("reply is not valid JSON: " + std::string(line.substr(0, 200)));
  if (!j.is_object()) throw AgentError("reply is not a JSON object");
  return j;
}

inline json hello_message(Role role, std::size_t feature_dim, std::string_view vocab_digest, int rounds) {
  return {{"type", "hello"},
          {"role", to_string(role)},
          {"feature_dim", feature_dim},
          {"vocab_digest", vocab_digest},
          {"rounds", rounds}};
}

struct Capabilities {
  std::string name;
  std::string version;
};

// Validates a handshake reply; the error names the offending field.
inline Capabilities parse_ready(const json& reply) {
  auto field = [&](const char* key) -> std::string {
    auto it = reply.find(key);
    if (it == reply.end()) throw HandshakeError(std::string("handshake reply is missing field '") + key + "'");
    if (!it->is_string()) throw HandshakeError(std::string("handshake reply field '") + key + "' must be a string");
    return it->get<std::string>();
  };
  if (field("type") != "ready") {
    throw HandshakeError("handshake reply field 'type' must be \"ready\", got " + reply["type"].dump());
  }
  return {field("name"), field("version")};
}

// Checks type and the session/round echo of a session reply.
inline void check_reply(const json& reply, std::string_view expected_type, std::string_view session, int round) {
  auto type = reply.find("type");
  if (type == reply.end() || !type->is_string() || *type != expected_type) {
    throw AgentError("expected reply type '" + std::string(expected_type) + "', got " +
                     (type == reply.end() ? std::string("nothing") : type->dump()));
  }
  auto s = reply.find("session");
  if (s == reply.end() || !s->is_string() || *s != session) {
    throw AgentError("reply does not echo session '" + std::string(session) + "'");
  }
  auto r = reply.find("round");
  if (r == reply.end() || !r->is_number_integer() || r->get<long long>() != round) {
    throw AgentError("reply echoes round " + (r == reply.end() ? std::string("nothing") : r->dump()) +
                     ", expected " + std::to_string(round));
  }
}

inline TokenSeq reply_tokens(const json& reply, const char* key) {
  auto it = reply.find(key);
  if (it == reply.end()) throw AgentError(std::string("reply is missing field '") + key + "'");
  try {
    return tokens_from_json(*it);
  } catch (const std::invalid_argument& e) {
    throw AgentError(std::string("reply field '") + key + "': " + e.what());
  }
}

inline FeatureVector reply_vector(const json& reply, const char* key, std::size_t dim) {
  auto it = reply.find(key);
  if (it == reply.end()) throw AgentError(std::string("reply is missing field '") + key + "'");
  try {
    FeatureVector v = vector_from_json(*it);
    if (v.dim() != dim) {
      throw AgentError("prediction has length " + std::to_string(v.dim()) + ", expected " + std::to_string(dim));
    }
    return v;
  } catch (const std::invalid_argument& e) {
    throw AgentError(std::string("reply field '") + key + "': " + e.what());
  }
}

// Process transport -------------------------------------------------------------

// A child process whose stdin and stdout are one end of a Unix socket pair.
// Sockets (rather than pipes) let writes use MSG_NOSIGNAL, so a dead agent
// never raises SIGPIPE in the harness.
class AgentProcess {
 public:
  static constexpr std::size_t kMaxLine = 64 << 20;

  explicit AgentProcess(const std::vector<std::string>& argv) {
    if (argv.empty()) throw HandshakeError("agent command is empty");
    int fds[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0) {
      throw HandshakeError(std::string("socketpair: ") + std::strerror(errno));
    }
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, fds[1], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, fds[1], STDOUT_FILENO);
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    const int rc = ::posix_spawnp(&pid_, args[0], &actions, nullptr, args.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(fds[1]);
    if (rc != 0) {
      ::close(fds[0]);
      throw HandshakeError("cannot start agent '" + argv[0] + "': " + std::strerror(rc));
    }
    fd_ = fds[0];
  }

  AgentProcess(const AgentProcess&) = delete;
  AgentProcess& operator=(const AgentProcess&) = delete;

  ~AgentProcess() {
    ::close(fd_);
    int status;
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(pid_, &status, WNOHANG) == pid_) return;
      if (i == 10) ::kill(pid_, SIGTERM);
      ::usleep(2'000);
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, &status, 0);
  }

  pid_t pid() const noexcept { return pid_; }

  void send_line(std::string_view line, std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (!line.empty()) {
      wait_for(POLLOUT, deadline, "writing to agent");
      const ssize_t n = ::send(fd_, line.data(), line.size(), MSG_NOSIGNAL | MSG_DONTWAIT);
      if (n < 0) {
        if (errno == EAGAIN || errno == EINTR) continue;
        throw AgentError(std::string("agent closed its input: ") + std::strerror(errno));
      }
      line.remove_prefix(static_cast<std::size_t>(n));
    }
  }

  // Next complete line, without its '\n'.
  std::string read_line(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      if (buffer_.size() > kMaxLine) throw AgentError("agent line exceeds size limit");
      wait_for(POLLIN, deadline, "waiting for agent reply");
      char chunk[8192];
      const ssize_t n = ::recv(fd_, chunk, sizeof chunk, MSG_DONTWAIT);
      if (n < 0) {
        if (errno == EAGAIN || errno == EINTR) continue;
        throw AgentError(std::string("reading from agent: ") + std::strerror(errno));
      }
      if (n == 0) throw AgentError("agent closed its output");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  void wait_for(short events, std::chrono::steady_clock::time_point deadline, const char* what) {
    for (;;) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw AgentError(std::string("timeout ") + what);
      pollfd p{fd_, events, 0};
      const int rc = ::poll(&p, 1, static_cast<int>(left.count()));
      if (rc > 0) return;
      if (rc < 0 && errno != EINTR) throw AgentError(std::string("poll: ") + std::strerror(errno));
    }
  }

  pid_t pid_ = -1;
  int fd_ = -1;
  std::string buffer_;
};

// One handshaken agent process. After any session error it is marked broken
// and must be replaced before serving another session.
class AgentConnection {
 public:
  AgentConnection(const std::vector<std::string>& command, Timeouts timeouts)
      : process_(command), timeouts_(timeouts) {}

  const Capabilities& handshake(Role role, std::size_t feature_dim, std::string_view vocab_digest, int rounds) {
    try {
      process_.send_line(encode_line(hello_message(role, feature_dim, vocab_digest, rounds)), timeouts_.handshake);
      const std::string line = process_.read_line(timeouts_.handshake);
      json reply = json::parse(line, nullptr, false);
      if (reply.is_discarded() || !reply.is_object()) throw HandshakeError("handshake reply is not a JSON object");
      caps_ = parse_ready(reply);
    } catch (const AgentError& e) {
      throw HandshakeError(std::string("handshake failed: ") + e.what());
    }
    return caps_;
  }

  const Capabilities& capabilities() const noexcept { return caps_; }
  bool broken() const noexcept { return broken_; }

  // Sends a request and returns its validated reply.
  json request(const json& message, std::string_view reply_type) {
    if (broken_) throw AgentError("agent connection is unusable after an earlier error");
    try {
      process_.send_line(encode_line(message), timeouts_.message);
      json reply = decode_line(process_.read_line(timeouts_.message));
      check_reply(reply, reply_type, message.at("session").get<std::string>(), message.at("round").get<int>());
      return reply;
    } catch (const AgentError&) {
      broken_ = true;
      throw;
    }
  }

  // Best effort, no reply awaited; used when tearing down a failed session.
  void send_only(const json& message) noexcept {
    try {
      process_.send_line(encode_line(message), std::chrono::milliseconds(100));
    } catch (...) {
    }
    broken_ = true;
  }

  void mark_broken() noexcept { broken_ = true; }

 private:
  AgentProcess process_;
  Timeouts timeouts_;
  Capabilities caps_;
  bool broken_ = false;
};

namespace detail {

inline json session_message(const char* type, const std::string& session, int round) {
  return {{"type", type}, {"session", session}, {"round", round}};
}

// Shared end_game handling: acknowledged on a healthy connection, fire-and-forget otherwise.
inline void end_session(AgentConnection& conn, const std::string& session, int round) {
  json msg = session_message("end_game", session, round);
  if (conn.broken()) {
    conn.send_only(msg);
  } else {
    conn.request(msg, "ack");
  }
}

}  // namespace detail

class ExternalQuestioner final : public Questioner {
 public:
  ExternalQuestioner(AgentConnection& conn, std::size_t feature_dim) : conn_(conn), dim_(feature_dim) {}

  void begin_game(const std::string& session, const TokenSeq& caption) override {
    session_ = session;
    json msg = detail::session_message("begin_game", session_, 1);
    msg["caption"] = tokens_to_json(caption);
    conn_.request(msg, "ack");
  }

  TokenSeq ask(int round) override {
    return reply_tokens(conn_.request(detail::session_message("ask", session_, round), "question"), "tokens");
  }

  FeatureVector predict(int round, const TokenSeq& answer) override {
    json msg = detail::session_message("predict", session_, round);
    msg["answer"] = tokens_to_json(answer);
    try {
      return reply_vector(conn_.request(msg, "prediction"), "vector", dim_);
    } catch (const AgentError&) {
      conn_.mark_broken();
      throw;
    }
  }

  void end_game(int round) override { detail::end_session(conn_, session_, round); }

 private:
  AgentConnection& conn_;
  std::size_t dim_;
  std::string session_;
};

class ExternalAnswerer final : public Answerer {
 public:
  explicit ExternalAnswerer(AgentConnection& conn) : conn_(conn) {}

  void begin_game(const std::string& session, const TokenSeq& caption, const FeatureVector& image) override {
    session_ = session;
    json msg = detail::session_message("begin_game", session_, 1);
    msg["caption"] = tokens_to_json(caption);
    msg["image"] = vector_to_json(image);
    conn_.request(msg, "ack");
  }

  // The current image view goes out with every request, so an agent cannot
  // tell from message shape whether its image was replaced.
  TokenSeq answer(int round, const TokenSeq& question, const FeatureVector& image) override {
    json msg = detail::session_message("answer_request", session_, round);
    msg["question"] = tokens_to_json(question);
    msg["image"] = vector_to_json(image);
    return reply_tokens(conn_.request(msg, "answer"), "tokens");
  }

  void end_game(int round) override { detail::end_session(conn_, session_, round); }

 private:
  AgentConnection& conn_;
  std::string session_;
};

struct ExternalAgentSpec {
  std::vector<std::string> command;
  Timeouts timeouts;
};

// One agent process per lane. A lane whose process broke is restarted (and
// handshaken again) before its next session.
class ExternalLanes {
 public:
  ExternalLanes(ExternalAgentSpec spec, Role role, std::size_t feature_dim, std::string vocab_digest, int rounds)
      : spec_(std::move(spec)), role_(role), dim_(feature_dim), digest_(std::move(vocab_digest)), rounds_(rounds) {}

  void open(int lanes) {
    lanes_.clear();
    for (int i = 0; i < lanes; ++i) lanes_.push_back(start());
  }

  AgentConnection& checkout(int lane) {
    auto& slot = lanes_.at(static_cast<std::size_t>(lane));
    if (!slot || slot->broken()) {
      slot.reset();
      try {
        slot = start();
      } catch (const HandshakeError& e) {
        throw AgentError(std::string("restarting agent: ") + e.what());
      }
    }
    return *slot;
  }

  std::size_t feature_dim() const noexcept { return dim_; }

  const Capabilities& capabilities(int lane) const { return lanes_.at(static_cast<std::size_t>(lane))->capabilities(); }

 private:
  std::unique_ptr<AgentConnection> start() {
    auto conn = std::make_unique<AgentConnection>(spec_.command, spec_.timeouts);
    conn->handshake(role_, dim_, digest_, rounds_);
    return conn;
  }

  ExternalAgentSpec spec_;
  Role role_;
  std::size_t dim_;
  std::string digest_;
  int rounds_;
  std::vector<std::unique_ptr<AgentConnection>> lanes_;
};

class ExternalQuestionerBackend final : public QuestionerBackend {
 public:
  ExternalQuestionerBackend(ExternalAgentSpec spec, std::size_t feature_dim, std::string vocab_digest, int rounds)
      : lanes_(std::move(spec), Role::Questioner, feature_dim, std::move(vocab_digest), rounds) {}
  void open(int lanes) override { lanes_.open(lanes); }
  std::unique_ptr<Questioner> session(int lane, const GameInstance&, std::uint64_t) override {
    return std::make_unique<ExternalQuestioner>(lanes_.checkout(lane), lanes_.feature_dim());
  }

 private:
  ExternalLanes lanes_;
};

class ExternalAnswererBackend final : public AnswererBackend {
 public:
  ExternalAnswererBackend(ExternalAgentSpec spec, std::size_t feature_dim, std::string vocab_digest, int rounds)
      : lanes_(std::move(spec), Role::Answerer, feature_dim, std::move(vocab_digest), rounds) {}
  void open(int lanes) override { lanes_.open(lanes); }
  std::unique_ptr<Answerer> session(int lane, const GameInstance&) override {
    return std::make_unique<ExternalAnswerer>(lanes_.checkout(lane));
  }

 private:
  ExternalLanes lanes_;
};

}  // namespace vdprobe
