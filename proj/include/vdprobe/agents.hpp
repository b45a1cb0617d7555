#pragma once

// Black-box agent interfaces. The engine only ever talks to agents through
// these; builtin profiles and external processes implement the same calls.

#include <memory>
#include <stdexcept>
#include <string>

#include "vdprobe/types.hpp"

namespace vdprobe {

// A misbehaving agent (crash, timeout, malformed reply). Fails one game.
class AgentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An agent that could not be brought up at all. Aborts the experiment.
class HandshakeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Q-bot. Sees only the caption and the answers it is delivered.
class Questioner {
 public:
  virtual ~Questioner() = default;
  virtual void begin_game(const std::string& session, const TokenSeq& caption) = 0;
  virtual TokenSeq ask(int round) = 0;
  virtual FeatureVector predict(int round, const TokenSeq& answer) = 0;
  virtual void end_game(int round) = 0;
};

// A-bot. Additionally sees the image; `image` in answer() is its current view.
class Answerer {
 public:
  virtual ~Answerer() = default;
  virtual void begin_game(const std::string& session, const TokenSeq& caption,
                          const FeatureVector& image) = 0;
  virtual TokenSeq answer(int round, const TokenSeq& question, const FeatureVector& image) = 0;
  virtual void end_game(int round) = 0;
};

// Hands out per-game agent sessions. Work is split into lanes; a lane is only
// ever used by one thread at a time, and one session per lane is live at once.
class QuestionerBackend {
 public:
  virtual ~QuestionerBackend() = default;
  // Brings up `lanes` workers. Throws HandshakeError.
  virtual void open(int lanes) = 0;
  virtual std::unique_ptr<Questioner> session(int lane, const GameInstance& game,
                                              std::uint64_t seed) = 0;
};

class AnswererBackend {
 public:
  virtual ~AnswererBackend() = default;
  virtual void open(int lanes) = 0;
  virtual std::unique_ptr<Answerer> session(int lane, const GameInstance& game) = 0;
};

}  // namespace vdprobe
