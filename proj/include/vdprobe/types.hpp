#pragma once

// Domain types shared by every vdprobe module, plus their JSON encodings.
//
// All types are plain values. Once a value has passed validation it is never
// mutated by the harness, so it can be shared freely between worker threads.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace vdprobe {

using json = nlohmann::json;

// Token ----------------------------------------------------------------------

inline bool is_space_byte(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' ||
         c == '\f';
}

// A single word of a caption, question or answer. Non-empty, no whitespace.
class Token {
 public:
  explicit Token(std::string text) : text_(std::move(text)) {
    if (text_.empty()) throw std::invalid_argument("token must be non-empty");
    if (std::any_of(text_.begin(), text_.end(), is_space_byte)) {
      throw std::invalid_argument("token contains whitespace: '" + text_ + "'");
    }
  }

  const std::string& text() const noexcept { return text_; }

  friend bool operator==(const Token&, const Token&) = default;
  friend auto operator<=>(const Token&, const Token&) = default;

 private:
  std::string text_;
};

using TokenSeq = std::vector<Token>;

// Splits on ASCII whitespace.
inline TokenSeq tokenize(std::string_view text) {
  TokenSeq out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space_byte(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space_byte(text[j])) ++j;
    if (j > i) out.emplace_back(std::string(text.substr(i, j - i)));
    i = j;
  }
  return out;
}

inline std::string join(std::span<const Token> tokens, std::string_view sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += sep;
    out += tokens[i].text();
  }
  return out;
}

// FeatureVector --------------------------------------------------------------

class FeatureVector {
 public:
  explicit FeatureVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw std::invalid_argument("feature vector must have dim >= 1");
    for (double v : values_) {
      if (!std::isfinite(v)) throw std::invalid_argument("feature vector has a non-finite value");
    }
  }

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;

 private:
  std::vector<double> values_;
};

// Games ----------------------------------------------------------------------

struct Candidate {
  std::string id;
  FeatureVector features;

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct GameInstance {
  std::string game_id;
  TokenSeq caption;
  FeatureVector image;
  std::vector<Candidate> pool;  // order is significant
  std::string truth_id;

  friend bool operator==(const GameInstance&, const GameInstance&) = default;

  // Throws std::invalid_argument when an invariant is broken.
  void validate() const {
    if (game_id.empty()) throw std::invalid_argument("game_id must be non-empty");
    if (pool.size() < 2) throw std::invalid_argument("game " + game_id + ": pool needs >= 2 candidates");
    const std::size_t dim = pool.front().features.dim();
    int truth_count = 0;
    std::set<std::string_view> ids;
    for (const auto& c : pool) {
      if (c.features.dim() != dim) {
        throw std::invalid_argument("game " + game_id + ": pool vectors differ in dimension");
      }
      if (!ids.insert(c.id).second) {
        throw std::invalid_argument("game " + game_id + ": duplicate candidate id " + c.id);
      }
      if (c.id == truth_id) ++truth_count;
    }
    if (truth_count != 1) {
      throw std::invalid_argument("game " + game_id + ": truth_id " + truth_id + " not in pool");
    }
    if (image.dim() != dim) {
      throw std::invalid_argument("game " + game_id + ": image dimension differs from pool");
    }
  }

  const Candidate& truth() const {
    for (const auto& c : pool) {
      if (c.id == truth_id) return c;
    }
    throw std::invalid_argument("game " + game_id + ": truth_id not in pool");
  }
};

// Interventions ----------------------------------------------------------------

enum class Target { None, Image, Caption, Question, Answer, Negation, Manual };

inline std::string_view to_string(Target t) {
  switch (t) {
    case Target::None: return "None";
    case Target::Image: return "Image";
    case Target::Caption: return "Caption";
    case Target::Question: return "Question";
    case Target::Answer: return "Answer";
    case Target::Negation: return "Negation";
    case Target::Manual: return "Manual";
  }
  return "None";
}

inline Target parse_target(std::string_view s) {
  for (Target t : {Target::None, Target::Image, Target::Caption, Target::Question,
                   Target::Answer, Target::Negation, Target::Manual}) {
    if (to_string(t) == s) return t;
  }
  throw std::invalid_argument("unknown intervention target '" + std::string(s) + "'");
}

// True for targets whose operator is parameterised by a probability.
inline bool uses_probability(Target t) {
  return t == Target::Image || t == Target::Caption || t == Target::Question ||
         t == Target::Answer;
}

inline std::set<int> round_range(int first, int last) {
  std::set<int> out;
  for (int r = first; r <= last; ++r) out.insert(r);
  return out;
}

struct InterventionSpec {
  Target target = Target::None;
  double p = 0.0;
  std::set<int> rounds;
  std::int64_t seed_offset = 0;
  // Caption only: never replace stopwords, draw replacements from content words.
  bool content_only = false;

  friend bool operator==(const InterventionSpec&, const InterventionSpec&) = default;

  bool active_at(int round) const { return target != Target::None && rounds.contains(round); }

  void validate(int num_rounds) const {
    for (int r : rounds) {
      if (r < 1 || r > num_rounds) {
        throw std::invalid_argument("intervention round " + std::to_string(r) +
                                    " outside 1.." + std::to_string(num_rounds));
      }
    }
    if (target == Target::Caption && std::any_of(rounds.begin(), rounds.end(), [](int r) { return r != 1; })) {
      throw std::invalid_argument("caption interventions may only be scheduled at round 1");
    }
    if (uses_probability(target) && !(p >= 0.0 && p <= 1.0)) {
      throw std::invalid_argument("intervention probability p must be in [0,1]");
    }
    if (content_only && target != Target::Caption) {
      throw std::invalid_argument("content_only applies to Caption interventions only");
    }
  }
};

// Transcripts ------------------------------------------------------------------

struct RoundRecord {
  int round = 0;
  TokenSeq question;
  TokenSeq question_delivered;
  TokenSeq answer;
  TokenSeq answer_delivered;
  FeatureVector prediction{std::vector<double>{0.0}};
  double percentile = 0.0;
  // Stages where an intervention or override was active this round.
  std::vector<std::string> applied;

  friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

struct Transcript {
  std::string game_id;
  std::string condition_name;
  TokenSeq caption;
  TokenSeq caption_delivered;
  std::vector<RoundRecord> rounds;
  bool failed = false;
  std::string diagnostic;

  friend bool operator==(const Transcript&, const Transcript&) = default;
};

// JSON ---------------------------------------------------------------------------

inline json tokens_to_json(std::span<const Token> tokens) {
  json arr = json::array();
  for (const auto& t : tokens) arr.push_back(t.text());
  return arr;
}

inline TokenSeq tokens_from_json(const json& j) {
  if (!j.is_array()) throw std::invalid_argument("expected an array of tokens");
  TokenSeq out;
  out.reserve(j.size());
  for (const auto& e : j) {
    if (!e.is_string()) throw std::invalid_argument("token must be a string");
    out.emplace_back(e.get<std::string>());
  }
  return out;
}

inline json vector_to_json(const FeatureVector& v) {
  return json(std::vector<double>(v.values().begin(), v.values().end()));
}

inline FeatureVector vector_from_json(const json& j) {
  if (!j.is_array()) throw std::invalid_argument("expected an array of numbers");
  std::vector<double> values;
  values.reserve(j.size());
  for (const auto& e : j) {
    if (!e.is_number()) throw std::invalid_argument("feature value must be a number");
    values.push_back(e.get<double>());
  }
  return FeatureVector(std::move(values));
}

// Rejects keys outside `allowed`; `where` names the object in the message.
inline void check_keys(const json& j, std::initializer_list<std::string_view> allowed,
                       std::string_view where) {
  if (!j.is_object()) throw std::invalid_argument(std::string(where) + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw std::invalid_argument("unknown key '" + key + "' in " + std::string(where));
    }
  }
}

inline const json& require(const json& j, const char* key, std::string_view where) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw std::invalid_argument("missing key '" + std::string(key) + "' in " + std::string(where));
  }
  return *it;
}

inline json to_json(const GameInstance& g) {
  json pool = json::array();
  for (const auto& c : g.pool) pool.push_back({{"id", c.id}, {"features", vector_to_json(c.features)}});
  return {{"game_id", g.game_id},
          {"caption", tokens_to_json(g.caption)},
          {"image", vector_to_json(g.image)},
          {"pool", std::move(pool)},
          {"truth_id", g.truth_id}};
}

inline GameInstance game_from_json(const json& j) {
  check_keys(j, {"game_id", "caption", "image", "pool", "truth_id"}, "game");
  std::vector<Candidate> pool;
  for (const auto& c : require(j, "pool", "game")) {
    check_keys(c, {"id", "features"}, "candidate");
    pool.push_back({require(c, "id", "candidate").get<std::string>(),
                    vector_from_json(require(c, "features", "candidate"))});
  }
  GameInstance g{require(j, "game_id", "game").get<std::string>(),
                 tokens_from_json(require(j, "caption", "game")),
                 vector_from_json(require(j, "image", "game")), std::move(pool),
                 require(j, "truth_id", "game").get<std::string>()};
  g.validate();
  return g;
}

inline json to_json(const InterventionSpec& s) {
  return {{"target", to_string(s.target)},
          {"p", s.p},
          {"rounds", std::vector<int>(s.rounds.begin(), s.rounds.end())},
          {"seed_offset", s.seed_offset},
          {"content_only", s.content_only}};
}

inline InterventionSpec spec_from_json(const json& j) {
  check_keys(j, {"target", "p", "rounds", "seed_offset", "content_only"}, "intervention");
  InterventionSpec s;
  s.target = parse_target(require(j, "target", "intervention").get<std::string>());
  if (j.contains("p")) s.p = j["p"].get<double>();
  if (j.contains("rounds")) {
    for (const auto& r : j["rounds"]) s.rounds.insert(r.get<int>());
  }
  if (j.contains("seed_offset")) s.seed_offset = j["seed_offset"].get<std::int64_t>();
  if (j.contains("content_only")) s.content_only = j["content_only"].get<bool>();
  return s;
}

inline json to_json(const RoundRecord& r) {
  return {{"round", r.round},
          {"question", tokens_to_json(r.question)},
          {"question_delivered", tokens_to_json(r.question_delivered)},
          {"answer", tokens_to_json(r.answer)},
          {"answer_delivered", tokens_to_json(r.answer_delivered)},
          {"prediction", vector_to_json(r.prediction)},
          {"percentile", r.percentile},
          {"applied", r.applied}};
}

inline RoundRecord round_from_json(const json& j) {
  check_keys(j, {"round", "question", "question_delivered", "answer", "answer_delivered",
                 "prediction", "percentile", "applied"},
             "round record");
  RoundRecord r;
  r.round = require(j, "round", "round record").get<int>();
  r.question = tokens_from_json(require(j, "question", "round record"));
  r.question_delivered = tokens_from_json(require(j, "question_delivered", "round record"));
  r.answer = tokens_from_json(require(j, "answer", "round record"));
  r.answer_delivered = tokens_from_json(require(j, "answer_delivered", "round record"));
  r.prediction = vector_from_json(require(j, "prediction", "round record"));
  r.percentile = require(j, "percentile", "round record").get<double>();
  r.applied = j.value("applied", std::vector<std::string>{});
  return r;
}

inline json to_json(const Transcript& t) {
  json rounds = json::array();
  for (const auto& r : t.rounds) rounds.push_back(to_json(r));
  json out = {{"game_id", t.game_id},
              {"condition", t.condition_name},
              {"caption", tokens_to_json(t.caption)},
              {"caption_delivered", tokens_to_json(t.caption_delivered)},
              {"rounds", std::move(rounds)},
              {"failed", t.failed}};
  if (!t.diagnostic.empty()) out["diagnostic"] = t.diagnostic;
  return out;
}

inline Transcript transcript_from_json(const json& j) {
  check_keys(j, {"game_id", "condition", "caption", "caption_delivered", "rounds", "failed",
                 "diagnostic"},
             "transcript");
  Transcript t;
  t.game_id = require(j, "game_id", "transcript").get<std::string>();
  t.condition_name = require(j, "condition", "transcript").get<std::string>();
  t.caption = tokens_from_json(require(j, "caption", "transcript"));
  t.caption_delivered = tokens_from_json(require(j, "caption_delivered", "transcript"));
  for (const auto& r : require(j, "rounds", "transcript")) t.rounds.push_back(round_from_json(r));
  t.failed = j.value("failed", false);
  t.diagnostic = j.value("diagnostic", std::string{});
  return t;
}

}  // namespace vdprobe
