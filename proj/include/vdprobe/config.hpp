#pragma once

// Experiment configuration files, scripted-override files, and the top-level
// run_experiment entry point. Schemas are documented in docs/config.md.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "vdprobe/engine.hpp"
#include "vdprobe/protocol.hpp"
#include "vdprobe/synthetic.hpp"
#include "vdprobe/types.hpp"

namespace vdprobe {

// Any problem with a configuration or override file.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SyntheticWorldConfig {
  int num_candidates = 64;
  int num_attrs = 12;
  int caption_reveal = 0;
  std::optional<std::vector<std::string>> vocab;
  std::vector<std::string> stopwords;
};

// Games loaded from a JSON file: {"vocab": [...], "stopwords": [...], "games": [...]}.
struct GamesFileConfig {
  std::string path;
};

struct AgentConfig {
  std::string builtin;  // empty when external
  ExternalAgentSpec external;

  bool is_external() const { return builtin.empty(); }
};

struct ExperimentConfig {
  std::variant<SyntheticWorldConfig, GamesFileConfig> world;
  AgentConfig q_agent;
  AgentConfig a_agent;
  std::vector<Condition> conditions;
  int rounds = 10;
  std::uint64_t master_seed = 0;
  int num_games = 0;
};

// Overrides -----------------------------------------------------------------------

namespace detail {

inline TokenSeq token_payload(const json& j) {
  if (j.is_string()) return tokenize(j.get<std::string>());
  return tokens_from_json(j);
}

}  // namespace detail

// {"<round>": {"caption"|"question"|"answer": "text" or [tokens],
//              "answer": {"negate": true}, "image": [numbers]}, ...}
inline ScriptedOverrides parse_round_overrides(const json& j) {
  if (!j.is_object()) throw ConfigError("overrides must be an object keyed by round number");
  ScriptedOverrides out;
  for (const auto& [key, value] : j.items()) {
    int round = 0;
    try {
      std::size_t used = 0;
      round = std::stoi(key, &used);
      if (used != key.size()) throw std::invalid_argument(key);
    } catch (const std::exception&) {
      throw ConfigError("override key '" + key + "' is not a round number");
    }
    try {
      check_keys(value, {"caption", "question", "answer", "image"}, "override for round " + key);
      RoundOverride ov;
      if (value.contains("caption")) ov.caption = detail::token_payload(value["caption"]);
      if (value.contains("question")) ov.question = detail::token_payload(value["question"]);
      if (value.contains("answer")) {
        const json& a = value["answer"];
        if (a.is_object()) {
          check_keys(a, {"negate"}, "answer override");
          ov.negate_answer = require(a, "negate", "answer override").get<bool>();
          if (!ov.negate_answer) throw std::invalid_argument("answer override {\"negate\": false} has no effect");
        } else {
          ov.answer = detail::token_payload(a);
        }
      }
      if (value.contains("image")) ov.image = vector_from_json(value["image"]);
      if (ov.empty()) throw std::invalid_argument("override for round " + key + " replaces nothing");
      out.emplace(round, std::move(ov));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  }
  return out;
}

inline json to_json(const ScriptedOverrides& overrides) {
  json out = json::object();
  for (const auto& [round, ov] : overrides) {
    json o = json::object();
    if (ov.caption) o["caption"] = tokens_to_json(*ov.caption);
    if (ov.question) o["question"] = tokens_to_json(*ov.question);
    if (ov.answer) o["answer"] = tokens_to_json(*ov.answer);
    if (ov.negate_answer) o["answer"] = {{"negate", true}};
    if (ov.image) o["image"] = vector_to_json(*ov.image);
    out[std::to_string(round)] = std::move(o);
  }
  return out;
}

// Manual-run file: {"game": "<id>" or index, "base": <intervention>, "overrides": {...}}.
struct ManualScript {
  std::variant<std::monostate, std::string, int> game;
  InterventionSpec base;
  ScriptedOverrides overrides;
};

inline ManualScript parse_manual_script(const json& j) {
  try {
    check_keys(j, {"game", "base", "overrides"}, "overrides file");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  ManualScript s;
  if (j.contains("game")) {
    if (j["game"].is_string()) {
      s.game = j["game"].get<std::string>();
    } else if (j["game"].is_number_integer()) {
      s.game = j["game"].get<int>();
    } else {
      throw ConfigError("'game' must be a game id or an index");
    }
  }
  if (j.contains("base")) {
    try {
      s.base = spec_from_json(j["base"]);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("base: ") + e.what());
    }
  }
  s.overrides = parse_round_overrides(j.value("overrides", json::object()));
  return s;
}

// Experiment config -----------------------------------------------------------------

namespace detail {

inline std::set<int> parse_rounds(const json& j, int num_rounds, Target target) {
  if (j.is_string()) {
    if (j.get<std::string>() != "all") throw ConfigError("rounds must be \"all\", a list, or {\"from\",\"to\"}");
    return target == Target::Caption ? std::set<int>{1} : round_range(1, num_rounds);
  }
  if (j.is_array()) {
    std::set<int> out;
    for (const auto& r : j) out.insert(r.get<int>());
    return out;
  }
  check_keys(j, {"from", "to"}, "rounds");
  return round_range(require(j, "from", "rounds").get<int>(), j.value("to", num_rounds));
}

inline Condition parse_condition(const json& j, int num_rounds) {
  check_keys(j, {"name", "target", "p", "rounds", "seed_offset", "content_only", "overrides"}, "condition");
  Condition c;
  c.name = require(j, "name", "condition").get<std::string>();
  c.spec.target = parse_target(require(j, "target", "condition").get<std::string>());
  if (uses_probability(c.spec.target)) {
    c.spec.p = require(j, "p", "condition '" + c.name + "'").get<double>();
  } else if (j.contains("p")) {
    c.spec.p = j["p"].get<double>();
  }
  if (c.spec.target != Target::None && c.spec.target != Target::Manual) {
    c.spec.rounds = parse_rounds(j.value("rounds", json("all")), num_rounds, c.spec.target);
  }
  c.spec.seed_offset = j.value("seed_offset", std::int64_t{0});
  c.spec.content_only = j.value("content_only", false);
  if (c.spec.target == Target::Manual) {
    c.overrides = parse_round_overrides(require(j, "overrides", "condition '" + c.name + "'"));
  } else if (j.contains("overrides")) {
    throw ConfigError("condition '" + c.name + "': overrides need target Manual");
  }
  return c;
}

inline AgentConfig parse_agent(const json& j, const char* where, bool questioner) {
  AgentConfig a;
  if (j.is_string()) {
    a.builtin = j.get<std::string>();
    if (questioner) {
      parse_questioner_profile(a.builtin);
    } else if (a.builtin != "oracle") {
      throw ConfigError(std::string(where) + ": unknown answerer profile '" + a.builtin + "'");
    }
    return a;
  }
  check_keys(j, {"command", "handshake_timeout_ms", "message_timeout_ms"}, where);
  const json& cmd = require(j, "command", where);
  if (cmd.is_string()) {
    for (const auto& t : tokenize(cmd.get<std::string>())) a.external.command.push_back(t.text());
  } else {
    a.external.command = cmd.get<std::vector<std::string>>();
  }
  if (a.external.command.empty()) throw ConfigError(std::string(where) + ": empty command");
  a.external.timeouts.handshake = std::chrono::milliseconds(j.value("handshake_timeout_ms", 10'000));
  a.external.timeouts.message = std::chrono::milliseconds(j.value("message_timeout_ms", 30'000));
  return a;
}

inline json agent_to_json(const AgentConfig& a) {
  if (!a.is_external()) return a.builtin;
  return {{"command", a.external.command},
          {"handshake_timeout_ms", a.external.timeouts.handshake.count()},
          {"message_timeout_ms", a.external.timeouts.message.count()}};
}

}  // namespace detail

// Negation conditions keyed by their first scheduled round must not collide.
inline void check_negation_starts(const std::vector<Condition>& conditions) {
  std::set<int> starts;
  for (const auto& c : conditions) {
    if (c.spec.target != Target::Negation || c.spec.rounds.empty()) continue;
    if (!starts.insert(*c.spec.rounds.begin()).second) {
      throw ConfigError("two Negation conditions start at round " + std::to_string(*c.spec.rounds.begin()));
    }
  }
}

inline ExperimentConfig parse_config(const json& j) {
  try {
    check_keys(j, {"world", "q_agent", "a_agent", "conditions", "rounds", "master_seed", "num_games"}, "config");
    ExperimentConfig cfg;
    cfg.rounds = j.value("rounds", 10);
    if (cfg.rounds < 1) throw ConfigError("rounds must be >= 1");
    const json& seed = require(j, "master_seed", "config");
    if (!seed.is_number_integer()) throw ConfigError("master_seed must be an integer");
    cfg.master_seed = seed.is_number_unsigned() ? seed.get<std::uint64_t>()
                                                : static_cast<std::uint64_t>(seed.get<std::int64_t>());
    cfg.num_games = require(j, "num_games", "config").get<int>();
    if (cfg.num_games < 1) throw ConfigError("num_games must be >= 1");

    const json& world = require(j, "world", "config");
    const std::string type = require(world, "type", "world").get<std::string>();
    if (type == "synthetic") {
      check_keys(world, {"type", "num_candidates", "num_attrs", "caption_reveal", "vocab", "stopwords"}, "world");
      SyntheticWorldConfig w;
      w.num_candidates = world.value("num_candidates", w.num_candidates);
      w.num_attrs = world.value("num_attrs", w.num_attrs);
      w.caption_reveal = world.value("caption_reveal", w.caption_reveal);
      if (world.contains("vocab")) w.vocab = world["vocab"].get<std::vector<std::string>>();
      w.stopwords = world.value("stopwords", std::vector<std::string>{});
      if (!w.vocab && !w.stopwords.empty()) throw ConfigError("world: stopwords need an explicit vocab");
      cfg.world = w;
    } else if (type == "games") {
      check_keys(world, {"type", "path"}, "world");
      cfg.world = GamesFileConfig{require(world, "path", "world").get<std::string>()};
    } else {
      throw ConfigError("world type must be \"synthetic\" or \"games\"");
    }

    cfg.q_agent = detail::parse_agent(require(j, "q_agent", "config"), "q_agent", true);
    cfg.a_agent = detail::parse_agent(require(j, "a_agent", "config"), "a_agent", false);

    const json& conds = require(j, "conditions", "config");
    if (!conds.is_array()) throw ConfigError("conditions must be a list");
    for (const auto& c : conds) cfg.conditions.push_back(detail::parse_condition(c, cfg.rounds));
    cfg.conditions = normalize_conditions(std::move(cfg.conditions), cfg.rounds);
    check_negation_starts(cfg.conditions);
    return cfg;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

inline json to_json(const ExperimentConfig& cfg) {
  json world;
  if (const auto* w = std::get_if<SyntheticWorldConfig>(&cfg.world)) {
    world = {{"type", "synthetic"},
             {"num_candidates", w->num_candidates},
             {"num_attrs", w->num_attrs},
             {"caption_reveal", w->caption_reveal}};
    if (w->vocab) {
      world["vocab"] = *w->vocab;
      world["stopwords"] = w->stopwords;
    }
  } else {
    world = {{"type", "games"}, {"path", std::get<GamesFileConfig>(cfg.world).path}};
  }
  json conds = json::array();
  for (const auto& c : cfg.conditions) {
    json o = {{"name", c.name}, {"target", to_string(c.spec.target)}};
    if (uses_probability(c.spec.target)) o["p"] = c.spec.p;
    if (c.spec.target != Target::None && c.spec.target != Target::Manual) {
      o["rounds"] = std::vector<int>(c.spec.rounds.begin(), c.spec.rounds.end());
    }
    if (c.spec.seed_offset != 0) o["seed_offset"] = c.spec.seed_offset;
    if (c.spec.content_only) o["content_only"] = true;
    if (c.spec.target == Target::Manual) o["overrides"] = to_json(c.overrides);
    conds.push_back(std::move(o));
  }
  return {{"world", std::move(world)},
          {"q_agent", detail::agent_to_json(cfg.q_agent)},
          {"a_agent", detail::agent_to_json(cfg.a_agent)},
          {"conditions", std::move(conds)},
          {"rounds", cfg.rounds},
          {"master_seed", cfg.master_seed},
          {"num_games", cfg.num_games}};
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError(path.string() + " is not valid JSON");
  return j;
}

// Relative paths inside the config (games files) resolve against its directory.
inline ExperimentConfig load_config(const std::filesystem::path& path) {
  ExperimentConfig cfg = parse_config(read_json_file(path));
  if (auto* g = std::get_if<GamesFileConfig>(&cfg.world)) {
    std::filesystem::path p(g->path);
    if (p.is_relative()) g->path = (path.parent_path() / p).lexically_normal().string();
  }
  return cfg;
}

// World resolution and the experiment entry point -------------------------------------

struct ResolvedWorld {
  std::vector<GameInstance> games;
  Vocabulary vocab;
};

inline ResolvedWorld resolve_world(const ExperimentConfig& cfg) {
  try {
    if (const auto* w = std::get_if<SyntheticWorldConfig>(&cfg.world)) {
      SyntheticWorld sw = gen_world(w->num_candidates, w->num_attrs, w->caption_reveal, cfg.master_seed, cfg.num_games);
      if (!w->vocab) return {std::move(sw.games), default_vocabulary()};
      std::vector<Token> tokens, stop;
      for (const auto& s : *w->vocab) tokens.emplace_back(s);
      for (const auto& s : w->stopwords) stop.emplace_back(s);
      return {std::move(sw.games), Vocabulary(std::move(tokens), std::move(stop))};
    }
    const json file = read_json_file(std::get<GamesFileConfig>(cfg.world).path);
    check_keys(file, {"vocab", "stopwords", "games"}, "games file");
    std::vector<Token> tokens, stop;
    for (const auto& s : require(file, "vocab", "games file")) tokens.emplace_back(s.get<std::string>());
    for (const auto& s : file.value("stopwords", json::array())) stop.emplace_back(s.get<std::string>());
    std::vector<GameInstance> games;
    for (const auto& g : require(file, "games", "games file")) {
      if (static_cast<int>(games.size()) == cfg.num_games) break;
      games.push_back(game_from_json(g));
    }
    if (static_cast<int>(games.size()) < cfg.num_games) {
      throw ConfigError("games file holds " + std::to_string(games.size()) + " games, num_games is " +
                        std::to_string(cfg.num_games));
    }
    return {std::move(games), Vocabulary(std::move(tokens), std::move(stop))};
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("world: ") + e.what());
  }
}

struct Backends {
  std::unique_ptr<QuestionerBackend> questioner;
  std::unique_ptr<AnswererBackend> answerer;
};

inline Backends make_backends(const ExperimentConfig& cfg, const ResolvedWorld& world) {
  const std::size_t dim = world.games.front().image.dim();
  Backends b;
  if (cfg.q_agent.is_external()) {
    b.questioner = std::make_unique<ExternalQuestionerBackend>(cfg.q_agent.external, dim, world.vocab.digest(), cfg.rounds);
  } else {
    b.questioner = std::make_unique<BuiltinQuestionerBackend>(parse_questioner_profile(cfg.q_agent.builtin));
  }
  if (cfg.a_agent.is_external()) {
    b.answerer = std::make_unique<ExternalAnswererBackend>(cfg.a_agent.external, dim, world.vocab.digest(), cfg.rounds);
  } else {
    b.answerer = std::make_unique<OracleAnswererBackend>();
  }
  return b;
}

// Runs every condition (plus the implicit None baseline) over every game.
// Throws ConfigError before any game runs on a bad config, HandshakeError
// when an external agent cannot be brought up.
inline ReportDataset run_experiment(const ExperimentConfig& cfg, int jobs = 1) {
  ResolvedWorld world = resolve_world(cfg);
  std::vector<Condition> conditions;
  try {
    conditions = normalize_conditions(cfg.conditions, cfg.rounds);
    check_negation_starts(conditions);
    for (const auto& c : conditions) {
      if (c.spec.target == Target::Manual) {
        for (const auto& g : world.games) validate_overrides(c.overrides, g, cfg.rounds);
      }
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  Backends backends = make_backends(cfg, world);
  ReportDataset ds = run_conditions(world.games, world.vocab, std::move(conditions), *backends.questioner,
                                    *backends.answerer, {cfg.rounds, cfg.master_seed, jobs});
  ds.metadata["config"] = to_json(cfg);
  return ds;
}

}  // namespace vdprobe
