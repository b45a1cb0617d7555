#pragma once

// The guessing-game loop and the experiment runner.
//
// Per round r = 1..R:
//   1. (r == 1) caption -> both agents, through the caption stage; the
//      answerer also gets its image view
//   2. questioner asks
//   3. question -> question stage -> answerer
//   4. answerer answers, looking at its current image view
//   5. answer -> answer stage -> questioner
//   6. questioner predicts a feature vector
//   7. percentile rank of the truth under that prediction is recorded
//
// An agent failure marks the transcript failed. Failed games are excluded
// from every aggregate and counted separately.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "vdprobe/agents.hpp"
#include "vdprobe/interventions.hpp"
#include "vdprobe/metrics.hpp"
#include "vdprobe/rng.hpp"
#include "vdprobe/types.hpp"

namespace vdprobe {

// One random stream per intervention stage, all keyed by (game, condition).
struct GameStreams {
  RandomStream caption;
  RandomStream question;
  RandomStream answer;
  RandomStream image;

  static GameStreams derive(std::uint64_t master_seed, const std::string& game_id,
                            const std::string& condition_name, std::int64_t seed_offset = 0) {
    const std::uint64_t seed = master_seed + static_cast<std::uint64_t>(seed_offset);
    return {derive_rng(seed, game_id, condition_name, "perturb/caption"),
            derive_rng(seed, game_id, condition_name, "perturb/question"),
            derive_rng(seed, game_id, condition_name, "perturb/answer"),
            derive_rng(seed, game_id, condition_name, "perturb/image")};
  }
};

// Seed for a builtin agent's own randomness.
inline std::uint64_t agent_seed(std::uint64_t master_seed, const std::string& game_id,
                                const std::string& condition_name) {
  return derive_seed(master_seed, game_id, condition_name, "qbot");
}

// Hand-authored replacements for one round. Applied after any random
// intervention. An image override replaces the answerer's view from that
// round on.
struct RoundOverride {
  std::optional<TokenSeq> caption;  // round 1 only
  std::optional<TokenSeq> question;
  std::optional<TokenSeq> answer;
  bool negate_answer = false;
  std::optional<FeatureVector> image;

  bool empty() const { return !caption && !question && !answer && !negate_answer && !image; }

  friend bool operator==(const RoundOverride&, const RoundOverride&) = default;
};

using ScriptedOverrides = std::map<int, RoundOverride>;

// Rejects overrides that could not be applied to `game` over `rounds` rounds.
inline void validate_overrides(const ScriptedOverrides& overrides, const GameInstance& game, int rounds) {
  for (const auto& [round, ov] : overrides) {
    const std::string where = "override for round " + std::to_string(round);
    if (round < 1 || round > rounds) throw std::invalid_argument(where + ": round outside 1.." + std::to_string(rounds));
    if (ov.caption && round != 1) throw std::invalid_argument(where + ": caption can only be replaced at round 1");
    if (ov.answer && ov.negate_answer) throw std::invalid_argument(where + ": both an answer and negate given");
    if (ov.image && ov.image->dim() != game.image.dim()) {
      throw std::invalid_argument(where + ": image has dimension " + std::to_string(ov.image->dim()) +
                                  ", game uses " + std::to_string(game.image.dim()));
    }
  }
}

namespace detail {

inline TokenSeq pass_tokens(Stage stage, const TokenSeq& tokens, const InterventionSpec& spec, int round,
                            const Vocabulary& vocab, RandomStream& rng, HeldImage& held,
                            std::vector<std::string>& applied) {
  if (acts_on(spec, stage, round)) applied.emplace_back(to_string(stage));
  return std::get<TokenSeq>(apply_intervention(stage, tokens, spec, round, vocab, rng, held));
}

inline void teardown(Questioner& q, Answerer& a, int round) noexcept {
  try {
    q.end_game(round);
  } catch (...) {
  }
  try {
    a.end_game(round);
  } catch (...) {
  }
}

inline Transcript play(const GameInstance& game, Questioner& q, Answerer& a, const InterventionSpec& spec,
                       int rounds, const Vocabulary& vocab, GameStreams& streams, const std::string& condition_name,
                       const ScriptedOverrides* overrides) {
  Transcript t;
  t.game_id = game.game_id;
  t.condition_name = condition_name;
  t.caption = game.caption;
  const std::string session = game.game_id + "/" + condition_name;
  auto override_at = [&](int r) -> const RoundOverride* {
    if (!overrides) return nullptr;
    auto it = overrides->find(r);
    return it == overrides->end() ? nullptr : &it->second;
  };

  HeldImage held;
  std::optional<FeatureVector> scripted_image;
  int round = 1;
  try {
    std::vector<std::string> first_round_applied;
    t.caption_delivered = pass_tokens(Stage::CaptionIn, game.caption, spec, 1, vocab, streams.caption, held,
                                      first_round_applied);
    if (const auto* ov = override_at(1); ov && ov->caption) {
      t.caption_delivered = *ov->caption;
      first_round_applied.emplace_back("manual:caption");
    }

    auto image_view = [&](int r, std::vector<std::string>& applied) {
      if (const auto* ov = override_at(r); ov && ov->image) {
        scripted_image = ov->image;
        applied.emplace_back("manual:image");
      }
      FeatureVector view = std::get<FeatureVector>(
          apply_intervention(Stage::ImageAtRound, game.image, spec, r, vocab, streams.image, held));
      if (held.view) applied.emplace_back("image");
      return scripted_image ? *scripted_image : view;
    };

    FeatureVector view = image_view(1, first_round_applied);
    q.begin_game(session, t.caption_delivered);
    a.begin_game(session, t.caption_delivered, view);

    for (round = 1; round <= rounds; ++round) {
      RoundRecord rec;
      rec.round = round;
      if (round == 1) {
        rec.applied = std::move(first_round_applied);
      } else {
        view = image_view(round, rec.applied);
      }
      const RoundOverride* ov = override_at(round);

      rec.question = q.ask(round);
      rec.question_delivered = pass_tokens(Stage::QuestionInTransit, rec.question, spec, round, vocab,
                                           streams.question, held, rec.applied);
      if (ov && ov->question) {
        rec.question_delivered = *ov->question;
        rec.applied.emplace_back("manual:question");
      }

      rec.answer = a.answer(round, rec.question_delivered, view);
      rec.answer_delivered = pass_tokens(Stage::AnswerInTransit, rec.answer, spec, round, vocab,
                                         streams.answer, held, rec.applied);
      if (ov && ov->answer) {
        rec.answer_delivered = *ov->answer;
        rec.applied.emplace_back("manual:answer");
      } else if (ov && ov->negate_answer) {
        rec.answer_delivered = negate_answer(rec.answer_delivered);
        rec.applied.emplace_back("manual:negate");
      }

      rec.prediction = q.predict(round, rec.answer_delivered);
      try {
        rec.percentile = percentile_rank(rec.prediction, game.pool, game.truth_id);
      } catch (const std::invalid_argument& e) {
        throw AgentError("round " + std::to_string(round) + ": unusable prediction: " + e.what());
      }
      t.rounds.push_back(std::move(rec));
    }
    q.end_game(rounds);
    a.end_game(rounds);
  } catch (const AgentError& e) {
    t.failed = true;
    t.diagnostic = e.what();
    teardown(q, a, std::min(round, rounds));
  }
  return t;
}

}  // namespace detail

// Plays one game under `spec`. Throws std::invalid_argument for an invalid
// game or spec; agent failures come back as a failed transcript.
inline Transcript run_game(const GameInstance& game, Questioner& q, Answerer& a, const InterventionSpec& spec,
                           int rounds, const Vocabulary& vocab, GameStreams streams,
                           const std::string& condition_name = "None") {
  if (rounds < 1) throw std::invalid_argument("rounds must be >= 1");
  game.validate();
  spec.validate(rounds);
  return detail::play(game, q, a, spec, rounds, vocab, streams, condition_name, nullptr);
}

// As run_game, with hand-authored replacements applied on top of `base`.
inline Transcript run_scripted(const GameInstance& game, Questioner& q, Answerer& a,
                               const ScriptedOverrides& overrides, int rounds, const Vocabulary& vocab,
                               GameStreams streams, const InterventionSpec& base = {},
                               const std::string& condition_name = "Manual") {
  if (rounds < 1) throw std::invalid_argument("rounds must be >= 1");
  game.validate();
  base.validate(rounds);
  validate_overrides(overrides, game, rounds);
  return detail::play(game, q, a, base, rounds, vocab, streams, condition_name, &overrides);
}

// Experiment runner ------------------------------------------------------------

struct Condition {
  std::string name;
  InterventionSpec spec;
  ScriptedOverrides overrides;  // Manual target only

  friend bool operator==(const Condition&, const Condition&) = default;
};

struct ConditionResult {
  Condition condition;
  RankSeries series;
  int failed_games = 0;
  std::vector<Transcript> transcripts;  // game order
};

struct ReportDataset {
  int rounds = 0;
  std::uint64_t master_seed = 0;
  int num_games = 0;
  std::vector<ConditionResult> conditions;  // "None" first, then declaration order
  json metadata = json::object();

  const ConditionResult& baseline() const { return conditions.front(); }

  const ConditionResult& find(std::string_view name) const {
    for (const auto& c : conditions) {
      if (c.condition.name == name) return c;
    }
    throw std::out_of_range("no condition named '" + std::string(name) + "'");
  }

  double gap(std::string_view name) const { return gap_at_round(baseline().series, find(name).series, rounds); }

  int failed_games() const {
    int n = 0;
    for (const auto& c : conditions) n += c.failed_games;
    return n;
  }
};

// Puts a None baseline first (adding one if absent) and checks names.
inline std::vector<Condition> normalize_conditions(std::vector<Condition> conditions, int rounds) {
  std::vector<Condition> out;
  auto none = std::find_if(conditions.begin(), conditions.end(), [](const Condition& c) { return c.name == "None"; });
  if (none != conditions.end()) {
    if (none->spec.target != Target::None) throw std::invalid_argument("condition 'None' must have target None");
    out.push_back(*none);
    conditions.erase(none);
  } else {
    out.push_back({"None", InterventionSpec{}, {}});
  }
  for (auto& c : conditions) {
    if (c.name.empty() || c.name.find_first_of(",\"\r\n") != std::string::npos) {
      throw std::invalid_argument("condition name '" + c.name + "' must be non-empty without commas, quotes or newlines");
    }
    for (const auto& seen : out) {
      if (seen.name == c.name) throw std::invalid_argument("duplicate condition name '" + c.name + "'");
    }
    out.push_back(std::move(c));
  }
  for (const auto& c : out) {
    try {
      c.spec.validate(rounds);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("condition '" + c.name + "': " + e.what());
    }
    if (c.spec.target == Target::Negation && c.spec.rounds.empty()) {
      throw std::invalid_argument("condition '" + c.name + "': Negation needs at least one round");
    }
  }
  return out;
}

struct RunSettings {
  int rounds = 10;
  std::uint64_t master_seed = 0;
  int jobs = 1;
};

// Runs every (condition, game) pair. Results do not depend on `jobs`.
inline ReportDataset run_conditions(const std::vector<GameInstance>& games, const Vocabulary& vocab,
                                    std::vector<Condition> conditions, QuestionerBackend& questioners,
                                    AnswererBackend& answerers, const RunSettings& settings) {
  if (games.empty()) throw std::invalid_argument("no games to run");
  if (settings.rounds < 1) throw std::invalid_argument("rounds must be >= 1");
  conditions = normalize_conditions(std::move(conditions), settings.rounds);
  for (const auto& g : games) {
    g.validate();
    for (const auto& c : conditions) {
      if (c.spec.target == Target::Manual) validate_overrides(c.overrides, g, settings.rounds);
    }
  }

  const std::size_t total = conditions.size() * games.size();
  const int lanes = std::max(1, std::min<int>(settings.jobs, static_cast<int>(total)));
  questioners.open(lanes);
  answerers.open(lanes);

  std::vector<Transcript> results(total);
  std::atomic<std::size_t> next{0};
  std::exception_ptr fatal;
  std::mutex fatal_mutex;
  std::atomic<bool> stop{false};

  auto worker = [&](int lane) {
    try {
      for (std::size_t i = next++; i < total && !stop; i = next++) {
        const Condition& c = conditions[i / games.size()];
        const GameInstance& g = games[i % games.size()];
        GameStreams streams = GameStreams::derive(settings.master_seed, g.game_id, c.name, c.spec.seed_offset);
        Transcript t;
        try {
          auto q = questioners.session(lane, g, agent_seed(settings.master_seed, g.game_id, c.name));
          auto a = answerers.session(lane, g);
          if (c.spec.target == Target::Manual) {
            t = detail::play(g, *q, *a, InterventionSpec{}, settings.rounds, vocab, streams, c.name, &c.overrides);
          } else {
            t = detail::play(g, *q, *a, c.spec, settings.rounds, vocab, streams, c.name, nullptr);
          }
        } catch (const AgentError& e) {
          t.game_id = g.game_id;
          t.condition_name = c.name;
          t.caption = g.caption;
          t.failed = true;
          t.diagnostic = e.what();
        }
        results[i] = std::move(t);
      }
    } catch (...) {
      std::lock_guard lock(fatal_mutex);
      if (!fatal) fatal = std::current_exception();
      stop = true;
    }
  };

  if (lanes == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int l = 0; l < lanes; ++l) pool.emplace_back(worker, l);
    for (auto& th : pool) th.join();
  }
  if (fatal) std::rethrow_exception(fatal);

  ReportDataset ds;
  ds.rounds = settings.rounds;
  ds.master_seed = settings.master_seed;
  ds.num_games = static_cast<int>(games.size());
  for (std::size_t ci = 0; ci < conditions.size(); ++ci) {
    ConditionResult cr;
    cr.condition = conditions[ci];
    cr.series.condition_name = conditions[ci].name;
    std::vector<std::vector<double>> per_round(static_cast<std::size_t>(settings.rounds));
    for (std::size_t gi = 0; gi < games.size(); ++gi) {
      Transcript& t = results[ci * games.size() + gi];
      if (t.failed) {
        ++cr.failed_games;
      } else {
        for (const auto& rec : t.rounds) per_round[static_cast<std::size_t>(rec.round - 1)].push_back(rec.percentile);
      }
      cr.transcripts.push_back(std::move(t));
    }
    cr.series.num_games = static_cast<int>(games.size()) - cr.failed_games;
    for (const auto& values : per_round) {
      cr.series.per_round_mpr.push_back(values.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                       : mean_percentile_rank(values));
    }
    ds.conditions.push_back(std::move(cr));
  }
  return ds;
}

}  // namespace vdprobe
