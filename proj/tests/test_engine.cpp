#include <gtest/gtest.h>

#include <set>

#include "support.hpp"

using namespace vdprobe;
using namespace testing_support;

namespace {

struct Fixture {
  SyntheticWorld world;
  Vocabulary vocab = default_vocabulary();
};

Fixture make_world(int n, int k, int c, int games, std::uint64_t seed = 7) {
  return {gen_world(n, k, c, seed, games), default_vocabulary()};
}

Condition cond(std::string name, Target t, double p, std::set<int> rounds) {
  return {std::move(name), spec(t, p, std::move(rounds)), {}};
}

ReportDataset run(const Fixture& f, std::vector<Condition> conds, QuestionerProfile profile, int jobs = 1,
                  std::uint64_t seed = 7, int rounds = 10) {
  BuiltinQuestionerBackend q(profile);
  OracleAnswererBackend a;
  return run_conditions(f.world.games, f.vocab, std::move(conds), q, a, {rounds, seed, jobs});
}

Transcript play_one(const GameInstance& g, QuestionerProfile profile, const InterventionSpec& s, const Vocabulary& v,
                    const std::string& name = "None") {
  AttributeQuestioner q(g.pool, profile, agent_seed(7, g.game_id, name));
  OracleAnswerer a;
  return run_game(g, q, a, s, 10, v, GameStreams::derive(7, g.game_id, name), name);
}

Transcript script_one(const GameInstance& g, QuestionerProfile profile, const ScriptedOverrides& ov,
                      const Vocabulary& v, const InterventionSpec& base = {}, const std::string& name = "Manual") {
  AttributeQuestioner q(g.pool, profile, agent_seed(7, g.game_id, name));
  OracleAnswerer a;
  return run_scripted(g, q, a, ov, 10, v, GameStreams::derive(7, g.game_id, name), base, name);
}

// Round contents without the bookkeeping labels.
void expect_same_dialog(const Transcript& a, const Transcript& b) {
  EXPECT_EQ(a.caption_delivered, b.caption_delivered);
  ASSERT_EQ(a.rounds.size(), b.rounds.size());
  for (std::size_t i = 0; i < a.rounds.size(); ++i) {
    EXPECT_EQ(a.rounds[i].question_delivered, b.rounds[i].question_delivered);
    EXPECT_EQ(a.rounds[i].answer_delivered, b.rounds[i].answer_delivered);
    EXPECT_EQ(a.rounds[i].prediction, b.rounds[i].prediction);
    EXPECT_EQ(a.rounds[i].percentile, b.rounds[i].percentile);
  }
}

}  // namespace

TEST(RunGame, NoneDeliversOriginals) {
  const auto f = make_world(64, 12, 3, 30);
  for (const auto& g : f.world.games) {
    const Transcript t = play_one(g, QuestionerProfile::CooperativeOracle, InterventionSpec{}, f.vocab);
    ASSERT_FALSE(t.failed);
    EXPECT_EQ(t.caption_delivered, t.caption);
    ASSERT_EQ(t.rounds.size(), 10u);
    for (const auto& r : t.rounds) {
      EXPECT_EQ(r.question, r.question_delivered);
      EXPECT_EQ(r.answer, r.answer_delivered);
      EXPECT_TRUE(r.applied.empty());
    }
  }
}

TEST(RunGame, OracleConvergesOnSixtyFourCandidates) {
  const auto f = make_world(64, 12, 0, 200);
  for (const auto& g : f.world.games) {
    const Transcript t = play_one(g, QuestionerProfile::CooperativeOracle, InterventionSpec{}, f.vocab);
    EXPECT_EQ(t.rounds.back().percentile, 100.0);
  }
}

TEST(RunGame, QuestionNoiseMakesEveryAnswerUnknown) {
  const auto f = make_world(64, 12, 0, 20);
  for (const auto& g : f.world.games) {
    const Transcript t = play_one(g, QuestionerProfile::CooperativeOracle,
                                  spec(Target::Question, 1.0, round_range(1, 10)), f.vocab, "Questions");
    for (const auto& r : t.rounds) {
      EXPECT_EQ(r.answer, toks("unknown"));
      EXPECT_EQ(r.applied, std::vector<std::string>{"question"});
    }
  }
}

TEST(RunGame, ImageNoiseFromRoundFiveIsLabelledAndHeld) {
  const auto f = make_world(64, 12, 0, 5);
  for (const auto& g : f.world.games) {
    const Transcript t =
        play_one(g, QuestionerProfile::CooperativeOracle, spec(Target::Image, 1.0, round_range(5, 10)), f.vocab, "Images");
    for (const auto& r : t.rounds) {
      EXPECT_EQ(r.applied.empty(), r.round < 5) << "round " << r.round;
    }
  }
}

TEST(RunGame, RejectsBadArguments) {
  const auto f = make_world(8, 4, 0, 1);
  const auto& g = f.world.games.front();
  AttributeQuestioner q(g.pool, QuestionerProfile::CooperativeOracle, 0);
  OracleAnswerer a;
  EXPECT_THROW(run_game(g, q, a, {}, 0, f.vocab, GameStreams::derive(7, g.game_id, "None")), std::invalid_argument);
  EXPECT_THROW(run_game(g, q, a, spec(Target::Answer, 0.5, {11}), 10, f.vocab, GameStreams::derive(7, g.game_id, "x")),
               std::invalid_argument);
}

TEST(RunScripted, EmptyOverridesMatchNone) {
  const auto f = make_world(64, 12, 0, 30);
  for (const auto& g : f.world.games) {
    const Transcript none = play_one(g, QuestionerProfile::CooperativeOracle, {}, f.vocab);
    const Transcript scripted = script_one(g, QuestionerProfile::CooperativeOracle, {}, f.vocab);
    expect_same_dialog(none, scripted);
  }
}

TEST(RunScripted, NegateEveryAnswerMatchesNegationSpec) {
  const auto f = make_world(16, 6, 0, 50);
  ScriptedOverrides ov;
  for (int r = 1; r <= 10; ++r) ov[r].negate_answer = true;
  for (const auto& g : f.world.games) {
    const Transcript probe =
        play_one(g, QuestionerProfile::CooperativeOracle, spec(Target::Negation, 0.0, round_range(1, 10)), f.vocab, "neg");
    const Transcript scripted = script_one(g, QuestionerProfile::CooperativeOracle, ov, f.vocab);
    expect_same_dialog(probe, scripted);
  }
}

TEST(RunScripted, NegatingTwiceRestoresTheTruthfulDialog) {
  const auto f = make_world(16, 6, 0, 50);
  ScriptedOverrides ov;
  for (int r = 1; r <= 10; ++r) ov[r].negate_answer = true;
  const auto negation = spec(Target::Negation, 0.0, round_range(1, 10));
  for (const auto& g : f.world.games) {
    const Transcript truthful = play_one(g, QuestionerProfile::CooperativeOracle, {}, f.vocab);
    const Transcript twice = script_one(g, QuestionerProfile::CooperativeOracle, ov, f.vocab, negation);
    expect_same_dialog(truthful, twice);
    for (const auto& r : twice.rounds) EXPECT_EQ(r.applied, (std::vector<std::string>{"answer", "manual:negate"}));
  }
}

TEST(RunScripted, TrueCaptionHelpsCaptionOnlyQuestioner) {
  const auto f = make_world(64, 12, 0, 30);
  double before = 0.0, after = 0.0;
  for (const auto& g : f.world.games) {
    TokenSeq description;
    for (int a = 0; a < 12; ++a) {
      description.emplace_back("attr_" + std::to_string(a) + "=" + (g.image[a] >= 0.5 ? "1" : "0"));
    }
    ScriptedOverrides ov;
    ov[1].caption = description;
    const Transcript base = play_one(g, QuestionerProfile::CaptionOnly, {}, f.vocab);
    const Transcript scripted = script_one(g, QuestionerProfile::CaptionOnly, ov, f.vocab);
    EXPECT_EQ(scripted.rounds.back().percentile, 100.0);
    EXPECT_EQ(scripted.rounds.front().applied.front(), "manual:caption");
    before += base.rounds.back().percentile;
    after += scripted.rounds.back().percentile;
  }
  EXPECT_GT(after, before);
}

TEST(RunScripted, ImageOverridePersists) {
  const auto f = make_world(16, 6, 0, 1);
  const auto& g = f.world.games.front();
  std::vector<double> flipped(g.image.values().begin(), g.image.values().end());
  for (auto& x : flipped) x = 1.0 - x;
  ScriptedOverrides ov;
  ov[3].image = fv(flipped);
  const Transcript t = script_one(g, QuestionerProfile::CooperativeOracle, ov, f.vocab);
  for (const auto& r : t.rounds) {
    const int attr = *parse_attribute_question(r.question_delivered);
    const bool present = (r.round >= 3 ? flipped[attr] : g.image[attr]) >= 0.5;
    EXPECT_EQ(r.answer_delivered, toks(present ? "yes" : "no")) << "round " << r.round;
  }
}

TEST(RunScripted, QuestionAndAnswerReplacement) {
  const auto f = make_world(16, 6, 0, 1);
  const auto& g = f.world.games.front();
  ScriptedOverrides ov;
  ov[2].question = toks("attr_5 ?");
  ov[4].answer = toks("maybe");
  const Transcript t = script_one(g, QuestionerProfile::CooperativeOracle, ov, f.vocab);
  EXPECT_EQ(t.rounds[1].question_delivered, toks("attr_5 ?"));
  EXPECT_EQ(t.rounds[1].answer, oracle_abot_answer(g.image, toks("attr_5 ?")));
  EXPECT_EQ(t.rounds[3].answer_delivered, toks("maybe"));
}

TEST(RunScripted, MalformedOverridesRejected) {
  const auto f = make_world(16, 6, 0, 1);
  const auto& g = f.world.games.front();
  auto bad = [&](ScriptedOverrides ov) { EXPECT_THROW(validate_overrides(ov, g, 10), std::invalid_argument); };
  ScriptedOverrides ov;
  ov[11].question = toks("x");
  bad(ov);
  ov.clear();
  ov[0].question = toks("x");
  bad(ov);
  ov.clear();
  ov[2].caption = toks("x");
  bad(ov);
  ov.clear();
  ov[2].answer = toks("x");
  ov[2].negate_answer = true;
  bad(ov);
  ov.clear();
  ov[2].image = fv({1.0});
  bad(ov);
}

TEST(NormalizeConditions, BaselineFirstAndNamesChecked) {
  auto out = normalize_conditions({cond("A", Target::Answer, 0.5, {1})}, 10);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].name, "None");
  out = normalize_conditions({cond("A", Target::Answer, 0.5, {1}), cond("None", Target::None, 0, {})}, 10);
  EXPECT_EQ(out[0].name, "None");
  EXPECT_EQ(out[1].name, "A");
  EXPECT_THROW(normalize_conditions({cond("None", Target::Answer, 0.5, {1})}, 10), std::invalid_argument);
  EXPECT_THROW(normalize_conditions({cond("A", Target::Answer, 0.5, {1}), cond("A", Target::Image, 1, {1})}, 10),
               std::invalid_argument);
  EXPECT_THROW(normalize_conditions({cond("a,b", Target::Answer, 0.5, {1})}, 10), std::invalid_argument);
  EXPECT_THROW(normalize_conditions({cond("", Target::Answer, 0.5, {1})}, 10), std::invalid_argument);
  EXPECT_THROW(normalize_conditions({cond("N", Target::Negation, 0, {})}, 10), std::invalid_argument);
  EXPECT_THROW(normalize_conditions({cond("A", Target::Answer, 0.5, {12})}, 10), std::invalid_argument);
}

TEST(RunConditions, NoneOnlyHasZeroGap) {
  const auto f = make_world(64, 12, 0, 100);
  const auto ds = run(f, {}, QuestionerProfile::CooperativeOracle);
  ASSERT_EQ(ds.conditions.size(), 1u);
  EXPECT_EQ(ds.gap("None"), 0.0);
  EXPECT_EQ(ds.baseline().series.num_games, 100);
}

TEST(RunConditions, CaptionCollapseForCaptionOnly) {
  const auto f = make_world(64, 12, 8, 1000);
  const auto ds = run(f, {cond("Captions", Target::Caption, 1.0, {1})}, QuestionerProfile::CaptionOnly);
  const double r1 = ds.find("Captions").series.at(1);
  EXPECT_GE(r1, 47.0);
  EXPECT_LE(r1, 53.0);
}

TEST(RunConditions, AnswerNoiseIsInvisibleToCaptionOnly) {
  const auto f = make_world(64, 12, 8, 200);
  const auto ds = run(f, {cond("Answers", Target::Answer, 1.0, round_range(1, 10))}, QuestionerProfile::CaptionOnly);
  EXPECT_EQ(ds.gap("Answers"), 0.0);
  EXPECT_EQ(ds.find("Answers").series, (RankSeries{"Answers", ds.baseline().series.per_round_mpr, 200}));
}

TEST(RunConditions, NegationHurtsTheCooperativeOracle) {
  const auto f = make_world(16, 6, 0, 300);
  const auto ds = run(f, {cond("neg", Target::Negation, 0, round_range(1, 10))}, QuestionerProfile::CooperativeOracle);
  EXPECT_LT(ds.find("neg").series.at(10), ds.baseline().series.at(10));
}

TEST(RunConditions, AddingConditionsLeavesBaselineUntouched) {
  const auto f = make_world(64, 12, 2, 60);
  for (auto profile : {QuestionerProfile::CooperativeOracle, QuestionerProfile::Random}) {
    const auto alone = run(f, {}, profile);
    const auto more = run(f,
                          {cond("Images", Target::Image, 1.0, round_range(1, 10)),
                           cond("Answers", Target::Answer, 0.5, round_range(3, 10))},
                          profile);
    EXPECT_EQ(alone.baseline().series, more.baseline().series);
    EXPECT_EQ(alone.baseline().transcripts, more.baseline().transcripts);
  }
}

TEST(RunConditions, ResultsIndependentOfJobs) {
  const auto f = make_world(32, 8, 1, 40);
  const std::vector<Condition> conds{cond("Q", Target::Question, 0.5, round_range(1, 10)),
                                     cond("A", Target::Answer, 0.3, round_range(2, 9))};
  const auto one = run(f, conds, QuestionerProfile::Random, 1);
  const auto four = run(f, conds, QuestionerProfile::Random, 4);
  ASSERT_EQ(one.conditions.size(), four.conditions.size());
  for (std::size_t i = 0; i < one.conditions.size(); ++i) {
    EXPECT_EQ(one.conditions[i].series, four.conditions[i].series);
    EXPECT_EQ(one.conditions[i].transcripts, four.conditions[i].transcripts);
  }
}

TEST(RunConditions, SeedOffsetChangesOnlyItsStreams) {
  const auto f = make_world(32, 8, 0, 40);
  auto c = cond("Q", Target::Question, 0.5, round_range(1, 10));
  const auto a = run(f, {c}, QuestionerProfile::CooperativeOracle);
  c.spec.seed_offset = 1;
  const auto b = run(f, {c}, QuestionerProfile::CooperativeOracle);
  EXPECT_EQ(a.baseline().series, b.baseline().series);
  EXPECT_NE(a.find("Q").transcripts, b.find("Q").transcripts);
}

namespace {

// Fails predictions of the listed games.
class FlakyQuestioner final : public Questioner {
 public:
  FlakyQuestioner(std::unique_ptr<Questioner> inner, bool fail, int* ended) : inner_(std::move(inner)), fail_(fail), ended_(ended) {}
  void begin_game(const std::string& s, const TokenSeq& c) override { inner_->begin_game(s, c); }
  TokenSeq ask(int r) override { return inner_->ask(r); }
  FeatureVector predict(int r, const TokenSeq& a) override {
    if (fail_ && r == 3) throw AgentError("prediction timed out");
    return inner_->predict(r, a);
  }
  void end_game(int r) override {
    ++*ended_;
    inner_->end_game(r);
  }

 private:
  std::unique_ptr<Questioner> inner_;
  bool fail_;
  int* ended_;
};

class FlakyBackend final : public QuestionerBackend {
 public:
  explicit FlakyBackend(std::set<std::string> failing) : failing_(std::move(failing)) {}
  void open(int) override {}
  std::unique_ptr<Questioner> session(int lane, const GameInstance& g, std::uint64_t seed) override {
    return std::make_unique<FlakyQuestioner>(inner_.session(lane, g, seed), failing_.contains(g.game_id), &ended);
  }
  int ended = 0;

 private:
  BuiltinQuestionerBackend inner_{QuestionerProfile::CooperativeOracle};
  std::set<std::string> failing_;
};

}  // namespace

TEST(RunConditions, FailedGamesAreExcludedAndCounted) {
  const auto f = make_world(16, 6, 0, 20);
  FlakyBackend q({f.world.games[2].game_id, f.world.games[7].game_id});
  OracleAnswererBackend a;
  const auto ds = run_conditions(f.world.games, f.vocab, {}, q, a, {10, 7, 1});
  EXPECT_EQ(ds.failed_games(), 2);
  EXPECT_EQ(ds.baseline().series.num_games, 18);
  EXPECT_EQ(q.ended, 20);
  const Transcript& t = ds.baseline().transcripts[2];
  EXPECT_TRUE(t.failed);
  EXPECT_NE(t.diagnostic.find("timed out"), std::string::npos);

  std::vector<GameInstance> healthy;
  for (std::size_t i = 0; i < f.world.games.size(); ++i) {
    if (i != 2 && i != 7) healthy.push_back(f.world.games[i]);
  }
  BuiltinQuestionerBackend plain(QuestionerProfile::CooperativeOracle);
  const auto ref = run_conditions(healthy, f.vocab, {}, plain, a, {10, 7, 1});
  EXPECT_EQ(ds.baseline().series.per_round_mpr, ref.baseline().series.per_round_mpr);
}

TEST(RunConditions, AllGamesFailedGivesNaN) {
  const auto f = make_world(16, 6, 0, 2);
  FlakyBackend q({f.world.games[0].game_id, f.world.games[1].game_id});
  OracleAnswererBackend a;
  const auto ds = run_conditions(f.world.games, f.vocab, {}, q, a, {10, 7, 1});
  EXPECT_TRUE(std::isnan(ds.baseline().series.at(10)));
  EXPECT_EQ(ds.baseline().series.num_games, 0);
}
