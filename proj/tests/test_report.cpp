#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "support.hpp"

using namespace vdprobe;
using namespace testing_support;

namespace {

// Rounds 1-9 at one decimal. Round 10 carries a second decimal so that both
// the round-10 row and the gap row come out as expected.
std::vector<RankSeries> table1() {
  return {series("None", {93.1, 93.2, 92.7, 92.8, 93.0, 93.0, 92.9, 92.8, 92.7, 92.56}),
          series("Images", {93.1, 93.1, 92.5, 92.5, 92.7, 92.6, 92.5, 92.4, 92.3, 92.18}),
          series("Captions", {50.0, 50.3, 50.7, 51.3, 51.6, 51.9, 52.2, 52.3, 52.4, 52.46}),
          series("Answers", {93.0, 93.1, 92.5, 92.5, 92.5, 92.4, 92.2, 92.0, 91.9, 91.74}),
          series("Questions", {92.5, 92.6, 91.8, 91.4, 91.3, 90.9, 90.6, 90.2, 89.9, 89.58})};
}

constexpr const char* kTable1 =
    "round,None,Images,Captions,Answers,Questions\n"
    "1,93.1,93.1,50.0,93.0,92.5\n"
    "2,93.2,93.1,50.3,93.1,92.6\n"
    "3,92.7,92.5,50.7,92.5,91.8\n"
    "4,92.8,92.5,51.3,92.5,91.4\n"
    "5,93.0,92.7,51.6,92.5,91.3\n"
    "6,93.0,92.6,51.9,92.4,90.9\n"
    "7,92.9,92.5,52.2,92.2,90.6\n"
    "8,92.8,92.4,52.3,92.0,90.2\n"
    "9,92.7,92.3,52.4,91.9,89.9\n"
    "10,92.6,92.2,52.5,91.7,89.6\n"
    "Gap @10,0.0,0.4,40.1,0.8,3.0\n";

// Triangular fixture keyed by 1-based start round.
std::map<int, RankSeries> table2() {
  auto row = [](std::vector<double> tail) {
    std::vector<double> full(10 - tail.size(), 0.0);
    full.insert(full.end(), tail.begin(), tail.end());
    return series("neg", full);
  };
  return {{8, row({94.3, 94.1, 93.9})},
          {6, row({94.6, 94.4, 94.2, 94.1, 93.9})},
          {4, row({94.7, 94.6, 94.5, 94.3, 94.2, 94.0, 93.8})},
          {2, row({94.8, 94.7, 94.6, 94.6, 94.4, 94.3, 94.1, 94.0, 93.8})},
          {1, row({94.8, 94.8, 94.7, 94.6, 94.5, 94.4, 94.2, 94.1, 93.9, 93.7})}};
}

constexpr const char* kTable2 =
    "start_round,1,2,3,4,5,6,7,8,9,10\n"
    "8,,,,,,,,94.3,94.1,93.9\n"
    "6,,,,,,94.6,94.4,94.2,94.1,93.9\n"
    "4,,,,94.7,94.6,94.5,94.3,94.2,94.0,93.8\n"
    "2,,94.8,94.7,94.6,94.6,94.4,94.3,94.1,94.0,93.8\n"
    "1,94.8,94.8,94.7,94.6,94.5,94.4,94.2,94.1,93.9,93.7\n";

ReportDataset small_dataset(std::vector<Condition> conds, int games = 20) {
  const auto w = gen_world(16, 6, 0, 3, games);
  BuiltinQuestionerBackend q(QuestionerProfile::CooperativeOracle);
  OracleAnswererBackend a;
  return run_conditions(w.games, default_vocabulary(), std::move(conds), q, a, {10, 3, 1});
}

Condition cond(std::string name, Target t, double p, std::set<int> rounds) {
  return {std::move(name), spec(t, p, std::move(rounds)), {}};
}

}  // namespace

TEST(FormatOneDecimal, Rules) {
  EXPECT_EQ(format_one_decimal(92.56), "92.6");
  EXPECT_EQ(format_one_decimal(100.0), "100.0");
  EXPECT_EQ(format_one_decimal(-0.04), "0.0");
  EXPECT_EQ(format_one_decimal(-0.0), "0.0");
  EXPECT_EQ(format_one_decimal(-3.25), "-3.2");
  EXPECT_EQ(format_one_decimal(std::nan("")), "nan");
}

TEST(RoundTable, FixtureWithGapRow) { EXPECT_EQ(emit_round_table(table1(), 10), kTable1); }

TEST(RoundTable, GapUsesFullPrecision) {
  // With round 10 rounded first, the Answers gap is 92.6 - 91.7 = 0.9.
  auto t = table1();
  for (auto& s : t) s.per_round_mpr.back() = std::round(s.per_round_mpr.back() * 10) / 10;
  const std::string out = emit_round_table(t, 10);
  EXPECT_NE(out.find("Gap @10,0.0,0.4,40.1,0.9,3.0\n"), std::string::npos) << out;
}

TEST(RoundTable, SingleNoneHasZeroGap) {
  EXPECT_EQ(emit_round_table(std::vector<RankSeries>{series("None", {50.0, 75.25})}, 2),
            "round,None\n1,50.0\n2,75.2\nGap @2,0.0\n");
}

TEST(RoundTable, IdenticalConditionsGiveIdenticalColumns) {
  const auto s = series("None", {10.0, 20.0, 30.0});
  auto t = s;
  t.condition_name = "Copy";
  EXPECT_EQ(emit_round_table(std::vector<RankSeries>{s, t}, 3),
            "round,None,Copy\n1,10.0,10.0\n2,20.0,20.0\n3,30.0,30.0\nGap @3,0.0,0.0\n");
}

TEST(RoundTable, Errors) {
  EXPECT_THROW(emit_round_table(std::vector<RankSeries>{}, 10), std::invalid_argument);
  EXPECT_THROW(emit_round_table(std::vector<RankSeries>{series("None", {1.0})}, 2), std::out_of_range);
}

TEST(NegationGrid, TriangularFixture) { EXPECT_EQ(emit_negation_grid(table2(), 10), kTable2); }

TEST(NegationGrid, SingleStartIsAFullRow) {
  EXPECT_EQ(emit_negation_grid({{1, series("n", {1.0, 2.0, 3.0})}}, 3), "start_round,1,2,3\n1,1.0,2.0,3.0\n");
}

TEST(NegationGrid, NoNegationConditionsGivesHeaderOnly) {
  EXPECT_EQ(emit_negation_grid(std::map<int, RankSeries>{}, 3), "start_round,1,2,3\n");
}

TEST(NegationGrid, FromDataset) {
  const auto ds = small_dataset({cond("negation_from_1", Target::Negation, 0, round_range(1, 10)),
                                 cond("negation_from_5", Target::Negation, 0, round_range(5, 10)),
                                 cond("Answers", Target::Answer, 0.5, round_range(1, 10))});
  const std::string grid = emit_negation_grid(ds);
  std::istringstream in(grid);
  std::string header, row5, row1, extra;
  std::getline(in, header);
  std::getline(in, row5);
  std::getline(in, row1);
  EXPECT_FALSE(std::getline(in, extra));
  EXPECT_EQ(row5.rfind("5,,,,,", 0), 0u);
  EXPECT_NE(row5.substr(6, 1), ",");
  EXPECT_EQ(row1.substr(0, 2), "1,");
  EXPECT_EQ(std::count(row1.begin(), row1.end(), ','), 10);
}

TEST(NegationGrid, OverlappingStartsRejected) {
  ReportDataset ds = small_dataset({cond("a", Target::Negation, 0, round_range(3, 10))}, 2);
  ds.conditions.push_back(ds.conditions.back());
  ds.conditions.back().condition.name = "b";
  EXPECT_THROW(negation_series_by_start(ds), std::invalid_argument);
}

TEST(PlotData, SeriesCarryScheduleAndFullPrecision) {
  const auto ds = small_dataset({cond("captions_p0.4", Target::Caption, 0.4, {1}),
                                 cond("Answers", Target::Answer, 0.8, round_range(5, 10))});
  const json j = json::parse(emit_plot_data(ds));
  ASSERT_EQ(j["series"].size(), 3u);
  EXPECT_EQ(j["series"][0]["name"], "None");
  EXPECT_TRUE(j["series"][0]["p"].is_null());
  EXPECT_EQ(j["series"][1]["p"], 0.4);
  EXPECT_EQ(j["series"][2]["schedule"], json({5, 6, 7, 8, 9, 10}));
  EXPECT_EQ(j["series"][2]["mpr"].get<std::vector<double>>(), ds.find("Answers").series.per_round_mpr);
  EXPECT_EQ(j["rounds"], 10);
  EXPECT_EQ(j["num_games"], 20);
  // Interventions starting at round 5 leave rounds 1-4 untouched.
  for (int r = 0; r < 4; ++r) EXPECT_EQ(j["series"][2]["mpr"][r], j["series"][0]["mpr"][r]);
}

TEST(PlotData, NoneOnly) {
  const json j = json::parse(emit_plot_data(small_dataset({}, 3)));
  ASSERT_EQ(j["series"].size(), 1u);
  EXPECT_EQ(j["series"][0]["gap"], 0.0);
}

TEST(Reports, IdenticalDatasetsGiveIdenticalBytes) {
  const std::vector<Condition> conds{cond("Answers", Target::Answer, 0.5, round_range(1, 10))};
  const auto a = small_dataset(conds), b = small_dataset(conds);
  EXPECT_EQ(emit_round_table(a), emit_round_table(b));
  EXPECT_EQ(emit_negation_grid(a), emit_negation_grid(b));
  EXPECT_EQ(emit_plot_data(a), emit_plot_data(b));
}

TEST(Reports, WritesThreeFiles) {
  const auto dir = std::filesystem::temp_directory_path() / ("vdprobe_report_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  const auto ds = small_dataset({}, 2);
  write_reports(ds, dir);
  for (const char* name : {"rounds.csv", "negation_grid.csv", "series.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / name)) << name;
  }
  std::ifstream in(dir / "rounds.csv");
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), emit_round_table(ds));
  std::filesystem::remove_all(dir);
}

TEST(SideBySide, MarksChangedLines) {
  const auto w = gen_world(16, 6, 0, 3, 1);
  const auto& g = w.games.front();
  AttributeQuestioner q1(g.pool, QuestionerProfile::CooperativeOracle, 0), q2(g.pool, QuestionerProfile::CooperativeOracle, 0);
  OracleAnswerer a;
  const Vocabulary v = default_vocabulary();
  const Transcript base = run_game(g, q1, a, {}, 3, v, GameStreams::derive(1, g.game_id, "None"));
  ScriptedOverrides ov;
  ov[2].answer = toks("maybe");
  const Transcript manual = run_scripted(g, q2, a, ov, 3, v, GameStreams::derive(1, g.game_id, "Manual"));
  const std::string text = side_by_side(base, manual);
  EXPECT_NE(text.find("game " + g.game_id + ": None vs Manual"), std::string::npos);
  EXPECT_NE(text.find("| * maybe"), std::string::npos) << text;
  EXPECT_NE(text.find("round 3"), std::string::npos);
}
