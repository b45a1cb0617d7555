#pragma once

// Report files. All output is canonical: fixed column order, one decimal in
// the CSV tables, '\n' line endings. Identical datasets give identical bytes.
//
//   rounds.csv        round,<None>,<cond>...   rows 1..R, then "Gap @R"
//   negation_grid.csv start_round,1..R         one row per Negation start,
//                                              latest start first, blank
//                                              cells before the start
//   series.json       full-precision per-round MPR with condition metadata

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vdprobe/engine.hpp"
#include "vdprobe/metrics.hpp"

namespace vdprobe {

// One decimal, never "-0.0"; NaN (no successful games) prints as "nan".
inline std::string format_one_decimal(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  std::string s = buf;
  if (s == "-0.0") s = "0.0";
  return s;
}

// series.front() is the baseline.
inline std::string emit_round_table(std::span<const RankSeries> series, int rounds) {
  if (series.empty()) throw std::invalid_argument("round table needs at least one series");
  std::string out = "round";
  for (const auto& s : series) out += "," + s.condition_name;
  out += "\n";
  for (int r = 1; r <= rounds; ++r) {
    out += std::to_string(r);
    for (const auto& s : series) out += "," + format_one_decimal(s.at(r));
    out += "\n";
  }
  out += "Gap @" + std::to_string(rounds);
  for (const auto& s : series) out += "," + format_one_decimal(gap_at_round(series.front(), s, rounds));
  out += "\n";
  return out;
}

inline std::string emit_round_table(const ReportDataset& ds) {
  std::vector<RankSeries> series;
  for (const auto& c : ds.conditions) series.push_back(c.series);
  return emit_round_table(series, ds.rounds);
}

// Keys are 1-based start rounds.
inline std::string emit_negation_grid(const std::map<int, RankSeries>& by_start, int rounds) {
  std::string out = "start_round";
  for (int r = 1; r <= rounds; ++r) out += "," + std::to_string(r);
  out += "\n";
  for (auto it = by_start.rbegin(); it != by_start.rend(); ++it) {
    const int start = it->first;
    if (start < 1 || start > rounds) {
      throw std::invalid_argument("negation start round " + std::to_string(start) + " outside 1.." + std::to_string(rounds));
    }
    out += std::to_string(start);
    for (int r = 1; r <= rounds; ++r) {
      out += ",";
      if (r >= start) out += format_one_decimal(it->second.at(r));
    }
    out += "\n";
  }
  return out;
}

// Negation conditions of a dataset keyed by their first scheduled round.
inline std::map<int, RankSeries> negation_series_by_start(const ReportDataset& ds) {
  std::map<int, RankSeries> out;
  for (const auto& c : ds.conditions) {
    if (c.condition.spec.target != Target::Negation || c.condition.spec.rounds.empty()) continue;
    const int start = *c.condition.spec.rounds.begin();
    if (!out.emplace(start, c.series).second) {
      throw std::invalid_argument("two Negation conditions start at round " + std::to_string(start));
    }
  }
  return out;
}

inline std::string emit_negation_grid(const ReportDataset& ds) {
  return emit_negation_grid(negation_series_by_start(ds), ds.rounds);
}

inline json plot_data(const ReportDataset& ds) {
  json series = json::array();
  for (const auto& c : ds.conditions) {
    const auto& spec = c.condition.spec;
    std::vector<int> schedule(spec.rounds.begin(), spec.rounds.end());
    if (spec.target == Target::Manual) {
      schedule.clear();
      for (const auto& [r, _] : c.condition.overrides) schedule.push_back(r);
    }
    json s = {{"name", c.condition.name},
              {"target", to_string(spec.target)},
              {"p", uses_probability(spec.target) ? json(spec.p) : json(nullptr)},
              {"schedule", schedule},
              {"seed_offset", spec.seed_offset},
              {"content_only", spec.content_only},
              {"num_games", c.series.num_games},
              {"failed_games", c.failed_games},
              {"mpr", c.series.per_round_mpr},
              {"gap", gap_at_round(ds.baseline().series, c.series, ds.rounds)}};
    series.push_back(std::move(s));
  }
  return {{"rounds", ds.rounds},
          {"master_seed", ds.master_seed},
          {"num_games", ds.num_games},
          {"series", std::move(series)},
          {"metadata", ds.metadata}};
}

inline std::string emit_plot_data(const ReportDataset& ds) { return plot_data(ds).dump(2) + "\n"; }

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("error writing " + path.string());
}

// Renders all three files first so a rendering error leaves the directory untouched.
inline void write_reports(const ReportDataset& ds, const std::filesystem::path& dir) {
  const std::string rounds = emit_round_table(ds);
  const std::string grid = emit_negation_grid(ds);
  const std::string series = emit_plot_data(ds);
  std::filesystem::create_directories(dir);
  write_text_file(dir / "rounds.csv", rounds);
  write_text_file(dir / "negation_grid.csv", grid);
  write_text_file(dir / "series.json", series);
}

// Transcript dumps -------------------------------------------------------------------

namespace detail {
inline std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}
}  // namespace detail

// Original run on the left, intervened run on the right, one block per round.
inline std::string side_by_side(const Transcript& original, const Transcript& intervened) {
  constexpr std::size_t kWidth = 40;
  std::string out;
  auto line = [&](const std::string& label, const std::string& left, const std::string& right) {
    const bool changed = left != right;
    out += detail::pad(label, 10) + detail::pad(left, kWidth) + (changed ? "| * " : "|   ") + right + "\n";
  };
  out += "game " + original.game_id + ": " + original.condition_name + " vs " + intervened.condition_name + "\n";
  line("caption", join(original.caption_delivered), join(intervened.caption_delivered));
  for (const auto* t : {&original, &intervened}) {
    if (t->failed) out += t->condition_name + " failed: " + t->diagnostic + "\n";
  }
  const std::size_t n = std::max(original.rounds.size(), intervened.rounds.size());
  for (std::size_t i = 0; i < n; ++i) {
    const RoundRecord* a = i < original.rounds.size() ? &original.rounds[i] : nullptr;
    const RoundRecord* b = i < intervened.rounds.size() ? &intervened.rounds[i] : nullptr;
    auto get = [](const RoundRecord* r, auto f) { return r ? f(*r) : std::string("-"); };
    out += "round " + std::to_string(i + 1) + "\n";
    line("  Q", get(a, [](auto& r) { return join(r.question_delivered); }),
         get(b, [](auto& r) { return join(r.question_delivered); }));
    line("  A", get(a, [](auto& r) { return join(r.answer_delivered); }),
         get(b, [](auto& r) { return join(r.answer_delivered); }));
    line("  rank", get(a, [](auto& r) { return format_one_decimal(r.percentile); }),
         get(b, [](auto& r) { return format_one_decimal(r.percentile); }));
  }
  return out;
}

}  // namespace vdprobe
