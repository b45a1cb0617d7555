#pragma once

// Named experiment presets. Each expands into an ordinary ExperimentConfig,
// so a preset run is reproducible from its written-out config alone.
//
//   caption-sweep   Caption at round 1, p in {0.2, 0.4, 0.6, 0.8}
//   round5          Image (whole vector), Answer, Question on rounds 5..R;
//                   token interventions at p = 0.8
//   extreme         Image, Caption, Answer, Question at p = 1 on every round
//                   (caption: round 1, the only time it is seen)
//   negation-grid   Negation from rounds 1, 3, 5, 7, 9 (0-based 0, 2, 4, 6, 8)

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "vdprobe/config.hpp"

namespace vdprobe {

inline constexpr std::array<std::string_view, 4> kPresetNames = {"caption-sweep", "round5", "extreme", "negation-grid"};

struct PresetOptions {
  std::string profile = "cooperative_oracle";
  int num_games = 1000;
  int rounds = 10;
  std::uint64_t master_seed = 7;
  int num_candidates = 64;
  int num_attrs = 12;
  // Default: 0 for cooperative_oracle and random, 8 for caption_only.
  std::optional<int> caption_reveal;
};

inline int default_caption_reveal(std::string_view profile, int num_attrs) {
  return profile == "caption_only" ? std::min(8, num_attrs) : 0;
}

namespace detail {
inline std::string p_label(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", p);
  return buf;
}

inline Condition make_condition(std::string name, Target target, double p, std::set<int> rounds) {
  Condition c;
  c.name = std::move(name);
  c.spec.target = target;
  c.spec.p = p;
  c.spec.rounds = std::move(rounds);
  return c;
}
}  // namespace detail

// Throws ConfigError for an unknown preset or profile.
inline ExperimentConfig make_preset(std::string_view name, const PresetOptions& opt) {
  parse_questioner_profile(opt.profile);
  if (opt.rounds < 1) throw ConfigError("rounds must be >= 1");
  ExperimentConfig cfg;
  SyntheticWorldConfig world;
  world.num_candidates = opt.num_candidates;
  world.num_attrs = opt.num_attrs;
  world.caption_reveal = opt.caption_reveal.value_or(default_caption_reveal(opt.profile, opt.num_attrs));
  cfg.world = world;
  cfg.q_agent.builtin = opt.profile;
  cfg.a_agent.builtin = "oracle";
  cfg.rounds = opt.rounds;
  cfg.master_seed = opt.master_seed;
  cfg.num_games = opt.num_games;

  const int R = opt.rounds;
  auto& conds = cfg.conditions;
  conds.push_back(detail::make_condition("None", Target::None, 0.0, {}));
  if (name == "caption-sweep") {
    for (double p : {0.2, 0.4, 0.6, 0.8}) {
      conds.push_back(detail::make_condition("captions_p" + detail::p_label(p), Target::Caption, p, {1}));
    }
  } else if (name == "round5") {
    const auto from5 = round_range(std::min(5, R), R);
    conds.push_back(detail::make_condition("Images", Target::Image, 1.0, from5));
    conds.push_back(detail::make_condition("Answers", Target::Answer, 0.8, from5));
    conds.push_back(detail::make_condition("Questions", Target::Question, 0.8, from5));
  } else if (name == "extreme") {
    conds.push_back(detail::make_condition("Images", Target::Image, 1.0, round_range(1, R)));
    conds.push_back(detail::make_condition("Captions", Target::Caption, 1.0, {1}));
    conds.push_back(detail::make_condition("Answers", Target::Answer, 1.0, round_range(1, R)));
    conds.push_back(detail::make_condition("Questions", Target::Question, 1.0, round_range(1, R)));
  } else if (name == "negation-grid") {
    for (int zero_based : {0, 2, 4, 6, 8}) {
      const int start = zero_based + 1;
      if (start > R) break;
      conds.push_back(detail::make_condition("negation_from_" + std::to_string(start), Target::Negation, 0.0,
                                             round_range(start, R)));
    }
  } else {
    throw ConfigError("unknown preset '" + std::string(name) + "'");
  }
  cfg.conditions = normalize_conditions(std::move(cfg.conditions), cfg.rounds);
  return cfg;
}

}  // namespace vdprobe
