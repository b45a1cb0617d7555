// vdprobe: command-line front end.
//
//   vdprobe run --config exp.json [--out DIR] [--seed N] [--games N] [--rounds N] [--jobs N]
//   vdprobe preset <name> [--profile P] [--out DIR] [...]
//   vdprobe manual --config exp.json --overrides script.json [--out DIR]
//   vdprobe world --config exp.json
//
// Exit codes: 0 ok, 1 usage, 2 config error, 3 agent handshake failure,
// 4 failed games above --max-failed-fraction, 5 I/O error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "vdprobe/vdprobe.hpp"

namespace fs = std::filesystem;
using namespace vdprobe;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kConfig = 2, kHandshake = 3, kGameFailures = 4, kIo = 5 };

struct CommonFlags {
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> games;
  std::optional<int> rounds;
  int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  double max_failed_fraction = 0.1;
};

std::string default_out_dir() {
  if (const char* env = std::getenv("VDPROBE_OUT"); env && *env) return env;
  return "vdprobe_out";
}

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--out", f.out, "Output directory (default: $VDPROBE_OUT or ./vdprobe_out)");
  cmd->add_option("--seed", f.seed, "Override master_seed");
  cmd->add_option("--games", f.games, "Override num_games")->check(CLI::PositiveNumber);
  cmd->add_option("--rounds", f.rounds, "Override rounds")->check(CLI::PositiveNumber);
  cmd->add_option("--jobs", f.jobs, "Parallel games (default: available cores)")->check(CLI::PositiveNumber);
  cmd->add_option("--max-failed-fraction", f.max_failed_fraction,
                  "Exit with code 4 when more than this fraction of games fail")
      ->check(CLI::Range(0.0, 1.0));
}

// Applies CLI overrides to a raw config document and records them.
json apply_overrides(json cfg, const CommonFlags& f, json& echo) {
  if (f.seed) {
    cfg["master_seed"] = *f.seed;
    echo["seed"] = *f.seed;
  }
  if (f.games) {
    cfg["num_games"] = *f.games;
    echo["games"] = *f.games;
  }
  if (f.rounds) {
    cfg["rounds"] = *f.rounds;
    echo["rounds"] = *f.rounds;
  }
  return cfg;
}

int run_and_report(const ExperimentConfig& cfg, const CommonFlags& f, const json& echo, const fs::path& out) {
  ReportDataset ds = run_experiment(cfg, f.jobs);
  ds.metadata["cli_overrides"] = echo;
  try {
    fs::create_directories(out);
    write_text_file(out / "config.json", to_json(cfg).dump(2) + "\n");
    write_reports(ds, out);
  } catch (const std::exception& e) {
    std::cerr << "vdprobe: " << e.what() << "\n";
    return kIo;
  }
  std::cout << emit_round_table(ds);

  const int failed = ds.failed_games();
  const int total = ds.num_games * static_cast<int>(ds.conditions.size());
  if (failed > 0) {
    std::cerr << "vdprobe: " << failed << " of " << total << " games failed\n";
    int shown = 0;
    for (const auto& c : ds.conditions) {
      for (const auto& t : c.transcripts) {
        if (t.failed && shown++ < 5) std::cerr << "  " << t.game_id << "/" << t.condition_name << ": " << t.diagnostic << "\n";
      }
    }
    if (static_cast<double>(failed) > f.max_failed_fraction * total) return kGameFailures;
  }
  return kOk;
}

int cmd_run(const std::string& config_path, const CommonFlags& f) {
  json echo = json::object();
  const fs::path path(config_path);
  json raw = apply_overrides(read_json_file(path), f, echo);
  ExperimentConfig cfg = parse_config(raw);
  if (auto* g = std::get_if<GamesFileConfig>(&cfg.world); g && fs::path(g->path).is_relative()) {
    g->path = (path.parent_path() / g->path).lexically_normal().string();
  }
  return run_and_report(cfg, f, echo, f.out.empty() ? default_out_dir() : f.out);
}

int cmd_preset(const std::string& name, const std::string& profile, std::optional<int> caption_reveal,
               const CommonFlags& f) {
  PresetOptions opt;
  opt.profile = profile;
  opt.caption_reveal = caption_reveal;
  json echo = {{"preset", name}, {"profile", profile}};
  if (caption_reveal) echo["caption_reveal"] = *caption_reveal;
  // Schedules depend on the round count, so it goes in before expansion.
  if (f.rounds) opt.rounds = *f.rounds;
  ExperimentConfig cfg = parse_config(apply_overrides(to_json(make_preset(name, opt)), f, echo));
  return run_and_report(cfg, f, echo, f.out.empty() ? default_out_dir() : f.out);
}

int cmd_manual(const std::string& config_path, const std::string& overrides_path, const CommonFlags& f) {
  json echo = json::object();
  const fs::path path(config_path);
  ExperimentConfig cfg = parse_config(apply_overrides(read_json_file(path), f, echo));
  if (auto* g = std::get_if<GamesFileConfig>(&cfg.world); g && fs::path(g->path).is_relative()) {
    g->path = (path.parent_path() / g->path).lexically_normal().string();
  }
  const ManualScript script = parse_manual_script(read_json_file(overrides_path));
  ResolvedWorld world = resolve_world(cfg);

  const GameInstance* game = &world.games.front();
  if (const auto* id = std::get_if<std::string>(&script.game)) {
    auto it = std::find_if(world.games.begin(), world.games.end(), [&](const GameInstance& g) { return g.game_id == *id; });
    if (it == world.games.end()) throw ConfigError("no game with id '" + *id + "'");
    game = &*it;
  } else if (const auto* idx = std::get_if<int>(&script.game)) {
    if (*idx < 0 || *idx >= static_cast<int>(world.games.size())) throw ConfigError("game index out of range");
    game = &world.games[static_cast<std::size_t>(*idx)];
  }
  try {
    script.base.validate(cfg.rounds);
    validate_overrides(script.overrides, *game, cfg.rounds);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  Backends backends = make_backends(cfg, world);
  backends.questioner->open(1);
  backends.answerer->open(1);
  const std::uint64_t qseed = agent_seed(cfg.master_seed, game->game_id, "None");
  auto play = [&](bool scripted) {
    auto q = backends.questioner->session(0, *game, qseed);
    auto a = backends.answerer->session(0, *game);
    if (!scripted) {
      return run_game(*game, *q, *a, InterventionSpec{}, cfg.rounds, world.vocab,
                      GameStreams::derive(cfg.master_seed, game->game_id, "None"), "None");
    }
    return run_scripted(*game, *q, *a, script.overrides, cfg.rounds, world.vocab,
                        GameStreams::derive(cfg.master_seed, game->game_id, "Manual", script.base.seed_offset),
                        script.base, "Manual");
  };
  const Transcript original = play(false);
  const Transcript intervened = play(true);

  const std::string text = side_by_side(original, intervened);
  const fs::path out = f.out.empty() ? default_out_dir() : f.out;
  try {
    fs::create_directories(out);
    write_text_file(out / "transcript.txt", text);
    write_text_file(out / "transcript.json",
                    json{{"original", to_json(original)}, {"intervened", to_json(intervened)}, {"cli_overrides", echo}}
                            .dump(2) +
                        "\n");
  } catch (const std::exception& e) {
    std::cerr << "vdprobe: " << e.what() << "\n";
    return kIo;
  }
  std::cout << text;
  return (original.failed || intervened.failed) ? kGameFailures : kOk;
}

int cmd_world(const std::string& config_path, const CommonFlags& f) {
  json echo = json::object();
  ExperimentConfig cfg = parse_config(apply_overrides(read_json_file(config_path), f, echo));
  ResolvedWorld world = resolve_world(cfg);
  json games = json::array();
  for (const auto& g : world.games) games.push_back(to_json(g));
  json vocab = json::array(), stop = json::array();
  for (const auto& t : world.vocab.tokens()) vocab.push_back(t.text());
  for (const auto& t : world.vocab.stopwords()) stop.push_back(t.text());
  std::cout << json{{"vocab", vocab}, {"stopwords", stop}, {"games", games}}.dump() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Black-box intervention harness for cooperative image-guessing dialogs"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string config_path, overrides_path, preset_name, profile = "cooperative_oracle";
  std::optional<int> caption_reveal;

  auto* run = app.add_subcommand("run", "Run an experiment config");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required();
  add_common(run, flags);

  auto* preset = app.add_subcommand("preset", "Run a named preset: caption-sweep, round5, extreme, negation-grid");
  auto* preset_pos = preset->add_option("name", preset_name, "Preset name");
  auto* preset_flag = preset->add_option("--preset", preset_name, "Preset name (alternative to the positional)");
  preset_pos->excludes(preset_flag);
  preset->add_option("--profile", profile, "Questioner profile: cooperative_oracle, caption_only, random");
  preset->add_option("--caption-reveal", caption_reveal, "Attributes revealed by the caption")->check(CLI::NonNegativeNumber);
  add_common(preset, flags);

  auto* manual = app.add_subcommand("manual", "Run one game with scripted overrides, side by side with the baseline");
  manual->add_option("--config", config_path, "Experiment config (JSON)")->required();
  manual->add_option("--overrides", overrides_path, "Scripted-override file (JSON)")->required();
  add_common(manual, flags);

  auto* world = app.add_subcommand("world", "Print the resolved games of a config as JSON");
  world->add_option("--config", config_path, "Experiment config (JSON)")->required();
  add_common(world, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*run) return cmd_run(config_path, flags);
    if (*preset) {
      if (preset_name.empty()) {
        std::cerr << "vdprobe: preset name required\n";
        return kUsage;
      }
      if (std::find(kPresetNames.begin(), kPresetNames.end(), preset_name) == kPresetNames.end()) {
        std::cerr << "vdprobe: unknown preset '" << preset_name << "'\n";
        return kUsage;
      }
      return cmd_preset(preset_name, profile, caption_reveal, flags);
    }
    if (*manual) return cmd_manual(config_path, overrides_path, flags);
    if (*world) return cmd_world(config_path, flags);
  } catch (const ConfigError& e) {
    std::cerr << "vdprobe: config error: " << e.what() << "\n";
    return kConfig;
  } catch (const HandshakeError& e) {
    std::cerr << "vdprobe: agent handshake failed: " << e.what() << "\n";
    return kHandshake;
  } catch (const std::invalid_argument& e) {
    std::cerr << "vdprobe: config error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "vdprobe: " << e.what() << "\n";
    return kIo;
  }
  return kUsage;
}
