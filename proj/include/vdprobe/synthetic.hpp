#pragma once

// A desk-scale attribute world and the oracle agent profiles that play in it.
//
// Candidates are distinct binary attribute vectors (0.0 / 1.0 entries). A
// caption reveals the first c attributes of the truth as tokens "attr_<i>=<v>".
// Questions take the form ["attr_<i>", "?"]; the truthful answerer replies
// ["yes"], ["no"], or ["unknown"] when it cannot parse the question. A feature
// value counts as attribute-present when it is >= 0.5, so noised images still
// yield yes/no answers.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "vdprobe/agents.hpp"
#include "vdprobe/interventions.hpp"
#include "vdprobe/rng.hpp"
#include "vdprobe/types.hpp"

namespace vdprobe {

struct AttributeWorld {
  int num_attrs = 0;
  int caption_reveal = 0;
  std::vector<Candidate> pool;
};

struct SyntheticWorld {
  AttributeWorld world;
  std::vector<GameInstance> games;
};

inline bool attribute_present(double value) { return value >= 0.5; }

inline std::string attribute_name(int i) { return "attr_" + std::to_string(i); }

namespace detail {

inline std::string padded_id(char prefix, std::size_t index, int width) {
  std::string digits = std::to_string(index);
  if (static_cast<int>(digits.size()) < width) digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
  return prefix + digits;
}

inline int digits(std::size_t n) {
  int d = 1;
  while (n >= 10) {
    n /= 10;
    ++d;
  }
  return d;
}

// Parses "attr_<i>" (exactly; no sign, no leading junk) into i.
inline std::optional<int> parse_attr_index(std::string_view s) {
  constexpr std::string_view kPrefix = "attr_";
  if (!s.starts_with(kPrefix)) return std::nullopt;
  s.remove_prefix(kPrefix.size());
  if (s.empty() || s.size() > 9) return std::nullopt;
  int value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

// Distinct codes in [0, 2^k), in draw order.
inline std::vector<std::uint64_t> distinct_codes(std::size_t n, int k, RandomStream& rng) {
  const std::uint64_t space = std::uint64_t{1} << k;
  std::vector<std::uint64_t> out;
  out.reserve(n);
  if (space <= (std::uint64_t{1} << 20)) {
    std::vector<std::uint64_t> all(space);
    for (std::uint64_t i = 0; i < space; ++i) all[i] = i;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = i + rng.uniform_index(space - i);
      std::swap(all[i], all[j]);
      out.push_back(all[i]);
    }
    return out;
  }
  std::unordered_set<std::uint64_t> seen;
  while (out.size() < n) {
    const std::uint64_t code = rng.next_u64() & (space - 1);
    if (seen.insert(code).second) out.push_back(code);
  }
  return out;
}

}  // namespace detail

// Returns the attribute index asked by ["attr_<i>", "?"], if well-formed.
inline std::optional<int> parse_attribute_question(std::span<const Token> question) {
  if (question.size() != 2 || question[1].text() != "?") return std::nullopt;
  return detail::parse_attr_index(question[0].text());
}

inline TokenSeq attribute_question(int attr) { return {Token(attribute_name(attr)), Token("?")}; }

// Parses caption tokens "attr_<i>=<0|1>"; anything else is ignored.
struct CaptionConstraint {
  int attr;
  bool present;
};

inline std::vector<CaptionConstraint> parse_caption(std::span<const Token> caption) {
  std::vector<CaptionConstraint> out;
  for (const auto& tok : caption) {
    const std::string& s = tok.text();
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq + 2 != s.size()) continue;
    const char v = s.back();
    if (v != '0' && v != '1') continue;
    if (auto idx = detail::parse_attr_index(std::string_view(s).substr(0, eq))) {
      out.push_back({*idx, v == '1'});
    }
  }
  return out;
}

// Generates the candidate pool and num_games games over it. Every game uses
// the whole pool; its truth is drawn from a per-game stream.
inline SyntheticWorld gen_world(int num_candidates, int num_attrs, int caption_reveal,
                                std::uint64_t seed, int num_games) {
  if (num_attrs < 1 || num_attrs > 62) throw std::invalid_argument("num_attrs must be in 1..62");
  if (num_candidates < 2) throw std::invalid_argument("world needs >= 2 candidates");
  if (static_cast<std::uint64_t>(num_candidates) > (std::uint64_t{1} << num_attrs)) {
    throw std::invalid_argument("cannot draw " + std::to_string(num_candidates) +
                                " distinct candidates with " + std::to_string(num_attrs) +
                                " binary attributes");
  }
  if (caption_reveal < 0 || caption_reveal > num_attrs) {
    throw std::invalid_argument("caption_reveal must be in 0..num_attrs");
  }
  if (num_games < 1) throw std::invalid_argument("num_games must be >= 1");

  SyntheticWorld out;
  out.world.num_attrs = num_attrs;
  out.world.caption_reveal = caption_reveal;

  RandomStream pool_rng = derive_rng(seed, "", "world", "pool");
  const auto codes = detail::distinct_codes(static_cast<std::size_t>(num_candidates), num_attrs, pool_rng);
  const int id_width = detail::digits(codes.size() - 1);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    std::vector<double> bits(static_cast<std::size_t>(num_attrs));
    for (int a = 0; a < num_attrs; ++a) bits[a] = static_cast<double>((codes[i] >> a) & 1U);
    out.world.pool.push_back({detail::padded_id('c', i, id_width), FeatureVector(std::move(bits))});
  }

  const int game_width = std::max(5, detail::digits(static_cast<std::size_t>(num_games - 1)));
  out.games.reserve(static_cast<std::size_t>(num_games));
  for (int g = 0; g < num_games; ++g) {
    std::string game_id = detail::padded_id('g', static_cast<std::size_t>(g), game_width);
    RandomStream truth_rng = derive_rng(seed, game_id, "world", "truth");
    const Candidate& truth = out.world.pool[truth_rng.uniform_index(out.world.pool.size())];
    TokenSeq caption;
    for (int a = 0; a < caption_reveal; ++a) {
      caption.emplace_back(attribute_name(a) + (attribute_present(truth.features[a]) ? "=1" : "=0"));
    }
    out.games.push_back({std::move(game_id), std::move(caption), truth.features, out.world.pool, truth.id});
  }
  return out;
}

// Replacement vocabulary for the synthetic world. Disjoint from the
// attribute grammar, so a replaced token never parses as a question,
// caption constraint or yes/no answer.
inline Vocabulary default_vocabulary() {
  static constexpr const char* kContent[] = {
      "dog",     "cat",    "man",     "woman",  "table",   "kite",    "street",   "grass",
      "sky",     "tree",   "car",     "bus",    "train",   "plate",   "pizza",    "bench",
      "water",   "beach",  "horse",   "bird",   "red",     "blue",    "green",    "white",
      "black",   "large",  "small",   "wooden", "sitting", "standing", "holding", "riding",
      "eating",  "flying", "parked",  "zebra",  "clock",   "umbrella", "window",  "room"};
  static constexpr const char* kStop[] = {"a", "an", "the", "of", "on", "in", "with", "is", "there", "and"};
  std::vector<Token> tokens, stop;
  for (const char* w : kContent) tokens.emplace_back(w);
  for (const char* w : kStop) {
    tokens.emplace_back(w);
    stop.emplace_back(w);
  }
  return Vocabulary(std::move(tokens), std::move(stop));
}

// Truthful answerer: ["yes"] / ["no"] for a well-formed question about an
// attribute inside the image, ["unknown"] otherwise.
inline TokenSeq oracle_abot_answer(const FeatureVector& image, std::span<const Token> question) {
  const auto attr = parse_attribute_question(question);
  if (!attr || *attr < 0 || static_cast<std::size_t>(*attr) >= image.dim()) return {Token("unknown")};
  return {Token(attribute_present(image[static_cast<std::size_t>(*attr)]) ? "yes" : "no")};
}

// Questioner internals -------------------------------------------------------

// Indices of pool members consistent with every constraint in the caption.
inline std::vector<std::size_t> caption_filter(std::span<const Candidate> pool, std::span<const Token> caption) {
  const auto constraints = parse_caption(caption);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& f = pool[i].features;
    const bool ok = std::all_of(constraints.begin(), constraints.end(), [&](const CaptionConstraint& c) {
      return c.attr >= 0 && static_cast<std::size_t>(c.attr) < f.dim() &&
             attribute_present(f[static_cast<std::size_t>(c.attr)]) == c.present;
    });
    if (ok) out.push_back(i);
  }
  return out;
}

// The attribute whose present/absent split of `consistent` is closest to
// balanced, ties to the lowest index. Only unasked attributes are considered
// until all have been asked; after that every attribute is eligible again.
inline int choose_attribute(std::span<const Candidate> pool, std::span<const std::size_t> consistent,
                            const std::vector<bool>& asked) {
  const bool all_asked = std::all_of(asked.begin(), asked.end(), [](bool b) { return b; });
  int best = -1;
  long best_imbalance = 0;
  for (std::size_t a = 0; a < asked.size(); ++a) {
    if (asked[a] && !all_asked) continue;
    long ones = 0;
    for (std::size_t i : consistent) ones += attribute_present(pool[i].features[a]) ? 1 : 0;
    const long imbalance = std::labs(2 * ones - static_cast<long>(consistent.size()));
    if (best < 0 || imbalance < best_imbalance) {
      best = static_cast<int>(a);
      best_imbalance = imbalance;
    }
  }
  return best;
}

// Keeps members whose attribute agrees with a yes/no answer. Any other answer
// removes nothing.
inline void filter_by_answer(std::span<const Candidate> pool, std::vector<std::size_t>& consistent, int attr,
                             std::span<const Token> answer) {
  if (answer.empty()) return;
  const std::string& a = answer.front().text();
  bool present;
  if (detail::iequals(a, "yes")) {
    present = true;
  } else if (detail::iequals(a, "no")) {
    present = false;
  } else {
    return;
  }
  std::erase_if(consistent, [&](std::size_t i) {
    return attribute_present(pool[i].features[static_cast<std::size_t>(attr)]) != present;
  });
}

// Componentwise mean of the selected members; of the whole pool when empty.
inline FeatureVector centroid(std::span<const Candidate> pool, std::span<const std::size_t> members) {
  const std::size_t dim = pool.front().features.dim();
  std::vector<double> sum(dim, 0.0);
  std::size_t count = 0;
  auto add = [&](const Candidate& c) {
    for (std::size_t d = 0; d < dim; ++d) sum[d] += c.features[d];
    ++count;
  };
  if (members.empty()) {
    for (const auto& c : pool) add(c);
  } else {
    for (std::size_t i : members) add(pool[i]);
  }
  for (auto& s : sum) s /= static_cast<double>(count);
  return FeatureVector(std::move(sum));
}

enum class QuestionerProfile { CooperativeOracle, CaptionOnly, Random };

inline std::string_view to_string(QuestionerProfile p) {
  switch (p) {
    case QuestionerProfile::CooperativeOracle: return "cooperative_oracle";
    case QuestionerProfile::CaptionOnly: return "caption_only";
    case QuestionerProfile::Random: return "random";
  }
  return "";
}

inline QuestionerProfile parse_questioner_profile(std::string_view s) {
  for (auto p : {QuestionerProfile::CooperativeOracle, QuestionerProfile::CaptionOnly, QuestionerProfile::Random}) {
    if (to_string(p) == s) return p;
  }
  throw std::invalid_argument("unknown questioner profile '" + std::string(s) + "'");
}

// Builtin Q-bot. Knows the candidate pool (as a trained model knows its image
// distribution) but not the truth.
//
//   cooperative_oracle: balanced-split questions, filters on every answer,
//                       predicts the centroid of the consistent set.
//   caption_only:       same questions, ignores answers, predicts the
//                       caption-filtered centroid every round.
//   random:             random attribute questions, Uniform[0,1) predictions.
class AttributeQuestioner final : public Questioner {
 public:
  AttributeQuestioner(std::vector<Candidate> pool, QuestionerProfile profile, std::uint64_t seed)
      : pool_(std::move(pool)), profile_(profile), rng_(seed) {
    if (pool_.empty()) throw std::invalid_argument("questioner needs a non-empty pool");
  }

  void begin_game(const std::string&, const TokenSeq& caption) override {
    consistent_ = caption_filter(pool_, caption);
    asked_.assign(pool_.front().features.dim(), false);
    pending_ = -1;
  }

  TokenSeq ask(int) override {
    if (profile_ == QuestionerProfile::Random) {
      pending_ = static_cast<int>(rng_.uniform_index(asked_.size()));
    } else {
      pending_ = choose_attribute(pool_, consistent_, asked_);
    }
    asked_[static_cast<std::size_t>(pending_)] = true;
    return attribute_question(pending_);
  }

  FeatureVector predict(int, const TokenSeq& answer) override {
    switch (profile_) {
      case QuestionerProfile::Random:
        return noise_image_features(pool_.front().features.dim(), rng_);
      case QuestionerProfile::CooperativeOracle:
        if (pending_ >= 0) filter_by_answer(pool_, consistent_, pending_, answer);
        break;
      case QuestionerProfile::CaptionOnly:
        break;
    }
    return centroid(pool_, consistent_);
  }

  void end_game(int) override {}

  std::span<const std::size_t> consistent_set() const noexcept { return consistent_; }

 private:
  std::vector<Candidate> pool_;
  QuestionerProfile profile_;
  RandomStream rng_;
  std::vector<std::size_t> consistent_;
  std::vector<bool> asked_;
  int pending_ = -1;
};

class OracleAnswerer final : public Answerer {
 public:
  void begin_game(const std::string&, const TokenSeq&, const FeatureVector&) override {}
  TokenSeq answer(int, const TokenSeq& question, const FeatureVector& image) override {
    return oracle_abot_answer(image, question);
  }
  void end_game(int) override {}
};

class BuiltinQuestionerBackend final : public QuestionerBackend {
 public:
  explicit BuiltinQuestionerBackend(QuestionerProfile profile) : profile_(profile) {}
  void open(int) override {}
  std::unique_ptr<Questioner> session(int, const GameInstance& game, std::uint64_t seed) override {
    return std::make_unique<AttributeQuestioner>(game.pool, profile_, seed);
  }

 private:
  QuestionerProfile profile_;
};

class OracleAnswererBackend final : public AnswererBackend {
 public:
  void open(int) override {}
  std::unique_ptr<Answerer> session(int, const GameInstance&) override {
    return std::make_unique<OracleAnswerer>();
  }
};

}  // namespace vdprobe
