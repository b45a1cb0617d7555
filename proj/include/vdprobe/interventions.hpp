#pragma once

// Intervention operators. All are pure functions of their inputs and the
// random stream they are handed.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "vdprobe/rng.hpp"
#include "vdprobe/types.hpp"

namespace vdprobe {

// Sampling domain for replacement tokens. Order is first-occurrence order of
// the input; duplicates are dropped.
class Vocabulary {
 public:
  explicit Vocabulary(std::vector<Token> tokens, std::vector<Token> stopwords = {}) {
    for (auto& t : tokens) {
      if (index_.emplace(t.text(), tokens_.size()).second) tokens_.push_back(std::move(t));
    }
    if (tokens_.empty()) throw std::invalid_argument("vocabulary must be non-empty");
    for (const auto& s : stopwords) {
      if (!index_.contains(s.text())) {
        throw std::invalid_argument("stopword '" + s.text() + "' is not in the vocabulary");
      }
      stop_.emplace(s.text(), 0);
    }
    for (const auto& t : tokens_) {
      if (!stop_.contains(t.text())) {
        content_index_.emplace(t.text(), content_.size());
        content_.push_back(t);
      }
    }
  }

  std::span<const Token> tokens() const noexcept { return tokens_; }
  std::span<const Token> content_words() const noexcept { return content_; }
  std::size_t size() const noexcept { return tokens_.size(); }
  bool is_stopword(const Token& t) const { return stop_.contains(t.text()); }

  std::vector<Token> stopwords() const {
    std::vector<Token> out;
    for (const auto& t : tokens_) {
      if (is_stopword(t)) out.push_back(t);
    }
    return out;
  }

  // Index of `t` in tokens() / content_words(), if present.
  std::optional<std::size_t> index_of(const Token& t) const { return find(index_, t); }
  std::optional<std::size_t> content_index_of(const Token& t) const { return find(content_index_, t); }

  // Stable fingerprint of tokens and stopword flags, as 16 hex digits.
  std::string digest() const {
    std::string canon;
    for (const auto& t : tokens_) {
      canon += t.text();
      canon += is_stopword(t) ? "\x01" : "\x02";
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::uint64_t h = stable_hash(canon);
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, h >>= 4) out[i] = kHex[h & 0xf];
    return out;
  }

 private:
  using Index = std::unordered_map<std::string, std::size_t>;

  static std::optional<std::size_t> find(const Index& idx, const Token& t) {
    auto it = idx.find(t.text());
    if (it == idx.end()) return std::nullopt;
    return it->second;
  }

  std::vector<Token> tokens_;
  std::vector<Token> content_;
  Index index_;
  Index content_index_;
  Index stop_;
};

namespace detail {

// Uniform draw from `domain` minus `original`. `original_index` is its
// position in `domain`, if it occurs there.
inline Token draw_excluding(std::span<const Token> domain, std::optional<std::size_t> original_index,
                            RandomStream& rng) {
  const std::size_t n = domain.size() - (original_index ? 1 : 0);
  if (n == 0) throw std::invalid_argument("no replacement token distinct from the original");
  std::size_t k = rng.uniform_index(n);
  if (original_index && k >= *original_index) ++k;
  return domain[k];
}

inline void check_probability(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("p must be in [0,1]");
}

}  // namespace detail

// Each position is replaced with probability p by a token drawn uniformly from
// the vocabulary minus the token already there.
inline TokenSeq perturb_tokens(std::span<const Token> tokens, double p, const Vocabulary& vocab,
                               RandomStream& rng) {
  detail::check_probability(p);
  if (vocab.size() < 2) throw std::invalid_argument("token replacement needs a vocabulary of >= 2 tokens");
  TokenSeq out(tokens.begin(), tokens.end());
  for (auto& tok : out) {
    if (rng.bernoulli(p)) tok = detail::draw_excluding(vocab.tokens(), vocab.index_of(tok), rng);
  }
  return out;
}

// With content_only, stopword positions are left alone and replacements come
// from the content words only.
inline TokenSeq perturb_caption(std::span<const Token> caption, double p, const Vocabulary& vocab,
                                bool content_only, RandomStream& rng) {
  if (!content_only) return perturb_tokens(caption, p, vocab, rng);
  detail::check_probability(p);
  if (vocab.size() < 2) throw std::invalid_argument("token replacement needs a vocabulary of >= 2 tokens");
  if (vocab.content_words().empty()) throw std::invalid_argument("vocabulary has no content words");
  TokenSeq out(caption.begin(), caption.end());
  for (auto& tok : out) {
    if (vocab.is_stopword(tok)) continue;
    if (rng.bernoulli(p)) {
      tok = detail::draw_excluding(vocab.content_words(), vocab.content_index_of(tok), rng);
    }
  }
  return out;
}

// dim independent Uniform[0,1) draws.
inline FeatureVector noise_image_features(std::size_t dim, RandomStream& rng) {
  if (dim == 0) throw std::invalid_argument("noise vector needs dim >= 1");
  std::vector<double> v(dim);
  for (auto& x : v) x = rng.uniform01();
  return FeatureVector(std::move(v));
}

namespace detail {
inline bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
         });
}
}  // namespace detail

// yes <-> no, case-insensitive, at every position. Swapped tokens come out lowercase.
inline TokenSeq negate_answer(std::span<const Token> answer) {
  TokenSeq out;
  out.reserve(answer.size());
  for (const auto& t : answer) {
    if (detail::iequals(t.text(), "yes")) {
      out.emplace_back("no");
    } else if (detail::iequals(t.text(), "no")) {
      out.emplace_back("yes");
    } else {
      out.push_back(t);
    }
  }
  return out;
}

enum class Stage { CaptionIn, QuestionInTransit, AnswerInTransit, ImageAtRound };

inline std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::CaptionIn: return "caption";
    case Stage::QuestionInTransit: return "question";
    case Stage::AnswerInTransit: return "answer";
    case Stage::ImageAtRound: return "image";
  }
  return "";
}

using Payload = std::variant<TokenSeq, FeatureVector>;

// The answerer's image view once an Image intervention has fired. It persists
// for the rest of the game.
struct HeldImage {
  std::optional<FeatureVector> view;
};

// Whether `spec` acts on `stage` at `round`.
inline bool acts_on(const InterventionSpec& spec, Stage stage, int round) {
  if (!spec.active_at(round)) return false;
  switch (stage) {
    case Stage::CaptionIn: return spec.target == Target::Caption;
    case Stage::QuestionInTransit: return spec.target == Target::Question;
    case Stage::AnswerInTransit: return spec.target == Target::Answer || spec.target == Target::Negation;
    case Stage::ImageAtRound: return spec.target == Target::Image;
  }
  return false;
}

// Routes a payload through the operator matching (stage, spec.target) when the
// spec is active at `round`; otherwise returns it unchanged. For the image
// stage, the first active round draws noise (each component replaced with
// probability p, so p = 1 noises the whole vector) and every later call
// returns that same vector.
inline Payload apply_intervention(Stage stage, Payload payload, const InterventionSpec& spec, int round,
                                  const Vocabulary& vocab, RandomStream& rng, HeldImage& held) {
  if (stage == Stage::ImageAtRound) {
    const auto* image = std::get_if<FeatureVector>(&payload);
    if (!image) throw std::invalid_argument("image stage expects a feature vector payload");
    if (held.view) return *held.view;
    if (!acts_on(spec, stage, round)) return payload;
    detail::check_probability(spec.p);
    const FeatureVector noise = noise_image_features(image->dim(), rng);
    std::vector<double> mixed(image->values().begin(), image->values().end());
    for (std::size_t i = 0; i < mixed.size(); ++i) {
      if (spec.p >= 1.0 || rng.bernoulli(spec.p)) mixed[i] = noise[i];
    }
    held.view = FeatureVector(std::move(mixed));
    return *held.view;
  }

  const auto* tokens = std::get_if<TokenSeq>(&payload);
  if (!tokens) throw std::invalid_argument("token stage expects a token payload");
  if (!acts_on(spec, stage, round)) return payload;
  switch (stage) {
    case Stage::CaptionIn:
      return perturb_caption(*tokens, spec.p, vocab, spec.content_only, rng);
    case Stage::QuestionInTransit:
      return perturb_tokens(*tokens, spec.p, vocab, rng);
    case Stage::AnswerInTransit:
      if (spec.target == Target::Negation) return negate_answer(*tokens);
      return perturb_tokens(*tokens, spec.p, vocab, rng);
    case Stage::ImageAtRound:
      break;
  }
  return payload;
}

}  // namespace vdprobe
