#pragma once

// Percentile rank of the ground-truth candidate, mean percentile rank (MPR)
// and gap summaries.

#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vdprobe/types.hpp"

namespace vdprobe {

enum class Distance { Euclidean, Cosine };

inline std::string_view to_string(Distance d) { return d == Distance::Cosine ? "cosine" : "euclidean"; }

inline Distance parse_distance(std::string_view s) {
  if (s == "euclidean") return Distance::Euclidean;
  if (s == "cosine") return Distance::Cosine;
  throw std::invalid_argument("unknown distance '" + std::string(s) + "'");
}

// Monotone in the true distance, which is all ranking needs: Euclidean is
// returned squared. Cosine distance is 1 - cos, and 1 when either vector is zero.
inline double ranking_distance(std::span<const double> a, std::span<const double> b, Distance d) {
  if (a.size() != b.size()) throw std::invalid_argument("dimension mismatch");
  if (d == Distance::Euclidean) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double diff = a[i] - b[i];
      s += diff * diff;
    }
    return s;
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 1.0;
  return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

// 100 * (F + T/2) / (|pool| - 1): F distractors strictly farther from the
// prediction than the truth, T exactly tied with it.
inline double percentile_rank(const FeatureVector& prediction, std::span<const Candidate> pool,
                              std::string_view truth_id, Distance distance = Distance::Euclidean) {
  if (pool.size() < 2) throw std::invalid_argument("percentile rank needs a pool of >= 2 candidates");
  const Candidate* truth = nullptr;
  for (const auto& c : pool) {
    if (c.features.dim() != prediction.dim()) {
      throw std::invalid_argument("prediction dimension " + std::to_string(prediction.dim()) +
                                  " does not match candidate " + c.id);
    }
    if (c.id == truth_id) {
      if (truth) throw std::invalid_argument("truth id occurs more than once in the pool");
      truth = &c;
    }
  }
  if (!truth) throw std::invalid_argument("truth id '" + std::string(truth_id) + "' not in pool");

  const double truth_dist = ranking_distance(prediction.values(), truth->features.values(), distance);
  std::size_t farther = 0, tied = 0;
  for (const auto& c : pool) {
    if (&c == truth) continue;
    const double d = ranking_distance(prediction.values(), c.features.values(), distance);
    if (d > truth_dist) {
      ++farther;
    } else if (d == truth_dist) {
      ++tied;
    }
  }
  return 100.0 * (static_cast<double>(farther) + 0.5 * static_cast<double>(tied)) /
         static_cast<double>(pool.size() - 1);
}

inline double mean_percentile_rank(std::span<const double> percentiles) {
  if (percentiles.empty()) throw std::invalid_argument("mean percentile rank of an empty list");
  for (double p : percentiles) {
    if (!(p >= 0.0 && p <= 100.0)) throw std::invalid_argument("percentile outside [0,100]");
  }
  return std::accumulate(percentiles.begin(), percentiles.end(), 0.0) /
         static_cast<double>(percentiles.size());
}

// Per-round MPR of one condition. per_round_mpr[i] belongs to round i + 1.
struct RankSeries {
  std::string condition_name;
  std::vector<double> per_round_mpr;
  int num_games = 0;

  int rounds() const noexcept { return static_cast<int>(per_round_mpr.size()); }

  double at(int round) const {
    if (round < 1 || round > rounds()) {
      throw std::out_of_range("series '" + condition_name + "' has no round " + std::to_string(round));
    }
    return per_round_mpr[static_cast<std::size_t>(round - 1)];
  }

  friend bool operator==(const RankSeries&, const RankSeries&) = default;
};

// Positive when the condition scored below the baseline.
inline double gap_at_round(const RankSeries& baseline, const RankSeries& condition, int round) {
  return baseline.at(round) - condition.at(round);
}

}  // namespace vdprobe
