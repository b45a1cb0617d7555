#pragma once

// Small builders shared by the unit tests.

#include <string>
#include <vector>

#include "vdprobe/vdprobe.hpp"

namespace testing_support {

using vdprobe::Candidate;
using vdprobe::FeatureVector;
using vdprobe::TokenSeq;

inline FeatureVector fv(std::vector<double> v) { return FeatureVector(std::move(v)); }

inline TokenSeq toks(std::string_view text) { return vdprobe::tokenize(text); }

// 1-D pool; the first value is the truth "t", the rest are "d0", "d1", ...
inline std::vector<Candidate> line_pool(double truth, std::vector<double> others) {
  std::vector<Candidate> pool{{"t", fv({truth})}};
  for (std::size_t i = 0; i < others.size(); ++i) pool.push_back({"d" + std::to_string(i), fv({others[i]})});
  return pool;
}

inline vdprobe::RankSeries series(std::string name, std::vector<double> mpr, int games = 1) {
  return {std::move(name), std::move(mpr), games};
}

inline vdprobe::InterventionSpec spec(vdprobe::Target t, double p, std::set<int> rounds) {
  vdprobe::InterventionSpec s;
  s.target = t;
  s.p = p;
  s.rounds = std::move(rounds);
  return s;
}

}  // namespace testing_support
