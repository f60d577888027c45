// Copyright 2026 The mmel Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Scoring interface shared by every ranking strategy, plus the argmax linking
// rule and accuracy.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "mmel/candgen.hpp"
#include "mmel/corpus.hpp"

namespace mmel {

enum class TieBreak {
  // followers desc, friends desc, tweet_count desc, screen name asc
  kPopularity,
  // followers desc, screen name asc
  kFollowersThenName,
};

class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::string name() const = 0;
  /// One score per candidate, in candidate order; higher is better.
  virtual std::vector<double> scores(const MentionRecord& mention,
                                     const CandidateSet& candidates) const = 0;
  virtual TieBreak tie_break() const { return TieBreak::kPopularity; }
};

/// Candidates sorted by score descending, ties resolved by `tb`. The result
/// does not depend on the input order of `candidates`.
inline CandidateSet rank_candidates(const CandidateSet& candidates,
                                    const std::vector<double>& scores,
                                    const KnowledgeBase& kb, TieBreak tb) {
  if (scores.size() != candidates.size()) {
    throw NumericError("rank: " + std::to_string(scores.size()) + " scores for " +
                       std::to_string(candidates.size()) + " candidates");
  }
  for (double s : scores) {
    if (std::isnan(s)) throw NumericError("rank: NaN score for mention " + candidates.tweet_id);
  }
  std::vector<size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    const Entity& x = kb.entity(candidates.candidates[a].screen_name);
    const Entity& y = kb.entity(candidates.candidates[b].screen_name);
    if (x.followers != y.followers) return x.followers > y.followers;
    if (tb == TieBreak::kPopularity) {
      if (x.friends != y.friends) return x.friends > y.friends;
      if (x.tweet_count != y.tweet_count) return x.tweet_count > y.tweet_count;
    }
    return x.screen_name < y.screen_name;
  });
  CandidateSet out;
  out.tweet_id = candidates.tweet_id;
  out.candidates.reserve(order.size());
  for (size_t i : order) {
    out.candidates.push_back({candidates.candidates[i].screen_name, scores[i]});
  }
  return out;
}

inline CandidateSet rank(const Scorer& scorer, const MentionRecord& mention,
                         const CandidateSet& candidates, const KnowledgeBase& kb) {
  if (candidates.empty()) return candidates;
  return rank_candidates(candidates, scorer.scores(mention, candidates), kb,
                         scorer.tie_break());
}

/// Top-ranked candidate; nullopt iff the candidate set is empty.
inline std::optional<std::string> link(const MentionRecord& mention,
                                       const CandidateIndex& index, const KnowledgeBase& kb,
                                       const Scorer& scorer) {
  const CandidateSet c = index.candidates(mention);
  if (c.empty()) return std::nullopt;
  return rank(scorer, mention, c, kb).candidates.front().screen_name;
}

struct AccuracyResult {
  double accuracy = 0.0;
  size_t n = 0;
  size_t correct = 0;
  size_t empty_candidates = 0;  // counted as misses
};

inline AccuracyResult accuracy(const std::vector<MentionRecord>& section,
                               const CandidateIndex& index, const KnowledgeBase& kb,
                               const Scorer& scorer) {
  if (section.empty()) throw DataError("accuracy: empty evaluation section");
  AccuracyResult r;
  r.n = section.size();
  for (const auto& m : section) {
    const CandidateSet c = index.candidates(m);
    if (c.empty()) {
      ++r.empty_candidates;
      continue;
    }
    if (rank(scorer, m, c, kb).candidates.front().screen_name == m.gold) ++r.correct;
  }
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.n);
  return r;
}

}  // namespace mmel
