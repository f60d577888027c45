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

#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "mmel/common.hpp"
#include "mmel/corpus.hpp"

namespace mmel {

/// Casefolds, deletes punctuation and splits on whitespace.
/// "Andrew Y. Ng" -> {"andrew", "y", "ng"}.
inline std::vector<std::string> normalize_name(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (is_word_byte(u)) {
      cleaned.push_back(ascii_lower(c));
    } else if (std::isspace(u)) {
      cleaned.push_back(' ');
    }
  }
  return split_whitespace(cleaned);
}

struct Candidate {
  std::string screen_name;
  std::optional<double> score;

  bool operator==(const Candidate&) const = default;
};

struct CandidateSet {
  std::string tweet_id;  // the mention this set belongs to
  std::vector<Candidate> candidates;

  bool empty() const { return candidates.empty(); }
  size_t size() const { return candidates.size(); }
  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(candidates.size());
    for (const auto& c : candidates) out.push_back(c.screen_name);
    return out;
  }
  bool contains(const std::string& screen_name) const {
    return std::any_of(candidates.begin(), candidates.end(),
                       [&](const Candidate& c) { return c.screen_name == screen_name; });
  }

  // Score descending (unscored last), then screen name ascending.
  void sort_default() {
    std::sort(candidates.begin(), candidates.end(),
              [](const Candidate& a, const Candidate& b) {
                const double sa = a.score.value_or(-HUGE_VAL);
                const double sb = b.score.value_or(-HUGE_VAL);
                if (sa != sb) return sa > sb;
                return a.screen_name < b.screen_name;
              });
  }
};

/// Inverted index from normalized user-name tokens to entities, so candidate
/// lookup does not scan the KB.
class CandidateIndex {
 public:
  explicit CandidateIndex(const KnowledgeBase& kb) {
    for (const auto& [screen, e] : kb.entities) {
      for (auto& tok : normalize_name(e.user_name)) postings_[tok].insert(screen);
    }
  }

  /// Entities whose normalized user name contains every normalized mention
  /// token; sorted by screen name. May be empty.
  CandidateSet candidates(const MentionRecord& mention) const {
    CandidateSet out;
    out.tweet_id = mention.tweet_id;
    std::vector<std::string> tokens;
    for (const auto& w : mention.words) {
      for (auto& t : normalize_name(w)) tokens.push_back(std::move(t));
    }
    if (tokens.empty()) return out;
    std::vector<const std::set<std::string>*> lists;
    for (const auto& t : tokens) {
      auto it = postings_.find(t);
      if (it == postings_.end()) return out;
      lists.push_back(&it->second);
    }
    std::sort(lists.begin(), lists.end(),
              [](auto* a, auto* b) { return a->size() < b->size(); });
    for (const auto& name : *lists.front()) {
      bool all = true;
      for (size_t i = 1; i < lists.size() && all; ++i) all = lists[i]->count(name) > 0;
      if (all) out.candidates.push_back({name, std::nullopt});
    }
    return out;
  }

 private:
  std::unordered_map<std::string, std::set<std::string>> postings_;
};

inline CandidateSet candidates(const MentionRecord& mention, const KnowledgeBase& kb) {
  return CandidateIndex(kb).candidates(mention);
}

// Optional on-disk cache: {"tweet_id", "candidates": [names]} per line.
inline void save_candidate_cache(const std::string& path,
                                 const std::vector<CandidateSet>& sets) {
  std::string out;
  for (const auto& s : sets) {
    nlohmann::ordered_json j;
    j["tweet_id"] = s.tweet_id;
    j["candidates"] = s.names();
    out += j.dump() + "\n";
  }
  write_file(path, out);
}

inline std::vector<CandidateSet> load_candidate_cache(const std::string& path) {
  std::vector<CandidateSet> out;
  for_each_line(path, [&](const std::string& line, size_t n) {
    auto j = detail::parse_line(line, n, path);
    CandidateSet s;
    s.tweet_id = detail::json_get<std::string>(j, "tweet_id", n, path);
    for (auto& name : detail::json_get<std::vector<std::string>>(j, "candidates", n, path)) {
      s.candidates.push_back({std::move(name), std::nullopt});
    }
    out.push_back(std::move(s));
  });
  return out;
}

}  // namespace mmel
