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

// Domain model and JSONL persistence for tweets, entities, knowledge bases,
// mentions and dataset splits.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmel/common.hpp"

namespace mmel {

struct Tweet {
  std::string id;
  std::string author;  // screen name, no "@"
  std::string text;
  std::optional<std::string> image_ref;
  bool is_retweet = false;

  bool operator==(const Tweet&) const = default;
};

enum class EntityKind { kPerson, kOrganization };

inline std::string to_string(EntityKind k) {
  return k == EntityKind::kPerson ? "person" : "organization";
}

inline EntityKind parse_entity_kind(const std::string& s) {
  if (s == "person") return EntityKind::kPerson;
  if (s == "organization") return EntityKind::kOrganization;
  throw DataError("unknown entity kind '" + s + "'");
}

struct Entity {
  std::string screen_name;
  std::string user_name;
  EntityKind kind = EntityKind::kPerson;
  int64_t followers = 0;
  int64_t friends = 0;
  int64_t tweet_count = 0;
  std::vector<std::string> timeline;  // tweet ids

  bool operator==(const Entity&) const = default;
};

// Screen names are stored bare; this is the display form.
inline std::string render_handle(const std::string& screen_name) {
  return "@" + screen_name;
}

struct MentionRecord {
  std::vector<std::string> words;
  std::string tweet_id;
  std::string gold;

  bool operator==(const MentionRecord&) const = default;
};

struct KnowledgeBase {
  std::map<std::string, Entity> entities;
  std::map<std::string, Tweet> tweets;

  const Entity& entity(const std::string& screen_name) const {
    auto it = entities.find(screen_name);
    if (it == entities.end()) throw DataError("unknown entity " + screen_name);
    return it->second;
  }
  const Tweet& tweet(const std::string& id) const {
    auto it = tweets.find(id);
    if (it == tweets.end()) throw DataError("unknown tweet " + id);
    return it->second;
  }
  bool has_entity(const std::string& s) const { return entities.count(s) > 0; }

  bool operator==(const KnowledgeBase&) const = default;
};

struct DatasetSplit {
  std::vector<MentionRecord> train;
  std::vector<MentionRecord> valid;
  std::vector<MentionRecord> test;

  bool operator==(const DatasetSplit&) const = default;
};

enum class SplitSection { kTrain, kValid, kTest };

inline std::string to_string(SplitSection s) {
  switch (s) {
    case SplitSection::kTrain: return "train";
    case SplitSection::kValid: return "valid";
    case SplitSection::kTest: return "test";
  }
  return "?";
}

inline const std::vector<MentionRecord>& section(const DatasetSplit& split,
                                                 SplitSection s) {
  switch (s) {
    case SplitSection::kTrain: return split.train;
    case SplitSection::kValid: return split.valid;
    default: return split.test;
  }
}

struct Violation {
  std::string subject;  // entity screen name or tweet id
  std::string rule;
  std::string message;

  bool operator==(const Violation&) const = default;
};

namespace rules {
inline constexpr const char* kEmptyText = "tweet.empty_text";
inline constexpr const char* kTweetIdMismatch = "tweet.id_mismatch";
inline constexpr const char* kScreenNameMismatch = "entity.key_mismatch";
inline constexpr const char* kNegativeCount = "entity.negative_count";
inline constexpr const char* kDangling = "timeline.dangling";
inline constexpr const char* kForeignAuthor = "timeline.author";
inline constexpr const char* kNoImage = "timeline.no_image";
inline constexpr const char* kRetweet = "timeline.retweet";
inline constexpr const char* kDuplicate = "timeline.duplicate";
inline constexpr const char* kMentionUnknownTweet = "mention.unknown_tweet";
inline constexpr const char* kMentionUnknownGold = "mention.unknown_gold";
inline constexpr const char* kMentionNoImage = "mention.no_image";
inline constexpr const char* kMentionInGoldTimeline = "mention.in_gold_timeline";
inline constexpr const char* kMentionSelfAuthored = "mention.self_authored";
inline constexpr const char* kMentionEmpty = "mention.empty_words";
}  // namespace rules

/// Checks every KB invariant, plus the mention invariants for `mentions`.
/// Violations come back in a deterministic order: entities by screen name,
/// then tweets by id, then mentions in input order.
inline std::vector<Violation> validate_kb(
    const KnowledgeBase& kb, const std::vector<MentionRecord>& mentions = {}) {
  std::vector<Violation> out;
  for (const auto& [key, e] : kb.entities) {
    if (key != e.screen_name) {
      out.push_back({key, rules::kScreenNameMismatch,
                     "map key differs from screen_name '" + e.screen_name + "'"});
    }
    if (e.followers < 0 || e.friends < 0 || e.tweet_count < 0) {
      out.push_back({key, rules::kNegativeCount, "popularity count below zero"});
    }
    std::set<std::string> seen;
    for (const auto& id : e.timeline) {
      if (!seen.insert(id).second) {
        out.push_back({key, rules::kDuplicate, "tweet " + id + " listed twice"});
        continue;
      }
      auto it = kb.tweets.find(id);
      if (it == kb.tweets.end()) {
        out.push_back({key, rules::kDangling, "timeline tweet " + id + " does not exist"});
        continue;
      }
      const Tweet& t = it->second;
      if (t.author != e.screen_name) {
        out.push_back({key, rules::kForeignAuthor,
                       "timeline tweet " + id + " authored by " + t.author});
      }
      if (!t.image_ref) {
        out.push_back({key, rules::kNoImage, "timeline tweet " + id + " has no image"});
      }
      if (t.is_retweet) {
        out.push_back({key, rules::kRetweet, "timeline tweet " + id + " is a retweet"});
      }
    }
  }
  for (const auto& [id, t] : kb.tweets) {
    if (id != t.id || id.empty()) {
      out.push_back({id, rules::kTweetIdMismatch, "tweet key/id mismatch"});
    }
    if (trim(t.text).empty()) {
      out.push_back({id, rules::kEmptyText, "tweet text is empty"});
    }
  }
  for (size_t i = 0; i < mentions.size(); ++i) {
    const MentionRecord& m = mentions[i];
    const std::string subject = m.tweet_id.empty() ? "mention#" + std::to_string(i)
                                                    : m.tweet_id;
    if (m.words.empty()) {
      out.push_back({subject, rules::kMentionEmpty, "mention has no words"});
    }
    auto tit = kb.tweets.find(m.tweet_id);
    if (tit == kb.tweets.end()) {
      out.push_back({subject, rules::kMentionUnknownTweet, "host tweet missing"});
    } else if (!tit->second.image_ref) {
      out.push_back({subject, rules::kMentionNoImage, "host tweet has no image"});
    }
    auto eit = kb.entities.find(m.gold);
    if (eit == kb.entities.end()) {
      out.push_back({subject, rules::kMentionUnknownGold, "gold entity " + m.gold + " not in KB"});
      continue;
    }
    const auto& tl = eit->second.timeline;
    if (std::find(tl.begin(), tl.end(), m.tweet_id) != tl.end()) {
      out.push_back({subject, rules::kMentionInGoldTimeline,
                     "host tweet belongs to the timeline of " + m.gold});
    }
    if (tit != kb.tweets.end() && tit->second.author == m.gold) {
      out.push_back({subject, rules::kMentionSelfAuthored,
                     "host tweet is authored by the gold entity"});
    }
  }
  return out;
}

namespace detail {

template <typename T>
T json_get(const nlohmann::json& j, const char* key, size_t line,
           const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw DataError(path + ":" + std::to_string(line) + ": missing field '" +
                    key + "'");
  }
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(path + ":" + std::to_string(line) + ": field '" + key +
                    "': " + ex.what());
  }
}

inline nlohmann::json parse_line(const std::string& line, size_t n,
                                 const std::string& path) {
  try {
    auto j = nlohmann::json::parse(line);
    if (!j.is_object()) throw DataError(path + ":" + std::to_string(n) + ": not an object");
    return j;
  } catch (const nlohmann::json::parse_error& ex) {
    throw DataError(path + ":" + std::to_string(n) + ": parse error: " + ex.what());
  }
}

inline std::string strip_at(std::string s) {
  if (!s.empty() && s.front() == '@') s.erase(0, 1);
  return s;
}

inline constexpr const char* kKbFormat = "mmel.kb";
inline constexpr const char* kTweetsFormat = "mmel.tweets";
inline constexpr const char* kMentionsFormat = "mmel.mentions";

inline nlohmann::ordered_json manifest(const char* format, size_t count) {
  nlohmann::ordered_json m;
  m["format"] = format;
  m["version"] = 1;
  m["count"] = count;
  return m;
}

// Returns true if the line is a manifest of the expected format.
inline bool check_manifest(const nlohmann::json& j, const char* format,
                           size_t line, const std::string& path,
                           std::optional<size_t>* count) {
  auto it = j.find("format");
  if (it == j.end()) return false;
  if (*it != format) {
    throw DataError(path + ":" + std::to_string(line) + ": expected format " +
                    format);
  }
  if (j.contains("count")) *count = j["count"].get<size_t>();
  return true;
}

}  // namespace detail

inline Tweet tweet_from_json(const nlohmann::json& j, size_t line,
                             const std::string& path) {
  Tweet t;
  t.id = detail::json_get<std::string>(j, "id", line, path);
  t.author = detail::strip_at(detail::json_get<std::string>(j, "author", line, path));
  t.text = detail::json_get<std::string>(j, "text", line, path);
  if (j.contains("image") && !j["image"].is_null()) {
    t.image_ref = detail::json_get<std::string>(j, "image", line, path);
  }
  if (j.contains("retweet")) t.is_retweet = detail::json_get<bool>(j, "retweet", line, path);
  return t;
}

inline nlohmann::ordered_json tweet_to_json(const Tweet& t) {
  nlohmann::ordered_json j;
  j["id"] = t.id;
  j["author"] = t.author;
  j["text"] = t.text;
  if (t.image_ref) j["image"] = *t.image_ref;
  j["retweet"] = t.is_retweet;
  return j;
}

inline std::vector<Tweet> load_tweets(const std::string& path) {
  std::vector<Tweet> out;
  std::optional<size_t> count;
  for_each_line(path, [&](const std::string& line, size_t n) {
    auto j = detail::parse_line(line, n, path);
    if (detail::check_manifest(j, detail::kTweetsFormat, n, path, &count)) return;
    out.push_back(tweet_from_json(j, n, path));
  });
  if (count && *count != out.size()) {
    throw DataError(path + ": manifest count " + std::to_string(*count) +
                    " but " + std::to_string(out.size()) + " records");
  }
  return out;
}

inline void save_tweets(const std::string& path, std::vector<Tweet> tweets) {
  std::sort(tweets.begin(), tweets.end(),
            [](const Tweet& a, const Tweet& b) { return a.id < b.id; });
  std::string out = detail::manifest(detail::kTweetsFormat, tweets.size()).dump() + "\n";
  for (const auto& t : tweets) out += tweet_to_json(t).dump() + "\n";
  write_file(path, out);
}

/// Loads entities from `kb_path` and tweets from `tweets_path`.
/// Throws DataError on parse errors (with line numbers), duplicate screen
/// names or tweet ids, and any invariant violation.
inline KnowledgeBase load_kb(const std::string& kb_path,
                             const std::string& tweets_path) {
  KnowledgeBase kb;
  for (auto& t : load_tweets(tweets_path)) {
    const std::string id = t.id;
    if (!kb.tweets.emplace(id, std::move(t)).second) {
      throw DataError(tweets_path + ": duplicate tweet id " + id);
    }
  }
  std::optional<size_t> count;
  std::map<std::string, size_t> first_line;
  for_each_line(kb_path, [&](const std::string& line, size_t n) {
    auto j = detail::parse_line(line, n, kb_path);
    if (detail::check_manifest(j, detail::kKbFormat, n, kb_path, &count)) return;
    Entity e;
    e.screen_name = detail::strip_at(detail::json_get<std::string>(j, "screen_name", n, kb_path));
    e.user_name = detail::json_get<std::string>(j, "user_name", n, kb_path);
    e.kind = parse_entity_kind(detail::json_get<std::string>(j, "kind", n, kb_path));
    e.followers = detail::json_get<int64_t>(j, "followers", n, kb_path);
    e.friends = detail::json_get<int64_t>(j, "friends", n, kb_path);
    e.tweet_count = detail::json_get<int64_t>(j, "tweet_count", n, kb_path);
    e.timeline = detail::json_get<std::vector<std::string>>(j, "timeline", n, kb_path);
    if (e.screen_name.empty()) {
      throw DataError(kb_path + ":" + std::to_string(n) + ": empty screen_name");
    }
    auto [it, inserted] = first_line.emplace(e.screen_name, n);
    if (!inserted) {
      throw DataError(kb_path + ":" + std::to_string(n) + ": duplicate screen_name '" +
                      e.screen_name + "' (first seen on line " +
                      std::to_string(it->second) + ")");
    }
    kb.entities.emplace(e.screen_name, std::move(e));
  });
  if (count && *count != kb.entities.size()) {
    throw DataError(kb_path + ": manifest count " + std::to_string(*count) +
                    " but " + std::to_string(kb.entities.size()) + " records");
  }
  auto violations = validate_kb(kb);
  if (!violations.empty()) {
    const auto& v = violations.front();
    throw DataError(kb_path + ": " + v.rule + " (" + v.subject + "): " + v.message +
                    (violations.size() > 1
                         ? " [+" + std::to_string(violations.size() - 1) + " more]"
                         : ""));
  }
  return kb;
}

inline nlohmann::ordered_json entity_to_json(const Entity& e) {
  nlohmann::ordered_json j;
  j["screen_name"] = e.screen_name;
  j["user_name"] = e.user_name;
  j["kind"] = to_string(e.kind);
  j["followers"] = e.followers;
  j["friends"] = e.friends;
  j["tweet_count"] = e.tweet_count;
  j["timeline"] = e.timeline;
  return j;
}

/// Writes entities (sorted by screen name) and tweets (sorted by id).
/// Each file opens with a manifest line; output is byte-deterministic.
inline void save_kb(const KnowledgeBase& kb, const std::string& kb_path,
                    const std::string& tweets_path) {
  std::string out = detail::manifest(detail::kKbFormat, kb.entities.size()).dump() + "\n";
  for (const auto& [_, e] : kb.entities) out += entity_to_json(e).dump() + "\n";
  write_file(kb_path, out);
  std::vector<Tweet> tweets;
  tweets.reserve(kb.tweets.size());
  for (const auto& [_, t] : kb.tweets) tweets.push_back(t);
  save_tweets(tweets_path, std::move(tweets));
}

inline void save_kb(const KnowledgeBase& kb, const std::string& dir) {
  save_kb(kb, dir + "/kb.jsonl", dir + "/tweets.jsonl");
}

inline KnowledgeBase load_kb(const std::string& dir) {
  return load_kb(dir + "/kb.jsonl", dir + "/tweets.jsonl");
}

// --- mentions ----------------------------------------------------------------

inline nlohmann::ordered_json mention_to_json(const MentionRecord& m,
                                              std::optional<SplitSection> split) {
  nlohmann::ordered_json j;
  j["mention"] = m.words;
  j["tweet_id"] = m.tweet_id;
  j["gold"] = m.gold;
  if (split) j["split"] = to_string(*split);
  return j;
}

struct MentionLine {
  MentionRecord record;
  std::optional<SplitSection> split;
};

inline std::vector<MentionLine> load_mention_lines(const std::string& path) {
  std::vector<MentionLine> out;
  std::optional<size_t> count;
  for_each_line(path, [&](const std::string& line, size_t n) {
    auto j = detail::parse_line(line, n, path);
    if (detail::check_manifest(j, detail::kMentionsFormat, n, path, &count)) return;
    MentionLine ml;
    ml.record.words = detail::json_get<std::vector<std::string>>(j, "mention", n, path);
    ml.record.tweet_id = detail::json_get<std::string>(j, "tweet_id", n, path);
    ml.record.gold = detail::strip_at(detail::json_get<std::string>(j, "gold", n, path));
    if (j.contains("split") && !j["split"].is_null()) {
      const auto s = detail::json_get<std::string>(j, "split", n, path);
      if (s == "train") ml.split = SplitSection::kTrain;
      else if (s == "valid") ml.split = SplitSection::kValid;
      else if (s == "test") ml.split = SplitSection::kTest;
      else throw DataError(path + ":" + std::to_string(n) + ": unknown split '" + s + "'");
    }
    out.push_back(std::move(ml));
  });
  if (count && *count != out.size()) {
    throw DataError(path + ": manifest count " + std::to_string(*count) +
                    " but " + std::to_string(out.size()) + " records");
  }
  return out;
}

inline std::vector<MentionRecord> load_mentions(const std::string& path) {
  std::vector<MentionRecord> out;
  for (auto& ml : load_mention_lines(path)) out.push_back(std::move(ml.record));
  return out;
}

inline void save_mentions(const std::string& path,
                          const std::vector<MentionRecord>& mentions) {
  std::string out = detail::manifest(detail::kMentionsFormat, mentions.size()).dump() + "\n";
  for (const auto& m : mentions) out += mention_to_json(m, std::nullopt).dump() + "\n";
  write_file(path, out);
}

inline void save_split(const std::string& path, const DatasetSplit& split) {
  const size_t n = split.train.size() + split.valid.size() + split.test.size();
  std::string out = detail::manifest(detail::kMentionsFormat, n).dump() + "\n";
  for (auto s : {SplitSection::kTrain, SplitSection::kValid, SplitSection::kTest}) {
    for (const auto& m : section(split, s)) out += mention_to_json(m, s).dump() + "\n";
  }
  write_file(path, out);
}

/// Every record must carry a split label.
inline DatasetSplit load_split(const std::string& path) {
  DatasetSplit split;
  for (auto& ml : load_mention_lines(path)) {
    if (!ml.split) {
      throw DataError(path + ": mention on tweet " + ml.record.tweet_id +
                      " has no split label");
    }
    switch (*ml.split) {
      case SplitSection::kTrain: split.train.push_back(std::move(ml.record)); break;
      case SplitSection::kValid: split.valid.push_back(std::move(ml.record)); break;
      case SplitSection::kTest: split.test.push_back(std::move(ml.record)); break;
    }
  }
  return split;
}

}  // namespace mmel
