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

// Dataset construction: a seeded Twitter-like corpus generator, ambiguous
// entity grouping, mention generation by screen-name replacement, noise
// filtering, the train/valid/test split and corpus statistics.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "mmel/candgen.hpp"
#include "mmel/common.hpp"
#include "mmel/corpus.hpp"
#include "mmel/features.hpp"

namespace mmel {

struct ForgeConfig {
  size_t n_person_entities = 16;
  size_t n_org_entities = 4;
  // Number of entities sharing one last name / one acronym.
  size_t person_group_size = 16;
  size_t org_group_size = 4;

  std::vector<std::string> first_names = {
      "Andrew", "Alice",  "Bruno", "Carla",  "Daniel", "Elena", "Farid", "Grace",
      "Hugo",   "Irene",  "Jonas", "Karin",  "Lucas",  "Maya",  "Nadia", "Oscar",
      "Paula",  "Quentin", "Rosa", "Samuel", "Tara",   "Ugo",   "Vera",  "Walter",
      "Xenia",  "Yusuf",  "Zoe",   "Adele",  "Boris",  "Chloe", "Dmitri", "Emma"};
  std::vector<std::string> last_names = {
      "Ng",     "Smith",  "Garcia", "Martin", "Rossi",  "Kim",    "Dubois", "Okafor",
      "Silva",  "Novak",  "Tanaka", "Moreau", "Fischer", "Lopez", "Haddad", "Berg",
      "Costa",  "Ivanova", "Mensah", "Quinn", "Sato",   "Weber",  "Young",  "Zhou"};
  std::vector<std::string> acronym_roots = {"ACM", "NBA", "WHO", "CNN", "ESA", "IMF",
                                            "NFL", "UNO", "BBC", "MIT", "PSG", "FIA"};

  // Timeline sizes: log-normal(mu, sigma) clipped to [min, max].
  double timeline_mu = 2.7;
  double timeline_sigma = 0.5;
  size_t timeline_min = 4;
  size_t timeline_max = 60;

  // Usable mention tweets per entity, increasing with popularity rank.
  size_t mention_min = 8;
  size_t mention_max = 20;
  double popularity_bias = 1.0;

  size_t topic_dim = 8;

  size_t vocab_size = 400;
  size_t pool_size = 12;
  double timeline_pool_prob = 0.8;
  double mention_pool_prob = 0.7;

  // Raw tweets that the mention filters must discard, per usable mention.
  double noise_tweet_rate = 0.25;
  // Extra imageless tweets per timeline tweet.
  double imageless_rate = 0.2;

  uint64_t seed = 1;

  /// Timeline distribution matched to published corpus statistics
  /// (mean 127.9, median 52, range [1, 3117]).
  static ForgeConfig published_scale() {
    ForgeConfig c;
    c.timeline_mu = std::log(52.0);
    c.timeline_sigma = std::sqrt(2.0 * std::log(127.9 / 52.0));
    c.timeline_min = 1;
    c.timeline_max = 3117;
    c.imageless_rate = 0.0;
    c.noise_tweet_rate = 0.0;
    c.mention_min = 1;
    c.mention_max = 2;
    return c;
  }
};

struct AmbiguityGroup {
  std::string surface;  // normalized last name or acronym
  EntityKind kind = EntityKind::kPerson;
  std::vector<std::string> members;  // screen names, sorted

  bool operator==(const AmbiguityGroup&) const = default;
  bool operator<(const AmbiguityGroup& o) const {
    return std::tie(kind, surface, members) < std::tie(o.kind, o.surface, o.members);
  }
};

struct ForgeOutput {
  KnowledgeBase kb;              // entities + timeline tweets
  std::vector<Tweet> raw_tweets;  // every generated tweet, sorted by id
  TopicMap topics;
  std::vector<AmbiguityGroup> planted_groups;
};

namespace forge_detail {

inline const std::vector<std::string>& timeline_templates() {
  static const std::vector<std::string> t = {
      "just shared some thoughts on {} and {}",
      "our new {} project is all about {} {}",
      "had a great time discussing {} with the {} team",
      "reading about {} {} and {} tonight",
      "big news on {} today check it out",
      "the {} workshop covered {} and {}",
      "excited to announce {} {} for next week",
      "looking back at {} and {} this year",
      "thoughts on {} after a long day of {}",
      "photo from the {} event with {} fans"};
  return t;
}

inline const std::vector<std::string>& mention_templates() {
  static const std::vector<std::string> t = {
      "great talk by {@} today about {} and {}",
      "congrats {@} on the {} {} award",
      "so happy to see {@} at the {} event",
      "{@} just posted about {} and {} must read",
      "thanks {@} for the insights on {}",
      "listening to {@} discuss {} {} live",
      "met {@} at the {} {} meetup today",
      "can't wait for the new {} from {@}"};
  return t;
}

inline const std::vector<std::string>& screen_suffixes() {
  static const std::vector<std::string> s = {"hq", "news", "official", "global", "intl",
                                             "team", "info", "live", "media", "org"};
  return s;
}

inline std::string pseudo_word(Rng& rng) {
  static const char* onsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r",
                                 "s", "t", "v", "z", "br", "tr", "st", "pl"};
  static const char* vowels[] = {"a", "e", "i", "o", "u", "ai", "ou"};
  const size_t syl = 2 + rng.below(2);
  std::string w;
  for (size_t k = 0; k < syl; ++k) {
    w += onsets[rng.below(std::size(onsets))];
    w += vowels[rng.below(std::size(vowels))];
  }
  return w;
}

// Fills "{}" slots with content words and "{@}" with `handle`.
inline std::string fill_template(const std::string& tmpl, const std::string& handle,
                                 const std::vector<std::string>& pool,
                                 const std::vector<std::string>& vocab, double pool_prob,
                                 Rng& rng) {
  std::string out;
  for (size_t i = 0; i < tmpl.size();) {
    if (tmpl.compare(i, 3, "{@}") == 0) {
      out += handle;
      i += 3;
    } else if (tmpl.compare(i, 2, "{}") == 0) {
      if (rng.uniform() < pool_prob) {
        out += pool[rng.below(pool.size())];
      } else {
        out += vocab[rng.below(vocab.size())];
      }
      i += 2;
    } else {
      out.push_back(tmpl[i++]);
    }
  }
  return out;
}

inline size_t draw_timeline_size(const ForgeConfig& c, Rng& rng) {
  const double x = std::exp(rng.normal(c.timeline_mu, c.timeline_sigma));
  const double clipped = std::clamp(std::round(x), static_cast<double>(c.timeline_min),
                                    static_cast<double>(c.timeline_max));
  return static_cast<size_t>(clipped);
}

inline std::string padded(const char* prefix, size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%07zu", prefix, n);
  return buf;
}

inline const std::set<std::string>& honorifics() {
  static const std::set<std::string> h = {"dr", "prof", "mr", "mrs", "ms", "miss", "sir",
                                          "jr", "sr", "phd", "md", "ii", "iii", "iv"};
  return h;
}

}  // namespace forge_detail

/// Final user-name token once honorifics and suffixes are set aside, in its
/// original case with punctuation removed ("Dr. Andrew Y. Ng, PhD" -> "Ng").
inline std::string last_name(const std::string& user_name) {
  const auto raw = split_whitespace(user_name);
  for (size_t k = raw.size(); k-- > 0;) {
    std::string cleaned;
    for (char c : raw[k]) {
      if (is_word_byte(static_cast<unsigned char>(c))) cleaned.push_back(c);
    }
    if (cleaned.empty()) continue;
    std::string lower;
    for (char c : cleaned) lower.push_back(ascii_lower(c));
    if (forge_detail::honorifics().count(lower) && k > 0) continue;
    return cleaned;
  }
  return {};
}

/// The user name itself when it is all capitals, else the initials of its
/// capitalized words.
inline std::string acronym(const std::string& user_name) {
  bool has_upper = false, has_lower = false;
  for (char c : user_name) {
    has_upper |= (c >= 'A' && c <= 'Z');
    has_lower |= (c >= 'a' && c <= 'z');
  }
  std::string out;
  if (has_upper && !has_lower) {
    for (char c : user_name) {
      if (std::isalnum(static_cast<unsigned char>(c))) out.push_back(c);
    }
    return out;
  }
  for (const auto& w : split_whitespace(user_name)) {
    if (w[0] >= 'A' && w[0] <= 'Z') out.push_back(w[0]);
  }
  return out;
}

/// Surface form that replaces an entity's screen name in a mention.
inline std::string surface_form(const Entity& e) {
  return e.kind == EntityKind::kPerson ? last_name(e.user_name) : acronym(e.user_name);
}

inline std::string group_key(const Entity& e) {
  return join(normalize_name(surface_form(e)), "");
}

/// Groups persons by last name and organizations by acronym; singleton
/// groups are dropped. Sorted by (kind, surface).
inline std::vector<AmbiguityGroup> select_ambiguous_entities(const KnowledgeBase& kb) {
  std::map<std::pair<EntityKind, std::string>, std::vector<std::string>> groups;
  for (const auto& [screen, e] : kb.entities) {
    const std::string key = group_key(e);
    if (key.empty()) continue;
    groups[{e.kind, key}].push_back(screen);
  }
  std::vector<AmbiguityGroup> out;
  for (auto& [k, members] : groups) {
    if (members.size() < 2) continue;
    std::sort(members.begin(), members.end());
    out.push_back({k.second, k.first, std::move(members)});
  }
  return out;
}

// Inactive / unverified account filters have no synthetic analog; these
// hooks accept everything and exist so imported corpora can plug rules in.
inline bool is_active_account(const Entity&) { return true; }
inline bool is_verified_account(const Entity&) { return true; }

/// Generates entities, timelines, raw mention tweets and hidden topic
/// vectors. Throws DataError when a name pool is too small for the requested
/// collisions.
inline ForgeOutput synth_corpus(const ForgeConfig& c) {
  using namespace forge_detail;
  if (c.n_person_entities + c.n_org_entities == 0) {
    throw DataError("forge: no entities requested");
  }
  if (c.person_group_size == 0 || c.org_group_size == 0 || c.timeline_min == 0 ||
      c.timeline_min > c.timeline_max || c.mention_min > c.mention_max ||
      c.topic_dim == 0 || c.vocab_size == 0 || c.pool_size == 0) {
    throw DataError("forge: invalid configuration");
  }
  const size_t person_groups =
      (c.n_person_entities + c.person_group_size - 1) / c.person_group_size;
  const size_t org_groups = (c.n_org_entities + c.org_group_size - 1) / c.org_group_size;
  if (c.n_person_entities > 0 &&
      (c.last_names.size() < person_groups ||
       c.first_names.size() < std::min(c.person_group_size, c.n_person_entities))) {
    throw DataError("forge: name pool too small for " + std::to_string(person_groups) +
                    " last-name groups of size " + std::to_string(c.person_group_size));
  }
  if (c.n_org_entities > 0 && c.acronym_roots.size() < org_groups) {
    throw DataError("forge: acronym pool too small for " + std::to_string(org_groups) +
                    " groups");
  }

  Rng rng(derive_seed(c.seed, "forge"));
  ForgeOutput out;

  std::vector<std::string> vocab;
  {
    std::set<std::string> seen;
    Rng vr(derive_seed(c.seed, "vocab"));
    size_t guard = 0;
    while (vocab.size() < c.vocab_size && guard++ < c.vocab_size * 100) {
      auto w = pseudo_word(vr);
      if (seen.insert(w).second) vocab.push_back(std::move(w));
    }
  }

  // Entities and planted groups.
  std::set<std::string> used_screens;
  auto unique_screen = [&](std::string base) {
    std::string s = base;
    for (size_t n = 2; used_screens.count(s); ++n) s = base + std::to_string(n);
    used_screens.insert(s);
    return s;
  };
  std::vector<Entity> ents;
  {
    std::vector<size_t> ln = rng.sample_without_replacement(c.last_names.size(), person_groups);
    size_t made = 0;
    for (size_t g = 0; g < person_groups; ++g) {
      const std::string& last = c.last_names[ln[g]];
      const size_t n = std::min(c.person_group_size, c.n_person_entities - made);
      auto fn = rng.sample_without_replacement(c.first_names.size(), n);
      AmbiguityGroup grp{join(normalize_name(last), ""), EntityKind::kPerson, {}};
      for (size_t k = 0; k < n; ++k) {
        Entity e;
        e.kind = EntityKind::kPerson;
        e.user_name = c.first_names[fn[k]] + " " + last;
        e.screen_name = unique_screen(c.first_names[fn[k]] + last);
        grp.members.push_back(e.screen_name);
        ents.push_back(std::move(e));
      }
      made += n;
      if (grp.members.size() >= 2) {
        std::sort(grp.members.begin(), grp.members.end());
        out.planted_groups.push_back(std::move(grp));
      }
    }
    std::vector<size_t> ac = rng.sample_without_replacement(c.acronym_roots.size(), org_groups);
    made = 0;
    for (size_t g = 0; g < org_groups; ++g) {
      const std::string& root = c.acronym_roots[ac[g]];
      const size_t n = std::min(c.org_group_size, c.n_org_entities - made);
      AmbiguityGroup grp{join(normalize_name(root), ""), EntityKind::kOrganization, {}};
      for (size_t k = 0; k < n; ++k) {
        Entity e;
        e.kind = EntityKind::kOrganization;
        e.user_name = root;
        const auto& sfx = screen_suffixes();
        e.screen_name = unique_screen(root + "_" + sfx[k % sfx.size()]);
        grp.members.push_back(e.screen_name);
        ents.push_back(std::move(e));
      }
      made += n;
      if (grp.members.size() >= 2) {
        std::sort(grp.members.begin(), grp.members.end());
        out.planted_groups.push_back(std::move(grp));
      }
    }
    std::sort(out.planted_groups.begin(), out.planted_groups.end());
  }

  // Popularity (long-tailed), topics, word pools, timelines.
  std::vector<std::vector<std::string>> pools(ents.size());
  std::vector<Tweet> raw;
  size_t tweet_counter = 0;
  for (size_t k = 0; k < ents.size(); ++k) {
    Entity& e = ents[k];
    e.followers = static_cast<int64_t>(std::floor(std::exp(rng.normal(6.0, 2.0))));
    e.friends = static_cast<int64_t>(std::floor(std::exp(rng.normal(5.0, 1.5))));
    Vector topic(c.topic_dim);
    for (double& x : topic) x = rng.normal();
    out.topics[e.screen_name] = std::move(topic);
    for (size_t idx : rng.sample_without_replacement(vocab.size(), c.pool_size)) {
      pools[k].push_back(vocab[idx]);
    }
    const size_t tl = draw_timeline_size(c, rng);
    const auto& tmpls = timeline_templates();
    for (size_t j = 0; j < tl; ++j) {
      Tweet t;
      t.id = padded("t", tweet_counter++);
      t.author = e.screen_name;
      t.text = fill_template(tmpls[rng.below(tmpls.size())], "", pools[k], vocab,
                             c.timeline_pool_prob, rng);
      t.image_ref = "img_" + t.id;
      e.timeline.push_back(t.id);
      out.kb.tweets.emplace(t.id, t);
      raw.push_back(std::move(t));
    }
    const size_t extra = static_cast<size_t>(std::round(c.imageless_rate * static_cast<double>(tl)));
    for (size_t j = 0; j < extra; ++j) {
      Tweet t;
      t.id = padded("t", tweet_counter++);
      t.author = e.screen_name;
      t.text = fill_template(tmpls[rng.below(tmpls.size())], "", pools[k], vocab,
                             c.timeline_pool_prob, rng);
      t.is_retweet = rng.uniform() < 0.3;
      if (t.is_retweet) t.image_ref = "img_" + t.id;  // retweets are excluded even with images
      raw.push_back(std::move(t));
    }
    e.tweet_count = static_cast<int64_t>(tl + extra) +
                    static_cast<int64_t>(std::floor(std::exp(rng.normal(5.0, 1.5))));
  }

  // Mention tweets: more for popular entities.
  std::vector<size_t> order(ents.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return ents[a].followers < ents[b].followers;
  });
  std::vector<double> pct(ents.size());
  for (size_t r = 0; r < order.size(); ++r) {
    pct[order[r]] = ents.size() == 1 ? 1.0 : static_cast<double>(r) / (ents.size() - 1);
  }
  const auto& mtmpls = mention_templates();
  size_t mention_counter = 0;
  size_t fan_counter = 0;
  for (size_t k = 0; k < ents.size(); ++k) {
    const Entity& e = ents[k];
    const std::string handle = render_handle(e.screen_name);
    const double span = static_cast<double>(c.mention_max - c.mention_min);
    const size_t n_mentions =
        c.mention_min +
        static_cast<size_t>(std::round(span * std::pow(pct[k], c.popularity_bias)));
    auto author = [&]() {
      // Mostly outside fans, sometimes another KB account.
      if (ents.size() > 1 && rng.uniform() < 0.2) {
        size_t other = rng.below(ents.size() - 1);
        if (other >= k) ++other;
        return ents[other].screen_name;
      }
      return "fan_" + std::to_string(fan_counter++);
    };
    for (size_t j = 0; j < n_mentions; ++j) {
      Tweet t;
      t.id = padded("m", mention_counter++);
      t.author = author();
      t.text = fill_template(mtmpls[rng.below(mtmpls.size())], handle, pools[k], vocab,
                             c.mention_pool_prob, rng);
      t.image_ref = "img_" + t.id;
      raw.push_back(std::move(t));
    }
    const size_t n_noise = static_cast<size_t>(
        std::round(c.noise_tweet_rate * static_cast<double>(n_mentions)));
    for (size_t j = 0; j < n_noise; ++j) {
      Tweet t;
      t.id = padded("m", mention_counter++);
      t.author = author();
      t.image_ref = "img_" + t.id;
      const std::string body = fill_template(mtmpls[rng.below(mtmpls.size())], handle,
                                             pools[k], vocab, c.mention_pool_prob, rng);
      switch (j % 5) {
        case 0: t.text = body; t.image_ref.reset(); break;
        case 1: t.text = "RT " + body; t.is_retweet = true; break;
        case 2: {
          const size_t first = fan_counter++;
          const size_t second = fan_counter++;
          t.text = "@fan_" + std::to_string(first) + " " + handle + " @fan_" +
                   std::to_string(second) + " nice work";
          break;
        }
        case 3: t.text = handle + " wow"; break;
        default: t.text = body; t.author = e.screen_name; break;
      }
      raw.push_back(std::move(t));
    }
  }

  for (auto& e : ents) out.kb.entities.emplace(e.screen_name, std::move(e));
  std::sort(raw.begin(), raw.end(), [](const Tweet& a, const Tweet& b) { return a.id < b.id; });
  out.raw_tweets = std::move(raw);
  return out;
}

// --- mention generation -----------------------------------------------------

/// Keeps a mention at whitespace-token `position` unless it sits in a leading
/// run of two or more @-tokens (a recipient list), or the tweet has fewer
/// than three tokens once @-tokens are removed.
inline bool filter_noise(const Tweet& tweet, size_t position) {
  const auto toks = split_whitespace(tweet.text);
  size_t run = 0;
  while (run < toks.size() && toks[run][0] == '@') ++run;
  if (run >= 2 && position < run) return false;
  size_t remainder = 0;
  for (const auto& t : toks) {
    if (t[0] != '@') ++remainder;
  }
  return remainder >= 3;
}

struct MentionReport {
  size_t scanned = 0;
  size_t without_kb_mention = 0;
  size_t no_image = 0;
  size_t retweet = 0;
  size_t noise = 0;
  size_t self_mention = 0;
  size_t produced = 0;

  bool operator==(const MentionReport&) const = default;
};

struct MentionGeneration {
  std::vector<MentionRecord> records;
  std::vector<Tweet> host_tweets;  // rewritten tweets the records point to
  MentionReport report;
};

/// For every raw tweet mentioning "@screen_name" of a KB entity, replaces
/// that token with the entity's surface form and records the entity as gold.
/// Tweets without images, retweets, noisy mentions and self-mentions are
/// skipped and counted.
inline MentionGeneration generate_mentions(const KnowledgeBase& kb,
                                           const std::vector<Tweet>& raw_tweets) {
  MentionGeneration out;
  std::unordered_map<std::string, const Entity*> by_handle;
  for (const auto& [screen, e] : kb.entities) {
    std::string lower;
    for (char c : screen) lower.push_back(ascii_lower(c));
    by_handle.emplace(lower, &e);
  }
  for (const auto& t : raw_tweets) {
    ++out.report.scanned;
    const auto toks = split_whitespace(t.text);
    std::set<std::string> done;
    bool any = false;
    for (size_t p = 0; p < toks.size(); ++p) {
      if (toks[p].size() < 2 || toks[p][0] != '@') continue;
      size_t end = 1;
      while (end < toks[p].size() &&
             (std::isalnum(static_cast<unsigned char>(toks[p][end])) || toks[p][end] == '_')) {
        ++end;
      }
      std::string lower;
      for (size_t i = 1; i < end; ++i) lower.push_back(ascii_lower(toks[p][i]));
      auto it = by_handle.find(lower);
      if (it == by_handle.end()) continue;
      const Entity& e = *it->second;
      if (!done.insert(e.screen_name).second) continue;
      any = true;
      if (!t.image_ref) { ++out.report.no_image; continue; }
      if (t.is_retweet) { ++out.report.retweet; continue; }
      if (t.author == e.screen_name) { ++out.report.self_mention; continue; }
      if (!filter_noise(t, p)) { ++out.report.noise; continue; }
      const std::string surface = surface_form(e);
      if (surface.empty()) { ++out.report.noise; continue; }
      auto rewritten = toks;
      rewritten[p] = surface + toks[p].substr(end);
      Tweet host = t;
      host.id = t.id + "~" + e.screen_name;
      host.text = join(rewritten);
      out.records.push_back({split_whitespace(surface), host.id, e.screen_name});
      out.host_tweets.push_back(std::move(host));
      ++out.report.produced;
    }
    if (!any) ++out.report.without_kb_mention;
  }
  return out;
}

// --- split ------------------------------------------------------------------

/// 40/20/40 split where at least half of the test mentions link to entities
/// absent from train and valid. Entities are reserved for test greedily in
/// seeded order; the rest is filled by a stratified allocation.
inline DatasetSplit split_mentions(const std::vector<MentionRecord>& mentions,
                                   uint64_t seed) {
  std::set<std::string> golds;
  for (const auto& m : mentions) golds.insert(m.gold);
  if (mentions.size() < 10 || golds.size() < 4) {
    throw DataError("split: need at least 10 mentions over 4 entities (got " +
                    std::to_string(mentions.size()) + " over " +
                    std::to_string(golds.size()) + ")");
  }
  Rng rng(derive_seed(seed, "split"));
  const size_t n = mentions.size();
  const size_t n_train = static_cast<size_t>(std::llround(0.4 * static_cast<double>(n)));
  const size_t n_valid = static_cast<size_t>(std::llround(0.2 * static_cast<double>(n)));
  const size_t n_test = n - n_train - n_valid;
  const size_t need_unseen = (n_test + 1) / 2;

  std::map<std::string, std::vector<size_t>> by_entity;
  for (size_t i = 0; i < n; ++i) by_entity[mentions[i].gold].push_back(i);
  std::vector<std::string> entities(golds.begin(), golds.end());
  rng.shuffle(entities);

  std::set<std::string> reserved;
  size_t reserved_count = 0;
  for (const auto& e : entities) {
    if (reserved_count >= need_unseen) break;
    const size_t c = by_entity[e].size();
    if (reserved_count + c > n_test) continue;
    // Keep at least one entity for training.
    if (reserved.size() + 1 >= entities.size()) break;
    reserved.insert(e);
    reserved_count += c;
  }
  if (reserved_count < need_unseen) {
    throw DataError("split: cannot reserve " + std::to_string(need_unseen) +
                    " unseen test mentions from " + std::to_string(entities.size()) +
                    " entities");
  }

  DatasetSplit split;
  std::vector<size_t> rest;
  for (const auto& e : entities) {
    auto idx = by_entity[e];
    rng.shuffle(idx);
    if (reserved.count(e)) {
      for (size_t i : idx) split.test.push_back(mentions[i]);
    } else {
      rest.insert(rest.end(), idx.begin(), idx.end());
    }
  }
  // Systematic stratified allocation: `rest` is grouped by entity, and each
  // item goes to the section furthest behind its quota.
  const size_t quota[3] = {n_train, n_valid, n_test - reserved_count};
  size_t filled[3] = {0, 0, 0};
  for (size_t i : rest) {
    size_t best = 3;
    double best_def = -1.0;
    for (size_t s = 0; s < 3; ++s) {
      if (filled[s] >= quota[s]) continue;
      const double deficit =
          1.0 - static_cast<double>(filled[s]) / static_cast<double>(quota[s]);
      if (deficit > best_def) best_def = deficit, best = s;
    }
    ++filled[best];
    (best == 0 ? split.train : best == 1 ? split.valid : split.test).push_back(mentions[i]);
  }
  return split;
}

/// Fraction of test mentions whose gold entity never appears in train/valid.
inline double unseen_test_fraction(const DatasetSplit& s) {
  if (s.test.empty()) return 0.0;
  std::set<std::string> seen;
  for (const auto& m : s.train) seen.insert(m.gold);
  for (const auto& m : s.valid) seen.insert(m.gold);
  size_t unseen = 0;
  for (const auto& m : s.test) unseen += seen.count(m.gold) == 0;
  return static_cast<double>(unseen) / static_cast<double>(s.test.size());
}

// --- statistics ---------------------------------------------------------------

struct DatasetStats {
  Summary timeline;
  Summary candidates;
  size_t entities = 0;
  size_t mentions = 0;
  size_t empty_candidate_sets = 0;
};

inline DatasetStats dataset_stats(const KnowledgeBase& kb,
                                  const std::vector<MentionRecord>& mentions) {
  DatasetStats s;
  s.entities = kb.entities.size();
  s.mentions = mentions.size();
  std::vector<double> tl;
  for (const auto& [_, e] : kb.entities) tl.push_back(static_cast<double>(e.timeline.size()));
  s.timeline = summarize(std::move(tl));
  const CandidateIndex index(kb);
  std::vector<double> cs;
  for (const auto& m : mentions) {
    const size_t n = index.candidates(m).size();
    s.empty_candidate_sets += n == 0;
    cs.push_back(static_cast<double>(n));
  }
  s.candidates = summarize(std::move(cs));
  return s;
}

namespace forge_detail {

struct ReferenceRow {
  const char* label;
  double mean, median, max, min, stddev;
};

inline constexpr ReferenceRow kPublishedTimeline{"nb Tweets / timeline (text+image)", 127.9,
                                                 52, 3117, 1, 222.2};
inline constexpr ReferenceRow kPublishedCandidates{"nb ambiguous entities/mention", 16.5, 16,
                                                   67, 2, 12};

}  // namespace forge_detail

inline std::string stats_csv(const DatasetStats& s) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "row,mean,median,max,min,stddev\n";
  auto line = [&](const char* name, const Summary& x) {
    os << name << ',' << x.mean << ',' << x.median << ',' << x.max << ',' << x.min << ','
       << x.stddev << '\n';
  };
  line("tweets_per_timeline", s.timeline);
  line("candidates_per_mention", s.candidates);
  return os.str();
}

/// Table of timeline and candidate-set statistics, with the published corpus
/// values as reference rows.
inline std::string stats_text(const DatasetStats& s) {
  using forge_detail::ReferenceRow;
  std::ostringstream os;
  os << "entities " << s.entities << ", mentions " << s.mentions
     << ", empty candidate sets " << s.empty_candidate_sets << "\n\n";
  os << std::left << std::setw(44) << "" << std::right << std::setw(10) << "Mean"
     << std::setw(10) << "Median" << std::setw(10) << "Max" << std::setw(10) << "Min"
     << std::setw(10) << "StdDev" << "\n";
  auto row = [&](const std::string& label, double a, double b, double c, double d, double e) {
    os << std::left << std::setw(44) << label << std::right << std::fixed
       << std::setprecision(1) << std::setw(10) << a << std::setw(10) << b << std::setw(10)
       << c << std::setw(10) << d << std::setw(10) << e << "\n";
  };
  auto published = [&](const ReferenceRow& r) {
    row("  published", r.mean, r.median, r.max, r.min, r.stddev);
  };
  const auto& tl = forge_detail::kPublishedTimeline;
  const auto& cd = forge_detail::kPublishedCandidates;
  row(tl.label, s.timeline.mean, s.timeline.median, s.timeline.max, s.timeline.min,
      s.timeline.stddev);
  published(tl);
  row(cd.label, s.candidates.mean, s.candidates.median, s.candidates.max, s.candidates.min,
      s.candidates.stddev);
  published(cd);
  return os.str();
}

inline void save_groups(const std::string& path, const std::vector<AmbiguityGroup>& groups) {
  std::string out;
  for (const auto& g : groups) {
    nlohmann::ordered_json j;
    j["surface"] = g.surface;
    j["kind"] = to_string(g.kind);
    j["members"] = g.members;
    out += j.dump() + "\n";
  }
  write_file(path, out);
}

inline std::string mention_report_text(const MentionReport& r) {
  std::ostringstream os;
  os << "raw tweets scanned " << r.scanned << "\n"
     << "  without KB mention " << r.without_kb_mention << "\n"
     << "  skipped (no image) " << r.no_image << "\n"
     << "  skipped (retweet) " << r.retweet << "\n"
     << "  skipped (no syntactic role) " << r.noise << "\n"
     << "  skipped (self mention) " << r.self_mention << "\n"
     << "mentions produced " << r.produced << "\n";
  return os.str();
}

}  // namespace mmel
