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

// Context representations for mentions and entities.
//
// A mention is represented by its host tweet: a unigram sentence vector U, a
// unigram+bigram sentence vector B and an image vector I. An entity is the
// component-wise mean of those bundles over its timeline.

#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mmel/bm25.hpp"
#include "mmel/common.hpp"
#include "mmel/corpus.hpp"

namespace mmel {

struct FeatureBundle {
  Vector u;
  Vector b;
  Vector i;

  bool operator==(const FeatureBundle&) const = default;
};

struct FeatureDims {
  size_t u = 700;
  size_t b = 700;
  size_t i = 1000;

  bool operator==(const FeatureDims&) const = default;
};

/// Embedding tables for unigrams and adjacent-token bigrams. Lookups of
/// n-grams that were never added yield the zero vector.
class NgramTables {
 public:
  explicit NgramTables(size_t dim = 0) : dim_(dim) {}

  size_t dim() const { return dim_; }

  void add_unigram(const std::string& w, Vector v) {
    check(v);
    unigrams_[w] = std::move(v);
  }
  void add_bigram(const std::string& a, const std::string& b, Vector v) {
    check(v);
    bigrams_[{a, b}] = std::move(v);
  }

  const Vector& unigram(const std::string& w) const {
    auto it = unigrams_.find(w);
    return it == unigrams_.end() ? zero() : it->second;
  }
  const Vector& bigram(const std::string& a, const std::string& b) const {
    auto it = bigrams_.find({a, b});
    return it == bigrams_.end() ? zero() : it->second;
  }

  size_t num_unigrams() const { return unigrams_.size(); }
  size_t num_bigrams() const { return bigrams_.size(); }

  /// Gaussian vectors (variance 1/dim per component) for every unigram and
  /// adjacent bigram of `sentences`. Each vector depends only on the seed
  /// and the n-gram, not on insertion order.
  static NgramTables seeded(const std::vector<std::vector<std::string>>& sentences,
                            size_t dim, uint64_t seed) {
    NgramTables t(dim);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    auto draw = [&](const std::string& key) {
      Rng rng(derive_seed(seed, stable_hash(key)));
      Vector v(dim);
      for (double& x : v) x = scale * rng.normal();
      return v;
    };
    for (const auto& s : sentences) {
      for (size_t k = 0; k < s.size(); ++k) {
        if (!t.unigrams_.count(s[k])) t.unigrams_.emplace(s[k], draw("u:" + s[k]));
        if (k + 1 < s.size()) {
          std::pair<std::string, std::string> key{s[k], s[k + 1]};
          if (!t.bigrams_.count(key)) {
            t.bigrams_.emplace(key, draw("b:" + s[k] + "\x1f" + s[k + 1]));
          }
        }
      }
    }
    return t;
  }

 private:
  void check(const Vector& v) const {
    if (v.size() != dim_) {
      throw DataError("ngram vector has dimension " + std::to_string(v.size()) +
                      ", table dimension is " + std::to_string(dim_));
    }
  }
  const Vector& zero() const {
    if (zero_.size() != dim_) zero_.assign(dim_, 0.0);
    return zero_;
  }

  size_t dim_;
  std::map<std::string, Vector> unigrams_;
  std::map<std::pair<std::string, std::string>, Vector> bigrams_;
  mutable Vector zero_;
};

enum class ComposeMode { kUnigram, kUnigramBigram };

/// Mean of the embeddings of the distinct n-grams of the sentence (unigrams,
/// plus adjacent bigrams in bigram mode). Unknown n-grams contribute zero but
/// still count in the denominator.
inline Vector compose_sentence(const std::vector<std::string>& tokens,
                               const NgramTables& tables, ComposeMode mode) {
  if (tokens.empty()) throw DataError("compose_sentence: empty token list");
  Vector acc(tables.dim(), 0.0);
  size_t count = 0;
  std::set<std::string> seen_uni;
  for (const auto& t : tokens) {
    if (!seen_uni.insert(t).second) continue;
    const Vector& v = tables.unigram(t);
    for (size_t k = 0; k < acc.size(); ++k) acc[k] += v[k];
    ++count;
  }
  if (mode == ComposeMode::kUnigramBigram) {
    std::set<std::pair<std::string, std::string>> seen_bi;
    for (size_t j = 0; j + 1 < tokens.size(); ++j) {
      if (!seen_bi.insert({tokens[j], tokens[j + 1]}).second) continue;
      const Vector& v = tables.bigram(tokens[j], tokens[j + 1]);
      for (size_t k = 0; k < acc.size(); ++k) acc[k] += v[k];
      ++count;
    }
  }
  for (double& x : acc) x /= static_cast<double>(count);
  return acc;
}

/// Component-wise mean over the entity's timeline bundles.
inline FeatureBundle entity_features(const Entity& entity,
                                     const std::vector<FeatureBundle>& timeline) {
  if (entity.timeline.empty() || timeline.empty()) {
    throw DataError("entity_features: empty timeline for " + entity.screen_name);
  }
  if (timeline.size() != entity.timeline.size()) {
    throw DataError("entity_features: " + std::to_string(timeline.size()) +
                    " bundles for a timeline of " + std::to_string(entity.timeline.size()));
  }
  FeatureBundle mean{Vector(timeline[0].u.size(), 0.0), Vector(timeline[0].b.size(), 0.0),
                     Vector(timeline[0].i.size(), 0.0)};
  auto add = [](Vector& acc, const Vector& v) {
    if (v.size() != acc.size()) throw DataError("entity_features: ragged bundles");
    for (size_t k = 0; k < v.size(); ++k) acc[k] += v[k];
  };
  for (const auto& fb : timeline) {
    add(mean.u, fb.u);
    add(mean.b, fb.b);
    add(mean.i, fb.i);
  }
  const double n = static_cast<double>(timeline.size());
  for (Vector* v : {&mean.u, &mean.b, &mean.i}) {
    for (double& x : *v) x /= n;
  }
  return mean;
}

/// Text vectors keyed by tweet id, image vectors keyed by image_ref.
struct FeatureStore {
  FeatureDims dims;
  std::map<std::string, std::pair<Vector, Vector>> text;
  std::map<std::string, Vector> images;

  bool operator==(const FeatureStore&) const = default;

  FeatureBundle bundle(const Tweet& t) const {
    auto it = text.find(t.id);
    if (it == text.end()) throw DataError("features: no text record for tweet " + t.id);
    if (!t.image_ref) throw DataError("features: tweet " + t.id + " has no image");
    auto im = images.find(*t.image_ref);
    if (im == images.end()) {
      throw DataError("features: no image record for " + *t.image_ref);
    }
    return {it->second.first, it->second.second, im->second};
  }
};

inline FeatureBundle mention_features(const MentionRecord& m, const KnowledgeBase& kb,
                                      const FeatureStore& store) {
  return store.bundle(kb.tweet(m.tweet_id));
}

inline FeatureBundle entity_features(const Entity& e, const KnowledgeBase& kb,
                                     const FeatureStore& store) {
  std::vector<FeatureBundle> tl;
  tl.reserve(e.timeline.size());
  for (const auto& id : e.timeline) tl.push_back(store.bundle(kb.tweet(id)));
  return entity_features(e, tl);
}

/// Timeline-averaged bundles for every entity, computed once.
class EntityFeatureCache {
 public:
  EntityFeatureCache() = default;
  EntityFeatureCache(const KnowledgeBase& kb, const FeatureStore& store) {
    for (const auto& [screen, e] : kb.entities) {
      bundles_.emplace(screen, entity_features(e, kb, store));
    }
  }
  const FeatureBundle& at(const std::string& screen_name) const {
    auto it = bundles_.find(screen_name);
    if (it == bundles_.end()) throw DataError("no entity features for " + screen_name);
    return it->second;
  }

 private:
  std::map<std::string, FeatureBundle> bundles_;
};

// --- synthetic feature oracle ------------------------------------------------

struct SynthFeatureConfig {
  FeatureDims dims{32, 32, 32};
  // Ratio of signal to noise amplitude in image vectors; 0 means pure noise.
  double snr = 2.0;
  // Scale of the offset shared by every image (a dataset-wide mean).
  double image_offset = 1.0;
  // Per-image nuisance confined to a fixed random subspace of this rank,
  // with per-coordinate standard deviation `style_scale`. 0 disables it.
  size_t style_dim = 0;
  double style_scale = 0.0;
  uint64_t seed = 7;
};

using TopicMap = std::map<std::string, Vector>;

/// Builds text vectors by composing seeded n-gram tables over every tweet,
/// and image vectors as snr * P topic + offset + style_scale * S z + N(0, I),
/// where the topic is the author's for timeline tweets and the gold entity's
/// for mention tweets, and z ~ N(0, I) is drawn per image.
inline FeatureStore synth_features(const KnowledgeBase& kb,
                                   const std::vector<MentionRecord>& mentions,
                                   const TopicMap& topics, const SynthFeatureConfig& cfg) {
  if (cfg.dims.u != cfg.dims.b) {
    throw DataError("synth_features: unigram and bigram dims must agree");
  }
  for (const auto& [screen, _] : kb.entities) {
    if (!topics.count(screen)) throw DataError("synth_features: no topic vector for " + screen);
  }
  size_t k = 0;
  for (const auto& [_, t] : topics) {
    if (k == 0) k = t.size();
    if (t.size() != k || k == 0) throw DataError("synth_features: ragged topic vectors");
  }

  std::vector<std::vector<std::string>> sentences;
  sentences.reserve(kb.tweets.size());
  for (const auto& [_, t] : kb.tweets) sentences.push_back(tokenize(t.text));
  const NgramTables tables =
      NgramTables::seeded(sentences, cfg.dims.u, derive_seed(cfg.seed, "ngrams"));

  FeatureStore store;
  store.dims = cfg.dims;
  size_t idx = 0;
  for (const auto& [id, t] : kb.tweets) {
    const auto& toks = sentences[idx++];
    if (toks.empty()) throw DataError("synth_features: tweet " + id + " has no tokens");
    store.text.emplace(id, std::make_pair(compose_sentence(toks, tables, ComposeMode::kUnigram),
                                          compose_sentence(toks, tables, ComposeMode::kUnigramBigram)));
  }

  Rng prng(derive_seed(cfg.seed, "projection"));
  std::vector<Vector> proj(cfg.dims.i, Vector(k));
  const double pscale = 1.0 / std::sqrt(static_cast<double>(k));
  for (auto& row : proj) {
    for (double& x : row) x = pscale * prng.normal();
  }
  Vector offset(cfg.dims.i);
  for (double& x : offset) x = cfg.image_offset * prng.uniform();
  std::vector<Vector> style(cfg.dims.i, Vector(cfg.style_dim));
  const double sscale = cfg.style_dim ? 1.0 / std::sqrt(static_cast<double>(cfg.style_dim)) : 0.0;
  for (auto& row : style) {
    for (double& x : row) x = sscale * prng.normal();
  }

  std::map<std::string, std::string> subject;  // tweet id -> entity whose topic drives the image
  for (const auto& [_, t] : kb.tweets) {
    if (topics.count(t.author)) subject[t.id] = t.author;
  }
  for (const auto& m : mentions) subject[m.tweet_id] = m.gold;

  for (const auto& [id, t] : kb.tweets) {
    if (!t.image_ref || store.images.count(*t.image_ref)) continue;
    Rng rng(derive_seed(cfg.seed, stable_hash("img:" + *t.image_ref)));
    Vector img(cfg.dims.i);
    const Vector* topic = nullptr;
    if (auto s = subject.find(id); s != subject.end()) topic = &topics.at(s->second);
    Vector z(cfg.style_dim);
    for (double& x : z) x = rng.normal();
    for (size_t r = 0; r < cfg.dims.i; ++r) {
      double signal = 0.0;
      if (topic) signal = dot(proj[r], *topic);
      const double nuisance = cfg.style_dim ? cfg.style_scale * dot(style[r], z) : 0.0;
      img[r] = cfg.snr * signal + offset[r] + nuisance + rng.normal();
    }
    store.images.emplace(*t.image_ref, std::move(img));
  }
  return store;
}

// --- persistence --------------------------------------------------------------
//
// <dir>/manifest.json  {"dim_u","dim_b","dim_i","count","image_count"}
// <dir>/records.jsonl  {"key": tweet id, "u": [...], "b": [...]}
// <dir>/images.jsonl   {"key": image_ref, "i": [...]}
//
// A records.jsonl line may also carry "i" inline; it is then filed under the
// record key as an image.

inline void write_features(const FeatureStore& store, const std::string& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json man;
  man["dim_u"] = store.dims.u;
  man["dim_b"] = store.dims.b;
  man["dim_i"] = store.dims.i;
  man["count"] = store.text.size();
  man["image_count"] = store.images.size();
  write_file(dir + "/manifest.json", man.dump() + "\n");
  std::string rec;
  for (const auto& [key, ub] : store.text) {
    nlohmann::ordered_json j;
    j["key"] = key;
    j["u"] = ub.first;
    j["b"] = ub.second;
    rec += j.dump() + "\n";
  }
  write_file(dir + "/records.jsonl", rec);
  std::string img;
  for (const auto& [key, v] : store.images) {
    nlohmann::ordered_json j;
    j["key"] = key;
    j["i"] = v;
    img += j.dump() + "\n";
  }
  write_file(dir + "/images.jsonl", img);
}

inline FeatureStore read_features(const std::string& dir) {
  FeatureStore store;
  const std::string mpath = dir + "/manifest.json";
  nlohmann::json man;
  try {
    man = nlohmann::json::parse(read_file(mpath));
    store.dims.u = man.at("dim_u").get<size_t>();
    store.dims.b = man.at("dim_b").get<size_t>();
    store.dims.i = man.at("dim_i").get<size_t>();
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(mpath + ": " + ex.what());
  }
  auto vec = [](const nlohmann::json& j, const char* field, size_t want,
                const std::string& key, const std::string& path, size_t line) {
    Vector v;
    try {
      v = j.at(field).get<Vector>();
    } catch (const nlohmann::json::exception& ex) {
      throw DataError(path + ":" + std::to_string(line) + ": key " + key + ": " + ex.what());
    }
    if (v.size() != want) {
      throw DataError(path + ":" + std::to_string(line) + ": key " + key + ": field '" +
                      field + "' has " + std::to_string(v.size()) +
                      " values, manifest says " + std::to_string(want));
    }
    return v;
  };
  const std::string rpath = dir + "/records.jsonl";
  for_each_line(rpath, [&](const std::string& line, size_t n) {
    auto j = detail::parse_line(line, n, rpath);
    const auto key = detail::json_get<std::string>(j, "key", n, rpath);
    Vector u = vec(j, "u", store.dims.u, key, rpath, n);
    Vector b = vec(j, "b", store.dims.b, key, rpath, n);
    if (j.contains("i")) store.images[key] = vec(j, "i", store.dims.i, key, rpath, n);
    if (!store.text.emplace(key, std::make_pair(std::move(u), std::move(b))).second) {
      throw DataError(rpath + ":" + std::to_string(n) + ": duplicate key " + key);
    }
  });
  const std::string ipath = dir + "/images.jsonl";
  if (std::filesystem::exists(ipath)) {
    for_each_line(ipath, [&](const std::string& line, size_t n) {
      auto j = detail::parse_line(line, n, ipath);
      const auto key = detail::json_get<std::string>(j, "key", n, ipath);
      if (!store.images.emplace(key, vec(j, "i", store.dims.i, key, ipath, n)).second) {
        throw DataError(ipath + ":" + std::to_string(n) + ": duplicate image key " + key);
      }
    });
  }
  if (man.contains("count") && man["count"].get<size_t>() != store.text.size()) {
    throw DataError(mpath + ": count " + man["count"].dump() + " but " +
                    std::to_string(store.text.size()) + " records");
  }
  if (man.contains("image_count") && man["image_count"].get<size_t>() != store.images.size()) {
    throw DataError(mpath + ": image_count " + man["image_count"].dump() + " but " +
                    std::to_string(store.images.size()) + " images");
  }
  return store;
}

/// Format validator: every timeline tweet and mention host tweet must have a
/// text record and an image record, with finite components.
inline std::vector<std::string> validate_features(const FeatureStore& store,
                                                  const KnowledgeBase& kb,
                                                  const std::vector<MentionRecord>& mentions) {
  std::vector<std::string> problems;
  auto finite = [](const Vector& v) {
    for (double x : v) {
      if (!std::isfinite(x)) return false;
    }
    return true;
  };
  std::set<std::string> needed;
  for (const auto& [_, e] : kb.entities) needed.insert(e.timeline.begin(), e.timeline.end());
  for (const auto& m : mentions) needed.insert(m.tweet_id);
  for (const auto& id : needed) {
    auto t = kb.tweets.find(id);
    if (t == kb.tweets.end()) continue;
    auto it = store.text.find(id);
    if (it == store.text.end()) {
      problems.push_back("missing text record for tweet " + id);
    } else if (!finite(it->second.first) || !finite(it->second.second)) {
      problems.push_back("non-finite text vector for tweet " + id);
    }
    if (!t->second.image_ref) continue;
    auto im = store.images.find(*t->second.image_ref);
    if (im == store.images.end()) {
      problems.push_back("missing image record for " + *t->second.image_ref);
    } else if (!finite(im->second)) {
      problems.push_back("non-finite image vector for " + *t->second.image_ref);
    }
  }
  return problems;
}

inline void save_topics(const std::string& path, const TopicMap& topics) {
  std::string out;
  for (const auto& [screen, v] : topics) {
    nlohmann::ordered_json j;
    j["screen_name"] = screen;
    j["topic"] = v;
    out += j.dump() + "\n";
  }
  write_file(path, out);
}

inline TopicMap load_topics(const std::string& path) {
  TopicMap out;
  for_each_line(path, [&](const std::string& line, size_t n) {
    auto j = detail::parse_line(line, n, path);
    out[detail::json_get<std::string>(j, "screen_name", n, path)] =
        detail::json_get<Vector>(j, "topic", n, path);
  });
  return out;
}

}  // namespace mmel
