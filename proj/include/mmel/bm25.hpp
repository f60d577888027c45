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

// Okapi BM25 over entity timelines: each entity's concatenated timeline is
// one document, and a mention tweet is the query.

#pragma once

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmel/candgen.hpp"
#include "mmel/common.hpp"
#include "mmel/corpus.hpp"

namespace mmel {

/// Lowercases, drops URLs, and splits on runs of non-alphanumerics, so "@"
/// and "#" sigils vanish and the word after them is kept.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& piece : split_whitespace(text)) {
    std::string lower;
    lower.reserve(piece.size());
    for (char c : piece) lower.push_back(ascii_lower(c));
    if (lower.rfind("http://", 0) == 0 || lower.rfind("https://", 0) == 0 ||
        lower.rfind("www.", 0) == 0) {
      continue;
    }
    std::string cur;
    for (char c : lower) {
      if (is_word_byte(static_cast<unsigned char>(c))) {
        cur.push_back(c);
      } else if (!cur.empty()) {
        out.push_back(std::move(cur));
        cur.clear();
      }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
  }
  return out;
}

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;

  bool operator==(const Bm25Params&) const = default;
};

struct TimelineDoc {
  std::map<std::string, int64_t> tf;
  int64_t length = 0;

  bool operator==(const TimelineDoc&) const = default;
};

class TimelineIndex {
 public:
  TimelineIndex() = default;

  /// One document per entity; throws DataError on an empty KB.
  static TimelineIndex build(const KnowledgeBase& kb, Bm25Params params = {}) {
    if (kb.entities.empty()) throw DataError("build_index: empty knowledge base");
    TimelineIndex idx;
    idx.params_ = params;
    int64_t total = 0;
    for (const auto& [screen, e] : kb.entities) {
      TimelineDoc doc;
      for (const auto& id : e.timeline) {
        for (auto& tok : tokenize(kb.tweet(id).text)) {
          ++doc.tf[tok];
          ++doc.length;
        }
      }
      for (const auto& [term, _] : doc.tf) ++idx.df_[term];
      total += doc.length;
      idx.docs_.emplace(screen, std::move(doc));
    }
    idx.avgdl_ = static_cast<double>(total) / static_cast<double>(idx.docs_.size());
    return idx;
  }

  size_t num_docs() const { return docs_.size(); }
  double avgdl() const { return avgdl_; }
  const Bm25Params& params() const { return params_; }

  int64_t df(const std::string& term) const {
    auto it = df_.find(term);
    return it == df_.end() ? 0 : it->second;
  }

  const TimelineDoc& doc(const std::string& screen_name) const {
    auto it = docs_.find(screen_name);
    if (it == docs_.end()) throw DataError("bm25: unknown entity " + screen_name);
    return it->second;
  }

  double idf(const std::string& term) const {
    const double n = static_cast<double>(docs_.size());
    const double d = static_cast<double>(df(term));
    return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
  }

  /// BM25 with the +1-smoothed idf. The query is treated as a set.
  double score(const std::vector<std::string>& query,
               const std::string& screen_name) const {
    const TimelineDoc& d = doc(screen_name);
    const std::set<std::string> terms(query.begin(), query.end());
    const double norm = params_.k1 * (1.0 - params_.b +
                                      params_.b * static_cast<double>(d.length) / avgdl_);
    double s = 0.0;
    for (const auto& t : terms) {
      auto it = d.tf.find(t);
      if (it == d.tf.end()) continue;
      const double tf = static_cast<double>(it->second);
      s += idf(t) * tf * (params_.k1 + 1.0) / (tf + norm);
    }
    return s;
  }

  void save(const std::string& path) const {
    nlohmann::ordered_json j;
    j["format"] = "mmel.bm25";
    j["version"] = 1;
    j["k1"] = params_.k1;
    j["b"] = params_.b;
    j["num_docs"] = docs_.size();
    j["avgdl"] = avgdl_;
    nlohmann::ordered_json df = nlohmann::ordered_json::object();
    for (const auto& [t, n] : df_) df[t] = n;
    j["df"] = std::move(df);
    nlohmann::ordered_json docs = nlohmann::ordered_json::object();
    for (const auto& [screen, d] : docs_) {
      nlohmann::ordered_json jd;
      jd["length"] = d.length;
      nlohmann::ordered_json tf = nlohmann::ordered_json::object();
      for (const auto& [t, n] : d.tf) tf[t] = n;
      jd["tf"] = std::move(tf);
      docs[screen] = std::move(jd);
    }
    j["docs"] = std::move(docs);
    write_file(path, j.dump() + "\n");
  }

  static TimelineIndex load(const std::string& path) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& ex) {
      throw DataError(path + ": " + ex.what());
    }
    if (j.value("format", "") != "mmel.bm25") throw DataError(path + ": not a bm25 index");
    TimelineIndex idx;
    idx.params_.k1 = j.at("k1").get<double>();
    idx.params_.b = j.at("b").get<double>();
    idx.avgdl_ = j.at("avgdl").get<double>();
    for (const auto& [t, n] : j.at("df").items()) idx.df_[t] = n.get<int64_t>();
    for (const auto& [screen, jd] : j.at("docs").items()) {
      TimelineDoc d;
      d.length = jd.at("length").get<int64_t>();
      for (const auto& [t, n] : jd.at("tf").items()) d.tf[t] = n.get<int64_t>();
      idx.docs_.emplace(screen, std::move(d));
    }
    if (idx.docs_.size() != j.at("num_docs").get<size_t>()) {
      throw DataError(path + ": num_docs disagrees with docs");
    }
    return idx;
  }

  bool operator==(const TimelineIndex&) const = default;

 private:
  Bm25Params params_;
  std::map<std::string, TimelineDoc> docs_;
  std::map<std::string, int64_t> df_;
  double avgdl_ = 0.0;
};

inline TimelineIndex build_index(const KnowledgeBase& kb, Bm25Params params = {}) {
  return TimelineIndex::build(kb, params);
}

inline double bm25_score(const std::vector<std::string>& query,
                         const std::string& screen_name, const TimelineIndex& index) {
  return index.score(query, screen_name);
}

/// Mention-tweet tokens minus the mention words themselves; the surface
/// form matches every candidate and carries no signal.
inline std::vector<std::string> mention_query(const MentionRecord& mention,
                                              const KnowledgeBase& kb) {
  std::set<std::string> drop;
  for (const auto& w : mention.words) {
    for (auto& t : tokenize(w)) drop.insert(std::move(t));
  }
  std::vector<std::string> q;
  for (auto& t : tokenize(kb.tweet(mention.tweet_id).text)) {
    if (!drop.count(t)) q.push_back(std::move(t));
  }
  return q;
}

}  // namespace mmel
