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

// Non-neural rankers: popularity, BM25, single-modality cosine, and an
// Extremely Randomized Trees classifier over pairwise features.

#pragma once

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmel/bm25.hpp"
#include "mmel/features.hpp"
#include "mmel/fusion.hpp"
#include "mmel/linking.hpp"

namespace mmel {

// --- popularity -------------------------------------------------------------------

class PopularityScorer : public Scorer {
 public:
  explicit PopularityScorer(const KnowledgeBase& kb) : kb_(kb) {}
  std::string name() const override { return "Popularity"; }
  std::vector<double> scores(const MentionRecord&, const CandidateSet& c) const override {
    std::vector<double> out;
    for (const auto& cand : c.candidates) {
      out.push_back(static_cast<double>(kb_.entity(cand.screen_name).followers));
    }
    return out;
  }

 private:
  const KnowledgeBase& kb_;
};

/// Followers desc, then friends, tweet count, screen name.
inline CandidateSet popularity_rank(const CandidateSet& cands, const KnowledgeBase& kb) {
  if (cands.empty()) throw DataError("popularity_rank: empty candidate set");
  return rank(PopularityScorer(kb), MentionRecord{}, cands, kb);
}

// --- BM25 -------------------------------------------------------------------------

class Bm25Scorer : public Scorer {
 public:
  Bm25Scorer(const TimelineIndex& index, const KnowledgeBase& kb) : index_(index), kb_(kb) {}
  std::string name() const override { return "BM25"; }
  std::vector<double> scores(const MentionRecord& m, const CandidateSet& c) const override {
    const auto q = mention_query(m, kb_);
    std::vector<double> out;
    for (const auto& cand : c.candidates) out.push_back(index_.score(q, cand.screen_name));
    return out;
  }

 private:
  const TimelineIndex& index_;
  const KnowledgeBase& kb_;
};

// --- raw similarity ---------------------------------------------------------------

enum class Modality { kUni, kBi, kImg, kS2v };

inline std::string to_string(Modality m) {
  switch (m) {
    case Modality::kUni: return "S2V-uni";
    case Modality::kBi: return "S2V-bi";
    case Modality::kImg: return "Img";
    case Modality::kS2v: return "S2V";
  }
  return "?";
}

/// Cosine on one modality; kS2v averages the unigram and bigram cosines.
/// Zero-norm vectors give 0 and bump `degenerate` when provided.
inline double raw_similarity(const FeatureBundle& mention, const FeatureBundle& entity,
                             Modality modality, size_t* degenerate = nullptr) {
  auto cos = [&](const Vector& a, const Vector& b) {
    bool zero = false;
    const double s = cosine(a, b, &zero);
    if (zero && degenerate) ++*degenerate;
    return s;
  };
  switch (modality) {
    case Modality::kUni: return cos(mention.u, entity.u);
    case Modality::kBi: return cos(mention.b, entity.b);
    case Modality::kImg: return cos(mention.i, entity.i);
    case Modality::kS2v: return 0.5 * (cos(mention.u, entity.u) + cos(mention.b, entity.b));
  }
  return 0.0;
}

class RawSimilarityScorer : public Scorer {
 public:
  RawSimilarityScorer(Modality modality, const KnowledgeBase& kb, const FeatureStore& store,
                      const EntityFeatureCache& entities)
      : modality_(modality), kb_(kb), store_(store), entities_(entities) {}
  std::string name() const override { return to_string(modality_); }
  std::vector<double> scores(const MentionRecord& m, const CandidateSet& c) const override {
    const FeatureBundle mb = mention_features(m, kb_, store_);
    std::vector<double> out;
    for (const auto& cand : c.candidates) {
      out.push_back(raw_similarity(mb, entities_.at(cand.screen_name), modality_, &degenerate_));
    }
    return out;
  }
  size_t degenerate_count() const { return degenerate_; }

 private:
  Modality modality_;
  const KnowledgeBase& kb_;
  const FeatureStore& store_;
  const EntityFeatureCache& entities_;
  mutable size_t degenerate_ = 0;
};

// --- Extra-Trees ------------------------------------------------------------------

struct ExtraTreesConfig {
  size_t n_trees = 100;
  size_t k = 0;  // features tried per split; 0 means ceil(sqrt(d))
  size_t n_min = 2;
  uint64_t seed = 1;
};

struct TreeNode {
  int feature = -1;  // -1 for a leaf
  double threshold = 0.0;  // x[feature] < threshold goes left
  int left = -1;
  int right = -1;
  double p_positive = 0.0;  // leaf class frequency

  bool operator==(const TreeNode&) const = default;
};

struct ExtraTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  bool operator==(const ExtraTree&) const = default;

  double predict(const Vector& x) const {
    size_t n = 0;
    while (nodes[n].feature >= 0) {
      const TreeNode& t = nodes[n];
      n = static_cast<size_t>(x[static_cast<size_t>(t.feature)] < t.threshold ? t.left
                                                                                : t.right);
    }
    return nodes[n].p_positive;
  }
};

struct ExtraTreesForest {
  size_t n_features = 0;
  std::vector<ExtraTree> trees;

  bool operator==(const ExtraTreesForest&) const = default;

  /// Mean leaf frequency of the positive class across trees.
  double predict_proba(const Vector& x) const {
    nn::require_dim(x.size(), n_features, "extratrees predict");
    double s = 0.0;
    for (const auto& t : trees) s += t.predict(x);
    return s / static_cast<double>(trees.size());
  }
};

namespace et_detail {

inline double gini(size_t pos, size_t n) {
  if (n == 0) return 0.0;
  const double p = static_cast<double>(pos) / static_cast<double>(n);
  return 2.0 * p * (1.0 - p);
}

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<Vector>& x, const std::vector<int>& y, size_t k, size_t n_min,
              uint64_t seed)
      : x_(x), y_(y), k_(k), n_min_(n_min), rng_(seed) {}

  ExtraTree build() {
    std::vector<size_t> idx(x_.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    tree_.nodes.clear();
    grow(idx);
    return std::move(tree_);
  }

 private:
  int leaf(const std::vector<size_t>& idx, size_t pos) {
    TreeNode n;
    n.p_positive = static_cast<double>(pos) / static_cast<double>(idx.size());
    tree_.nodes.push_back(n);
    return static_cast<int>(tree_.nodes.size() - 1);
  }

  int grow(const std::vector<size_t>& idx) {
    size_t pos = 0;
    for (size_t i : idx) pos += y_[i] != 0;
    if (idx.size() < n_min_ || pos == 0 || pos == idx.size()) return leaf(idx, pos);

    const size_t d = x_[idx[0]].size();
    std::vector<size_t> varying;
    std::vector<double> lo(d), hi(d);
    for (size_t f = 0; f < d; ++f) {
      lo[f] = hi[f] = x_[idx[0]][f];
      for (size_t i : idx) {
        lo[f] = std::min(lo[f], x_[i][f]);
        hi[f] = std::max(hi[f], x_[i][f]);
      }
      if (hi[f] > lo[f]) varying.push_back(f);
    }
    if (varying.empty()) return leaf(idx, pos);

    const double parent = gini(pos, idx.size());
    const double n = static_cast<double>(idx.size());
    int best_f = -1;
    double best_cut = 0.0, best_gain = -1.0;
    for (size_t pick : rng_.sample_without_replacement(varying.size(),
                                                       std::min(k_, varying.size()))) {
      const size_t f = varying[pick];
      double cut;
      do {
        cut = rng_.uniform(lo[f], hi[f]);
      } while (!(cut > lo[f]));
      size_t nl = 0, pl = 0;
      for (size_t i : idx) {
        if (x_[i][f] < cut) {
          ++nl;
          pl += y_[i] != 0;
        }
      }
      const size_t nr = idx.size() - nl, pr = pos - pl;
      const double gain = parent - (static_cast<double>(nl) / n) * gini(pl, nl) -
                          (static_cast<double>(nr) / n) * gini(pr, nr);
      if (gain > best_gain) {
        best_gain = gain;
        best_f = static_cast<int>(f);
        best_cut = cut;
      }
    }
    std::vector<size_t> left, right;
    for (size_t i : idx) {
      (x_[i][static_cast<size_t>(best_f)] < best_cut ? left : right).push_back(i);
    }
    const int self = static_cast<int>(tree_.nodes.size());
    tree_.nodes.push_back(TreeNode{best_f, best_cut, -1, -1, 0.0});
    const int l = grow(left);
    const int r = grow(right);
    tree_.nodes[static_cast<size_t>(self)].left = l;
    tree_.nodes[static_cast<size_t>(self)].right = r;
    return self;
  }

  const std::vector<Vector>& x_;
  const std::vector<int>& y_;
  size_t k_, n_min_;
  Rng rng_;
  ExtraTree tree_;
};

}  // namespace et_detail

/// Fully randomized cut points, best Gini reduction among k random features.
inline ExtraTreesForest extratrees_train(const std::vector<Vector>& x, const std::vector<int>& y,
                                         const ExtraTreesConfig& cfg) {
  if (x.size() != y.size()) throw DataError("extratrees: X and y differ in length");
  if (cfg.n_min < 2) throw UsageError("extratrees: n_min must be >= 2");
  if (cfg.n_trees == 0) throw UsageError("extratrees: need at least one tree");
  if (x.size() < cfg.n_min) throw DataError("extratrees: fewer samples than n_min");
  const size_t d = x[0].size();
  if (d == 0) throw DataError("extratrees: zero features");
  for (const auto& row : x) nn::require_dim(row.size(), d, "extratrees row");
  const size_t k = cfg.k == 0 ? static_cast<size_t>(std::ceil(std::sqrt(static_cast<double>(d))))
                              : cfg.k;
  if (k > d) throw UsageError("extratrees: k exceeds the feature count");
  ExtraTreesForest forest;
  forest.n_features = d;
  for (size_t t = 0; t < cfg.n_trees; ++t) {
    forest.trees.push_back(
        et_detail::TreeBuilder(x, y, k, cfg.n_min, derive_seed(cfg.seed, t)).build());
  }
  return forest;
}

namespace et_detail {

inline nlohmann::ordered_json node_json(const ExtraTree& t, size_t n) {
  const TreeNode& node = t.nodes[n];
  nlohmann::ordered_json j;
  if (node.feature < 0) {
    j["p"] = node.p_positive;
    return j;
  }
  j["feature"] = node.feature;
  j["threshold"] = node.threshold;
  j["left"] = node_json(t, static_cast<size_t>(node.left));
  j["right"] = node_json(t, static_cast<size_t>(node.right));
  return j;
}

inline int node_from_json(const nlohmann::json& j, ExtraTree& t) {
  const int self = static_cast<int>(t.nodes.size());
  t.nodes.emplace_back();
  if (j.contains("p")) {
    t.nodes[static_cast<size_t>(self)].p_positive = j.at("p").get<double>();
    return self;
  }
  TreeNode n;
  n.feature = j.at("feature").get<int>();
  n.threshold = j.at("threshold").get<double>();
  n.left = node_from_json(j.at("left"), t);
  n.right = node_from_json(j.at("right"), t);
  t.nodes[static_cast<size_t>(self)] = n;
  return self;
}

}  // namespace et_detail

struct ExtraTreesModel {
  FeatureMask mask;
  Standardizer standardizer;
  ExtraTreesForest forest;

  bool operator==(const ExtraTreesModel&) const = default;
};

inline void save_extratrees(const std::string& path, const ExtraTreesModel& m) {
  nlohmann::ordered_json j;
  j["format"] = "mmel.extratrees";
  j["version"] = 1;
  j["mask"] = m.mask.str();
  j["standardizer"] = to_json(m.standardizer);
  j["n_features"] = m.forest.n_features;
  nlohmann::ordered_json trees = nlohmann::ordered_json::array();
  for (const auto& t : m.forest.trees) trees.push_back(et_detail::node_json(t, 0));
  j["trees"] = std::move(trees);
  write_file(path, j.dump() + "\n");
}

inline ExtraTreesModel load_extratrees(const std::string& path) {
  ExtraTreesModel m;
  try {
    const auto j = nlohmann::json::parse(read_file(path));
    if (j.value("format", "") != "mmel.extratrees" || j.value("version", 0) != 1) {
      throw DataError(path + ": not a version-1 extratrees model");
    }
    m.mask = FeatureMask::parse(j.at("mask").get<std::string>());
    m.standardizer = standardizer_from_json(j.at("standardizer"));
    m.forest.n_features = j.at("n_features").get<size_t>();
    for (const auto& jt : j.at("trees")) {
      ExtraTree t;
      et_detail::node_from_json(jt, t);
      m.forest.trees.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(path + ": " + ex.what());
  }
  if (m.forest.trees.empty()) throw DataError(path + ": forest has no trees");
  return m;
}

/// Mean positive-class probability; popularity tie-break.
class ExtraTreesScorer : public Scorer {
 public:
  ExtraTreesScorer(const ExtraTreesModel& model, const FeatureSources& src, std::string name)
      : model_(model), src_(src), name_(std::move(name)) {
    fusion_detail::require_sources(model.mask, src);
  }
  std::string name() const override { return name_; }
  std::vector<double> scores(const MentionRecord& m, const CandidateSet& c) const override {
    std::vector<double> out;
    for (const auto& x : assemble_rows(m, c, src_, model_.mask, model_.standardizer)) {
      out.push_back(model_.forest.predict_proba(x));
    }
    return out;
  }

 private:
  const ExtraTreesModel& model_;
  const FeatureSources& src_;
  std::string name_;
};

inline CandidateSet extratrees_rank(const MentionRecord& m, const CandidateSet& cands,
                                    const ExtraTreesModel& model, const FeatureSources& src) {
  if (cands.empty()) throw DataError("extratrees_rank: empty candidate set");
  return rank(ExtraTreesScorer(model, src, "ET"), m, cands, src.kb);
}

}  // namespace mmel
