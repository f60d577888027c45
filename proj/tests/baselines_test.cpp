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


#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "mmel/baselines.hpp"
#include "test_util.hpp"

namespace mmel {
namespace {

using testing::add;
using testing::make_entity;
using testing::make_tweet;
using testing::TempDir;

KnowledgeBase PopularityKb() {
  KnowledgeBase kb;
  add(kb, make_entity("a", "A Lee", EntityKind::kPerson, 100, {}));
  add(kb, make_entity("b", "B Lee", EntityKind::kPerson, 300, {}));
  add(kb, make_entity("c", "C Lee", EntityKind::kPerson, 100, {}));
  add(kb, make_entity("d", "D Lee", EntityKind::kPerson, 50, {}));
  kb.entities.at("c").friends = 80;  // a has 50
  return kb;
}

CandidateSet Set(std::vector<std::string> names) {
  CandidateSet s;
  for (auto& n : names) s.candidates.push_back({std::move(n), std::nullopt});
  return s;
}

TEST(PopularityTest, FollowersThenFriends) {
  const KnowledgeBase kb = PopularityKb();
  const CandidateSet r = popularity_rank(Set({"a", "b", "c", "d"}), kb);
  EXPECT_EQ(r.names(), (std::vector<std::string>{"b", "c", "a", "d"}));
}

TEST(PopularityTest, InvariantToInputOrder) {
  const KnowledgeBase kb = PopularityKb();
  std::vector<std::string> names = {"a", "b", "c", "d"};
  const auto want = popularity_rank(Set(names), kb).names();
  std::sort(names.begin(), names.end());
  do {
    EXPECT_EQ(popularity_rank(Set(names), kb).names(), want);
  } while (std::next_permutation(names.begin(), names.end()));
}

TEST(PopularityTest, FullTieFallsBackToName) {
  KnowledgeBase kb;
  add(kb, make_entity("zed", "Z Lee", EntityKind::kPerson, 7, {}));
  add(kb, make_entity("amy", "A Lee", EntityKind::kPerson, 7, {}));
  EXPECT_EQ(popularity_rank(Set({"zed", "amy"}), kb).names(),
            (std::vector<std::string>{"amy", "zed"}));
  EXPECT_THROW(popularity_rank(CandidateSet{}, kb), DataError);
}

TEST(RawSimilarityTest, PerModality) {
  FeatureBundle m{{1, 0}, {0, 1}, {1, 1, 0}};
  FeatureBundle e{{1, 0}, {1, 0}, {0, 1, 1}};
  EXPECT_DOUBLE_EQ(raw_similarity(m, e, Modality::kUni), 1.0);
  EXPECT_DOUBLE_EQ(raw_similarity(m, e, Modality::kBi), 0.0);
  EXPECT_NEAR(raw_similarity(m, e, Modality::kImg), 0.5, 1e-15);
  EXPECT_DOUBLE_EQ(raw_similarity(m, e, Modality::kS2v), 0.5);
}

TEST(RawSimilarityTest, ZeroVectorCountsAsDegenerate) {
  FeatureBundle m{{0, 0}, {1, 0}, {1}};
  FeatureBundle e{{1, 0}, {1, 0}, {1}};
  size_t degenerate = 0;
  EXPECT_EQ(raw_similarity(m, e, Modality::kUni, &degenerate), 0.0);
  EXPECT_EQ(degenerate, 1u);
  EXPECT_DOUBLE_EQ(raw_similarity(m, e, Modality::kS2v, &degenerate), 0.5);
  EXPECT_EQ(degenerate, 2u);
}

TEST(RawSimilarityTest, ScorerRanksByCosine) {
  const KnowledgeBase kb = testing::two_entity_kb();
  FeatureStore store = testing::random_store(kb, {2, 2, 2}, 3);
  store.images.at("img_m1") = {1.0, 0.0};
  store.images.at("img_t1") = {0.0, 1.0};
  store.images.at("img_t2") = {0.0, 1.0};
  store.images.at("img_t3") = {1.0, 0.1};
  const EntityFeatureCache ent(kb, store);
  const RawSimilarityScorer img(Modality::kImg, kb, store, ent);
  const MentionRecord m{{"ng"}, "m1", "AliceNg"};
  const CandidateSet r = rank(img, m, CandidateIndex(kb).candidates(m), kb);
  EXPECT_EQ(r.candidates.front().screen_name, "AliceNg");
  EXPECT_EQ(img.name(), "Img");
}

// Two noisy blobs in d dimensions; the label is the blob.
void Blobs(size_t n, size_t d, double sep, uint64_t seed, std::vector<Vector>* x,
           std::vector<int>* y) {
  Rng rng(seed);
  for (size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    Vector v(d);
    for (double& c : v) c = rng.normal() + (label ? sep : -sep) / std::sqrt(double(d));
    x->push_back(std::move(v));
    y->push_back(label);
  }
}

double Accuracy(const ExtraTreesForest& f, const std::vector<Vector>& x,
                const std::vector<int>& y) {
  size_t ok = 0;
  for (size_t i = 0; i < x.size(); ++i) ok += (f.predict_proba(x[i]) >= 0.5) == (y[i] == 1);
  return static_cast<double>(ok) / static_cast<double>(x.size());
}

TEST(ExtraTreesTest, FitsTrainingSetExactly) {
  std::vector<Vector> x;
  std::vector<int> y;
  Blobs(200, 5, 0.5, 1, &x, &y);  // heavily overlapping
  const ExtraTreesForest f = extratrees_train(x, y, {});
  EXPECT_EQ(f.trees.size(), 100u);
  for (size_t i = 0; i < x.size(); ++i) EXPECT_EQ(f.predict_proba(x[i]), double(y[i])) << i;
}

TEST(ExtraTreesTest, GeneralizesOnSeparatedBlobs) {
  std::vector<Vector> x, xt;
  std::vector<int> y, yt;
  Blobs(200, 4, 6.0, 2, &x, &y);
  Blobs(200, 4, 6.0, 3, &xt, &yt);
  EXPECT_GE(Accuracy(extratrees_train(x, y, {}), xt, yt), 0.95);
}

TEST(ExtraTreesTest, SingleClassGivesConstantLeaf) {
  const std::vector<Vector> x = {{1, 2}, {3, 4}, {5, 6}};
  const ExtraTreesForest f = extratrees_train(x, {0, 0, 0}, {});
  for (const auto& t : f.trees) EXPECT_EQ(t.nodes.size(), 1u);
  EXPECT_EQ(f.predict_proba({9, 9}), 0.0);
}

TEST(ExtraTreesTest, DeterministicPerSeed) {
  std::vector<Vector> x;
  std::vector<int> y;
  Blobs(80, 3, 1.0, 4, &x, &y);
  ExtraTreesConfig cfg;
  EXPECT_EQ(extratrees_train(x, y, cfg), extratrees_train(x, y, cfg));
  cfg.seed = 2;
  EXPECT_NE(extratrees_train(x, y, cfg), extratrees_train(x, y, {}));
}

TEST(ExtraTreesTest, ProbabilitiesInUnitInterval) {
  std::vector<Vector> x, xt;
  std::vector<int> y, yt;
  Blobs(100, 3, 1.0, 5, &x, &y);
  Blobs(100, 3, 1.0, 6, &xt, &yt);
  const ExtraTreesForest f = extratrees_train(x, y, {});
  for (const auto& v : xt) {
    const double p = f.predict_proba(v);
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
}

TEST(ExtraTreesTest, RejectsBadInput) {
  const std::vector<Vector> x = {{1}, {2}};
  EXPECT_THROW(extratrees_train(x, {0}, {}), DataError);
  ExtraTreesConfig cfg;
  cfg.n_min = 1;
  EXPECT_THROW(extratrees_train(x, {0, 1}, cfg), UsageError);
  cfg = {};
  cfg.k = 2;
  EXPECT_THROW(extratrees_train(x, {0, 1}, cfg), UsageError);
  EXPECT_THROW(extratrees_train({{1}, {1, 2}}, {0, 1}, {}), nn::ShapeError);
}

TEST(ExtraTreesTest, JsonRoundTripIsExact) {
  TempDir dir;
  std::vector<Vector> x;
  std::vector<int> y;
  Blobs(60, 3, 1.0, 7, &x, &y);
  ExtraTreesConfig cfg;
  cfg.n_trees = 10;
  ExtraTreesModel m;
  m.mask = FeatureMask::parse("uni+img+bm25");
  m.standardizer.mean = {0.1, 0.2, 0.3, 0.4};
  m.forest = extratrees_train(x, y, cfg);
  save_extratrees(dir.file("et.json"), m);
  EXPECT_EQ(load_extratrees(dir.file("et.json")), m);
}

TEST(ExtraTreesTest, LoadRejectsOtherFiles) {
  TempDir dir;
  write_file(dir.file("x.json"), R"({"format":"other","version":1})");
  EXPECT_THROW(load_extratrees(dir.file("x.json")), DataError);
  write_file(dir.file("y.json"), "{not json");
  EXPECT_THROW(load_extratrees(dir.file("y.json")), DataError);
}

}  // namespace
}  // namespace mmel
