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

#include "mmel/bm25.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace mmel {
namespace {

using testing::add;
using testing::make_entity;
using testing::make_tweet;
using testing::TempDir;

// A: "apple pie"; B: "banana banana bread" + "Banana split! <url>".
KnowledgeBase TwoDocKb() {
  KnowledgeBase kb;
  add(kb, make_tweet("a1", "A", "apple pie"));
  add(kb, make_tweet("b1", "B", "banana banana bread"));
  add(kb, make_tweet("b2", "B", "Banana split! http://x.co/1"));
  add(kb, make_entity("A", "A a", EntityKind::kPerson, 1, {"a1"}));
  add(kb, make_entity("B", "B b", EntityKind::kPerson, 1, {"b1", "b2"}));
  return kb;
}

TEST(TokenizeTest, LowercasesAndDropsUrls) {
  EXPECT_EQ(tokenize("Hello, @World #AI https://t.co/x www.a.b ok"),
            (std::vector<std::string>{"hello", "world", "ai", "ok"}));
  EXPECT_TRUE(tokenize("   ").empty());
}

TEST(Bm25Test, HandComputedScore) {
  const TimelineIndex idx = build_index(TwoDocKb());
  // A: {apple, pie} len 2; B: {banana x3, bread, split} len 5; avgdl 3.5.
  ASSERT_EQ(idx.doc("A").length, 2);
  ASSERT_EQ(idx.doc("B").length, 5);
  EXPECT_DOUBLE_EQ(idx.avgdl(), 3.5);
  const double idf1 = std::log(1.0 + (2 - 1 + 0.5) / (1 + 0.5));  // ln 2
  EXPECT_NEAR(idx.idf("banana"), std::log(2.0), 1e-15);
  const double normB = 1.2 * (0.25 + 0.75 * 5.0 / 3.5);
  const double want = idf1 * 3 * 2.2 / (3 + normB) + idf1 * 1 * 2.2 / (1 + normB);
  EXPECT_NEAR(idx.score({"banana", "bread", "banana", "kiwi"}, "B"), want, 1e-12);
  EXPECT_EQ(idx.score({"banana"}, "A"), 0.0);
}

TEST(Bm25Test, IdfStaysPositiveForUbiquitousTerms) {
  KnowledgeBase kb = TwoDocKb();
  kb.tweets.at("a1").text = "banana pie";
  const TimelineIndex idx = build_index(kb);
  EXPECT_GT(idx.idf("banana"), 0.0);
  EXPECT_NEAR(idx.idf("banana"), std::log(1.0 + 0.5 / 2.5), 1e-15);
}

TEST(Bm25Test, EmptyKbThrows) {
  EXPECT_THROW(build_index(KnowledgeBase{}), DataError);
}

TEST(Bm25Test, EmptyTimelineScoresZero) {
  KnowledgeBase kb = TwoDocKb();
  add(kb, make_entity("C", "C c", EntityKind::kPerson, 1, {}));
  const TimelineIndex idx = build_index(kb);
  EXPECT_EQ(idx.score({"banana"}, "C"), 0.0);
}

TEST(Bm25Test, MentionQueryDropsMentionWords) {
  KnowledgeBase kb = TwoDocKb();
  add(kb, make_tweet("m1", "fan", "Banana talk by Ng!"));
  const auto q = mention_query({{"Ng"}, "m1", "B"}, kb);
  EXPECT_EQ(q, (std::vector<std::string>{"banana", "talk", "by"}));
}

TEST(Bm25Test, SaveLoadRoundTrip) {
  TempDir dir;
  const TimelineIndex idx = build_index(TwoDocKb());
  idx.save(dir.file("bm25.json"));
  const TimelineIndex back = TimelineIndex::load(dir.file("bm25.json"));
  EXPECT_EQ(idx, back);
  EXPECT_EQ(idx.score({"banana"}, "B"), back.score({"banana"}, "B"));
}

}  // namespace
}  // namespace mmel
