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

#include "mmel/corpus.hpp"

#include <gtest/gtest.h>

#include "mmel/dataset_forge.hpp"
#include "test_util.hpp"

namespace mmel {
namespace {

using testing::TempDir;
using testing::two_entity_kb;

// Field-by-field comparison, independent of the defaulted operator==.
void ExpectSameKb(const KnowledgeBase& a, const KnowledgeBase& b) {
  ASSERT_EQ(a.entities.size(), b.entities.size());
  for (const auto& [k, e] : a.entities) {
    const Entity& f = b.entity(k);
    EXPECT_EQ(e.screen_name, f.screen_name);
    EXPECT_EQ(e.user_name, f.user_name);
    EXPECT_EQ(e.kind, f.kind);
    EXPECT_EQ(e.followers, f.followers);
    EXPECT_EQ(e.friends, f.friends);
    EXPECT_EQ(e.tweet_count, f.tweet_count);
    EXPECT_EQ(e.timeline, f.timeline);
  }
  ASSERT_EQ(a.tweets.size(), b.tweets.size());
  for (const auto& [k, t] : a.tweets) {
    const Tweet& u = b.tweet(k);
    EXPECT_EQ(t.id, u.id);
    EXPECT_EQ(t.author, u.author);
    EXPECT_EQ(t.text, u.text);
    EXPECT_EQ(t.image_ref, u.image_ref);
    EXPECT_EQ(t.is_retweet, u.is_retweet);
  }
}

TEST(CorpusTest, LoadsTwoEntityFixture) {
  TempDir dir;
  write_file(dir.file("kb.jsonl"),
             R"({"screen_name":"@AndrewYNg","user_name":"Andrew Y. Ng","kind":"person","followers":500,"friends":20,"tweet_count":9,"timeline":["t1"],"description":"ignored"})"
             "\n"
             R"({"screen_name":"AliceNg","user_name":"Alice Ng","kind":"person","followers":10,"friends":2,"tweet_count":4,"timeline":["t2"]})"
             "\n");
  write_file(dir.file("tweets.jsonl"),
             R"({"id":"t2","author":"AliceNg","text":"garden","image":"i2","retweet":false})"
             "\n"
             R"({"id":"t1","author":"AndrewYNg","text":"deep learning","image":"i1"})"
             "\n");
  KnowledgeBase kb = load_kb(dir.file("kb.jsonl"), dir.file("tweets.jsonl"));
  EXPECT_EQ(kb.entities.size(), 2u);
  EXPECT_TRUE(kb.has_entity("AndrewYNg"));  // "@" stripped
  EXPECT_TRUE(validate_kb(kb).empty());
}

TEST(CorpusTest, DuplicateScreenNameNamesTheLine) {
  TempDir dir;
  write_file(dir.file("tweets.jsonl"), "");
  const std::string rec =
      R"({"screen_name":"A","user_name":"A B","kind":"person","followers":1,"friends":1,"tweet_count":1,"timeline":[]})";
  write_file(dir.file("kb.jsonl"), rec + "\n" + rec + "\n");
  try {
    load_kb(dir.file("kb.jsonl"), dir.file("tweets.jsonl"));
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("duplicate screen_name"), std::string::npos);
  }
}

TEST(CorpusTest, ParseErrorCarriesLineNumber) {
  TempDir dir;
  write_file(dir.file("tweets.jsonl"), "{\"id\":\"t1\",\"author\":\"a\",\"text\":\"x\"}\n{oops\n");
  write_file(dir.file("kb.jsonl"), "");
  try {
    load_kb(dir.file("kb.jsonl"), dir.file("tweets.jsonl"));
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("tweets.jsonl:2:"), std::string::npos) << e.what();
  }
}

TEST(CorpusTest, DanglingTimelineIdIsRejected) {
  TempDir dir;
  write_file(dir.file("tweets.jsonl"), "");
  write_file(dir.file("kb.jsonl"),
             R"({"screen_name":"A","user_name":"A B","kind":"person","followers":1,"friends":1,"tweet_count":1,"timeline":["nope"]})"
             "\n");
  EXPECT_THROW(load_kb(dir.file("kb.jsonl"), dir.file("tweets.jsonl")), DataError);
}

TEST(CorpusTest, RoundTripIsStructuralIdentity) {
  TempDir dir;
  const KnowledgeBase kb = two_entity_kb();
  save_kb(kb, dir.str());
  ExpectSameKb(kb, load_kb(dir.str()));
}

TEST(CorpusTest, EmptyKbSavesManifestOnly) {
  TempDir dir;
  save_kb(KnowledgeBase{}, dir.str());
  const std::string text = read_file(dir.file("kb.jsonl"));
  EXPECT_EQ(text, "{\"format\":\"mmel.kb\",\"version\":1,\"count\":0}\n");
  EXPECT_TRUE(load_kb(dir.str()).entities.empty());
}

TEST(CorpusTest, SaveIsByteDeterministic) {
  TempDir a, b;
  const KnowledgeBase kb = two_entity_kb();
  save_kb(kb, a.str());
  save_kb(kb, b.str());
  EXPECT_EQ(read_file(a.file("kb.jsonl")), read_file(b.file("kb.jsonl")));
  EXPECT_EQ(read_file(a.file("tweets.jsonl")), read_file(b.file("tweets.jsonl")));
}

TEST(CorpusTest, LoadIsOrderIndependent) {
  TempDir dir;
  save_kb(two_entity_kb(), dir.str());
  // Reverse the record lines (manifest stays first).
  auto reverse_records = [](const std::string& path) {
    std::vector<std::string> ls;
    std::string cur;
    for (char c : read_file(path)) {
      if (c == '\n') ls.push_back(cur), cur.clear();
      else cur.push_back(c);
    }
    std::reverse(ls.begin() + 1, ls.end());
    std::string out;
    for (auto& l : ls) out += l + "\n";
    write_file(path, out);
  };
  reverse_records(dir.file("kb.jsonl"));
  reverse_records(dir.file("tweets.jsonl"));
  ExpectSameKb(two_entity_kb(), load_kb(dir.str()));
}

TEST(CorpusTest, LargeSyntheticKbRoundTrips) {
  ForgeConfig cfg;
  cfg.n_person_entities = 800;
  cfg.n_org_entities = 200;
  cfg.person_group_size = 4;
  cfg.org_group_size = 4;
  cfg.timeline_max = 12;
  cfg.timeline_min = 1;
  cfg.timeline_mu = 1.0;
  cfg.mention_min = 0;
  cfg.mention_max = 0;
  cfg.last_names.clear();
  cfg.acronym_roots.clear();
  for (int i = 0; i < 200; ++i) cfg.last_names.push_back("Last" + std::to_string(i));
  for (int i = 0; i < 50; ++i) cfg.acronym_roots.push_back("AC" + std::string(1, 'A' + i % 26) + std::to_string(i));
  const ForgeOutput fo = synth_corpus(cfg);
  ASSERT_EQ(fo.kb.entities.size(), 1000u);
  TempDir dir;
  save_kb(fo.kb, dir.str());
  const KnowledgeBase back = load_kb(dir.str());
  ExpectSameKb(fo.kb, back);
  EXPECT_EQ(fo.kb, back);
}

TEST(CorpusTest, ValidFixtureHasNoViolations) {
  EXPECT_TRUE(validate_kb(two_entity_kb()).empty());
}

TEST(CorpusTest, RetweetInTimelineIsOneViolation) {
  KnowledgeBase kb = two_entity_kb();
  kb.tweets.at("t3").is_retweet = true;
  const auto v = validate_kb(kb);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].rule, rules::kRetweet);
  EXPECT_EQ(v[0].subject, "AliceNg");
}

TEST(CorpusTest, ImagelessOrForeignTimelineTweetsAreFlagged) {
  KnowledgeBase kb = two_entity_kb();
  kb.tweets.at("t1").image_ref.reset();
  kb.tweets.at("t3").author = "AndrewYNg";
  const auto v = validate_kb(kb);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[0].rule, rules::kForeignAuthor);  // AliceNg sorts first
  EXPECT_EQ(v[1].rule, rules::kNoImage);
}

TEST(CorpusTest, MentionInsideGoldTimelineViolatesDisjointness) {
  KnowledgeBase kb = two_entity_kb();
  const MentionRecord m{{"Ng"}, "m1", "AndrewYNg"};
  EXPECT_TRUE(validate_kb(kb, {m}).empty());
  kb.entities.at("AndrewYNg").timeline.push_back("m1");
  kb.tweets.at("m1").author = "AndrewYNg";
  const auto v = validate_kb(kb, {m});
  bool found = false;
  for (const auto& x : v) found |= x.rule == rules::kMentionInGoldTimeline;
  EXPECT_TRUE(found);
}

TEST(CorpusTest, SelfAuthoredMentionIsRejected) {
  KnowledgeBase kb = two_entity_kb();
  kb.tweets.at("m1").author = "AndrewYNg";
  const auto v = validate_kb(kb, {MentionRecord{{"Ng"}, "m1", "AndrewYNg"}});
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].rule, rules::kMentionSelfAuthored);
}

TEST(CorpusTest, ValidateIsPure) {
  KnowledgeBase kb = two_entity_kb();
  kb.tweets.at("t2").is_retweet = true;
  kb.entities.at("AliceNg").timeline.push_back("ghost");
  EXPECT_EQ(validate_kb(kb), validate_kb(kb));
}

TEST(CorpusTest, SplitFileRoundTrips) {
  TempDir dir;
  DatasetSplit s;
  s.train = {{{"Ng"}, "m1", "AndrewYNg"}};
  s.valid = {{{"Ng"}, "m2", "AliceNg"}};
  s.test = {{{"ACM"}, "m3", "ACM_hq"}, {{"Ng"}, "m4", "AliceNg"}};
  save_split(dir.file("mentions.jsonl"), s);
  EXPECT_EQ(load_split(dir.file("mentions.jsonl")), s);
  EXPECT_EQ(load_mentions(dir.file("mentions.jsonl")).size(), 4u);
}

TEST(CorpusTest, UnlabeledMentionCannotLoadAsSplit) {
  TempDir dir;
  save_mentions(dir.file("m.jsonl"), {{{"Ng"}, "m1", "AndrewYNg"}});
  EXPECT_THROW(load_split(dir.file("m.jsonl")), DataError);
}

}  // namespace
}  // namespace mmel
