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

#include <set>

#include "mmel/pipeline.hpp"
#include "mmel/trainer.hpp"
#include "test_util.hpp"

namespace mmel {
namespace {

using testing::add;
using testing::make_entity;
using testing::make_tweet;

// `n_smith` persons named "<First> Smith" plus `n_other` unrelated entities.
KnowledgeBase SmithKb(size_t n_smith, size_t n_other) {
  KnowledgeBase kb;
  for (size_t k = 0; k < n_smith + n_other; ++k) {
    const bool smith = k < n_smith;
    const std::string screen = (smith ? "smith_" : "other_") + std::to_string(k);
    const std::string tid = "t" + std::to_string(k);
    add(kb, make_tweet(tid, screen, "hello from " + screen));
    const std::string user = smith ? "Ann" + std::string(1, static_cast<char>('a' + k)) + " Smith"
                                   : "Bob" + std::string(1, static_cast<char>('a' + k)) + " Jones";
    add(kb, make_entity(screen, user, EntityKind::kPerson, 10, {tid}));
  }
  add(kb, make_tweet("m0", "fan", "smith again"));
  add(kb, make_tweet("m1", "fan", "nobody here"));
  return kb;
}

MentionRecord SmithMention() { return {{"smith"}, "m0", "smith_0"}; }

TEST(SampleTripletsTest, SeventeenCandidatesGiveSixteenDistinctNegatives) {
  const KnowledgeBase kb = SmithKb(17, 4);
  const CandidateIndex index(kb);
  const SampledEpoch s = sample_triplets({SmithMention()}, kb, index, TrainConfig{}, 5);
  ASSERT_EQ(s.triples.size(), 16u);
  std::set<std::string> negs;
  for (const auto& t : s.triples) {
    EXPECT_EQ(t.positive, "smith_0");
    EXPECT_EQ(t.negative.rfind("smith_", 0), 0u);
    negs.insert(t.negative);
  }
  EXPECT_EQ(negs.size(), 16u);
  EXPECT_EQ(negs.count("smith_0"), 0u);
  EXPECT_EQ(s.random_filled, 0u);
}

TEST(SampleTripletsTest, SmallSetIsFilledFromOutside) {
  const KnowledgeBase kb = SmithKb(3, 20);
  const CandidateIndex index(kb);
  const SampledEpoch s = sample_triplets({SmithMention()}, kb, index, TrainConfig{}, 5);
  ASSERT_EQ(s.triples.size(), 16u);
  EXPECT_EQ(s.random_filled, 14u);
  std::set<std::string> negs;
  size_t in_set = 0;
  for (const auto& t : s.triples) {
    negs.insert(t.negative);
    if (t.negative.rfind("smith_", 0) == 0) ++in_set;
  }
  EXPECT_EQ(negs.size(), 16u);
  EXPECT_EQ(in_set, 2u);
}

TEST(SampleTripletsTest, FillCanBeDisabled) {
  const KnowledgeBase kb = SmithKb(3, 20);
  const CandidateIndex index(kb);
  TrainConfig cfg;
  cfg.random_fill = false;
  const SampledEpoch s = sample_triplets({SmithMention()}, kb, index, cfg, 5);
  EXPECT_EQ(s.triples.size(), 2u);
}

TEST(SampleTripletsTest, FillIsBoundedByKbSize) {
  const KnowledgeBase kb = SmithKb(3, 4);
  const CandidateIndex index(kb);
  const SampledEpoch s = sample_triplets({SmithMention()}, kb, index, TrainConfig{}, 5);
  EXPECT_EQ(s.triples.size(), 6u);
}

TEST(SampleTripletsTest, EmptyCandidateSetsAreSkipped) {
  const KnowledgeBase kb = SmithKb(3, 4);
  const CandidateIndex index(kb);
  const std::vector<MentionRecord> train = {{{"nobody"}, "m1", "other_3"}, SmithMention()};
  const SampledEpoch s = sample_triplets(train, kb, index, TrainConfig{}, 5);
  EXPECT_EQ(s.skipped_empty, 1u);
  for (const auto& t : s.triples) EXPECT_EQ(t.mention, 1u);
}

TEST(SampleTripletsTest, DeterministicPerSeed) {
  const KnowledgeBase kb = SmithKb(17, 4);
  const CandidateIndex index(kb);
  const std::vector<MentionRecord> train(3, SmithMention());
  const auto a = sample_triplets(train, kb, index, TrainConfig{}, 9).triples;
  const auto b = sample_triplets(train, kb, index, TrainConfig{}, 9).triples;
  const auto c = sample_triplets(train, kb, index, TrainConfig{}, 10).triples;
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TrainState Scripted(const std::vector<double>& losses, const TrainConfig& cfg,
                    std::vector<double>* lrs) {
  TrainState st;
  st.lr = cfg.lr0;
  for (double l : losses) {
    st.loss_history.push_back(l);
    lrs->push_back(lr_schedule_step(st, cfg));
  }
  return st;
}

TEST(LrScheduleTest, FlatWindowDividesByTenAndRestarts) {
  const TrainConfig cfg;
  std::vector<double> lrs;
  Scripted(std::vector<double>(12, 0.5), cfg, &lrs);
  const std::vector<double> want = {0.1, 0.1, 0.1, 0.1, 0.1, 0.01,
                                    0.01, 0.01, 0.01, 0.01, 0.01, 0.001};
  ASSERT_EQ(lrs.size(), want.size());
  for (size_t k = 0; k < want.size(); ++k) EXPECT_DOUBLE_EQ(lrs[k], want[k]) << k;
}

TEST(LrScheduleTest, RangeAboveToleranceKeepsRate) {
  const TrainConfig cfg;
  std::vector<double> lrs;
  Scripted({1.0, 1.0002, 1.0, 1.0, 1.0, 1.0, 1.0002}, cfg, &lrs);
  for (double lr : lrs) EXPECT_DOUBLE_EQ(lr, 0.1);
}

TEST(LrScheduleTest, WindowSlidesPastEarlyLosses) {
  const TrainConfig cfg;
  std::vector<double> lrs;
  Scripted({3.0, 2.0, 1.0, 1.00005, 1.0, 1.0, 1.0, 1.0, 1.00005}, cfg, &lrs);
  EXPECT_DOUBLE_EQ(lrs[6], 0.1);
  EXPECT_DOUBLE_EQ(lrs[7], 0.01);
  EXPECT_DOUBLE_EQ(lrs[8], 0.01);
}

TEST(LrScheduleTest, DecreasingLossNeverTriggers) {
  const TrainConfig cfg;
  std::vector<double> losses, lrs;
  for (int k = 0; k < 30; ++k) losses.push_back(1.0 - 0.01 * k);
  Scripted(losses, cfg, &lrs);
  for (double lr : lrs) EXPECT_DOUBLE_EQ(lr, 0.1);
}

TEST(EarlyStopTest, NeedsBothEpochAndPatience) {
  const TrainConfig cfg;
  TrainState st;
  st.epoch = 49;
  st.stale = 10;
  EXPECT_FALSE(early_stop_check(st, cfg));
  st.epoch = 50;
  st.stale = 5;
  EXPECT_TRUE(early_stop_check(st, cfg));
  st.epoch = 80;
  st.stale = 4;
  EXPECT_FALSE(early_stop_check(st, cfg));
}

TEST(EarlyStopTest, TiesDoNotResetPatience) {
  TrainState st;
  st.epoch = 1;
  EXPECT_TRUE(record_validation(st, 0.5));
  st.epoch = 2;
  EXPECT_FALSE(record_validation(st, 0.5));
  st.epoch = 3;
  EXPECT_FALSE(record_validation(st, 0.4));
  EXPECT_EQ(st.stale, 2u);
  EXPECT_EQ(st.best_epoch, 1u);
  st.epoch = 4;
  EXPECT_TRUE(record_validation(st, 0.6));
  EXPECT_EQ(st.stale, 0u);
  EXPECT_EQ(st.best_epoch, 4u);
}

struct Desk {
  RunConfig config;
  World world;
  FeatureStore store;
};

Desk MakeDesk(uint64_t seed) {
  Desk d;
  d.config.seed = seed;
  d.world = forge_world(d.config);
  d.store = make_features(d.config, d.world.kb, d.world.split, d.world.topics);
  return d;
}

TEST(TrainJmelTest, LossDropsOverTenEpochs) {
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    Desk d = MakeDesk(seed);
    d.config.train.max_epochs = 10;
    const TrainResult r = train_jmel_model(d.config, d.world.kb, d.store, d.world.split,
                                           d.config.jmel.mask);
    ASSERT_EQ(r.report.size(), 10u) << seed;
    EXPECT_LT(r.report.back().mean_loss, r.report.front().mean_loss) << seed;
  }
}

TEST(TrainJmelTest, ReportIsConsistentWithBestModel) {
  Desk d = MakeDesk(2);
  d.config.train.max_epochs = 30;
  d.config.train.early_stop_start = 10;
  const TrainResult r = train_jmel_model(d.config, d.world.kb, d.store, d.world.split,
                                         d.config.jmel.mask);
  ASSERT_FALSE(r.report.empty());
  EXPECT_LE(r.report.size(), 30u);
  double best = -1.0;
  for (size_t k = 0; k < r.report.size(); ++k) {
    EXPECT_EQ(r.report[k].epoch, k + 1);
    if (k > 0) {
      EXPECT_LE(r.report[k].lr, r.report[k - 1].lr);
    }
    best = std::max(best, r.report[k].valid_acc);
  }
  EXPECT_DOUBLE_EQ(r.state.best_valid, best);
  EXPECT_DOUBLE_EQ(r.report[r.state.best_epoch - 1].valid_acc, best);

  const EntityFeatureCache ent(d.world.kb, d.store);
  const CandidateIndex index(d.world.kb);
  const JmelScorer scorer(r.best, d.world.kb, d.store, ent);
  EXPECT_DOUBLE_EQ(accuracy(d.world.split.valid, index, d.world.kb, scorer).accuracy, best);
}

TEST(TrainJmelTest, ReRunIsByteIdentical) {
  Desk d = MakeDesk(3);
  d.config.train.max_epochs = 5;
  const auto run = [&] {
    return encode_jmel(train_jmel_model(d.config, d.world.kb, d.store, d.world.split,
                                        d.config.jmel.mask)
                           .best);
  };
  EXPECT_EQ(run(), run());
}

TEST(TrainJmelTest, DivergenceRaisesNumericError) {
  Desk d = MakeDesk(1);
  d.config.train.max_epochs = 3;
  d.config.train.lr0 = 1e300;
  d.config.train.batch_size = 16;
  EXPECT_THROW(train_jmel_model(d.config, d.world.kb, d.store, d.world.split, d.config.jmel.mask),
               NumericError);
}

TEST(TrainJmelTest, RejectsEmptySections) {
  Desk d = MakeDesk(1);
  DatasetSplit split = d.world.split;
  split.valid.clear();
  EXPECT_THROW(train_jmel_model(d.config, d.world.kb, d.store, split, d.config.jmel.mask),
               DataError);
}

TEST(TrainConfigTest, ValidateRejectsBadValues) {
  TrainConfig c;
  c.momentum = 1.0;
  EXPECT_THROW(c.validate(), UsageError);
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), UsageError);
  EXPECT_NO_THROW(TrainConfig{}.validate());
}

}  // namespace
}  // namespace mmel
