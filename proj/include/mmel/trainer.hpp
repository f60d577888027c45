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

#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmel/candgen.hpp"
#include "mmel/common.hpp"
#include "mmel/features.hpp"
#include "mmel/jmel.hpp"
#include "mmel/linking.hpp"
#include "mmel/nn/optim.hpp"
#include "mmel/nn/params.hpp"

namespace mmel {

struct TrainConfig {
  size_t batch_size = 256;
  double lr0 = 0.1;
  double momentum = 0.9;
  size_t max_epochs = 100;
  double plateau_tol = 1e-4;
  size_t plateau_window = 6;
  size_t early_stop_start = 50;
  size_t early_stop_patience = 5;
  size_t negatives_per_positive = 16;
  // Top up small candidate sets with random non-matching entities.
  bool random_fill = true;
  uint64_t seed = 1;

  void validate() const {
    if (batch_size == 0 || !(lr0 > 0.0) || max_epochs == 0 || plateau_window == 0 ||
        early_stop_patience == 0 || negatives_per_positive == 0 || !(plateau_tol >= 0.0) ||
        !(momentum >= 0.0 && momentum < 1.0)) {
      throw UsageError("train config: values must be positive (momentum in [0, 1))");
    }
  }
};

struct Triplet {
  size_t mention = 0;  // index into the training section
  std::string positive;
  std::string negative;

  bool operator==(const Triplet&) const = default;
};

struct SampledEpoch {
  std::vector<Triplet> triples;
  size_t skipped_empty = 0;
  size_t random_filled = 0;
};

/// Gold as positive; negatives drawn without replacement from the other
/// candidates, then (if allowed) from entities outside the candidate set.
/// The triple order is shuffled with `epoch_seed`.
inline SampledEpoch sample_triplets(const std::vector<MentionRecord>& train,
                                    const KnowledgeBase& kb, const CandidateIndex& index,
                                    const TrainConfig& cfg, uint64_t epoch_seed) {
  Rng rng(epoch_seed);
  SampledEpoch out;
  std::vector<std::string> all;
  all.reserve(kb.entities.size());
  for (const auto& [screen, _] : kb.entities) all.push_back(screen);

  for (size_t i = 0; i < train.size(); ++i) {
    const MentionRecord& m = train[i];
    const CandidateSet cands = index.candidates(m);
    if (cands.empty()) {
      ++out.skipped_empty;
      continue;
    }
    std::vector<std::string> pool;
    for (const auto& c : cands.candidates) {
      if (c.screen_name != m.gold) pool.push_back(c.screen_name);
    }
    const size_t want = cfg.negatives_per_positive;
    const size_t from_cands = std::min(want, pool.size());
    for (size_t k : rng.sample_without_replacement(pool.size(), from_cands)) {
      out.triples.push_back({i, m.gold, pool[k]});
    }
    if (from_cands < want && cfg.random_fill) {
      std::vector<std::string> outside;
      for (const auto& s : all) {
        if (s != m.gold && !cands.contains(s)) outside.push_back(s);
      }
      const size_t extra = std::min(want - from_cands, outside.size());
      for (size_t k : rng.sample_without_replacement(outside.size(), extra)) {
        out.triples.push_back({i, m.gold, outside[k]});
        ++out.random_filled;
      }
    }
  }
  rng.shuffle(out.triples);
  return out;
}

struct TrainState {
  size_t epoch = 0;  // completed epochs
  double lr = 0.0;
  nn::MomentumState momentum;
  std::vector<double> loss_history;
  size_t window_start = 0;  // first loss index the plateau window may look at
  double best_valid = -std::numeric_limits<double>::infinity();
  size_t best_epoch = 0;
  size_t stale = 0;  // evaluations since the last improvement
};

/// Divides lr by 10 when the epoch losses of the current window span at most
/// plateau_tol, then restarts the window. Returns the new lr.
inline double lr_schedule_step(TrainState& st, const TrainConfig& cfg) {
  if (st.loss_history.empty()) throw UsageError("lr_schedule_step: empty loss history");
  const size_t n = st.loss_history.size();
  if (n - st.window_start >= cfg.plateau_window) {
    const auto first = st.loss_history.end() - static_cast<std::ptrdiff_t>(cfg.plateau_window);
    const auto [lo, hi] = std::minmax_element(first, st.loss_history.end());
    if (*hi - *lo <= cfg.plateau_tol) {
      st.lr /= 10.0;
      st.window_start = n;
    }
  }
  return st.lr;
}

/// Records one validation accuracy; true on strict improvement.
inline bool record_validation(TrainState& st, double acc) {
  if (acc > st.best_valid) {
    st.best_valid = acc;
    st.best_epoch = st.epoch;
    st.stale = 0;
    return true;
  }
  ++st.stale;
  return false;
}

inline bool early_stop_check(const TrainState& st, const TrainConfig& cfg) {
  return st.epoch >= cfg.early_stop_start && st.stale >= cfg.early_stop_patience;
}

struct EpochRecord {
  size_t epoch = 0;
  double lr = 0.0;  // rate used during the epoch
  double mean_loss = 0.0;
  double valid_acc = 0.0;
  size_t stale_count = 0;
};

inline nlohmann::ordered_json to_json(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["lr"] = r.lr;
  j["mean_loss"] = r.mean_loss;
  j["valid_acc"] = r.valid_acc;
  j["stale_count"] = r.stale_count;
  return j;
}

inline void write_train_report(const std::string& path, const std::vector<EpochRecord>& rs) {
  std::string out;
  for (const auto& r : rs) out += to_json(r).dump() + "\n";
  write_file(path, out);
}

struct TrainData {
  const KnowledgeBase& kb;
  const FeatureStore& store;
  const std::vector<MentionRecord>& train;
  const std::vector<MentionRecord>& valid;
};

struct TrainResult {
  JmelParams best;
  TrainState state;
  std::vector<EpochRecord> report;
  size_t skipped_empty = 0;  // per epoch
};

/// Minibatch SGD with momentum on the mean triplet loss; validates once per
/// epoch and keeps the parameters with the best validation accuracy.
inline TrainResult train_jmel(JmelParams params, const TrainData& data,
                              const TrainConfig& cfg,
                              const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  if (data.train.empty()) throw DataError("train_jmel: empty training section");
  if (data.valid.empty()) throw DataError("train_jmel: empty validation section");
  const CandidateIndex index(data.kb);
  const EntityFeatureCache entities(data.kb, data.store);
  std::vector<FeatureBundle> mentions;
  mentions.reserve(data.train.size());
  for (const auto& m : data.train) mentions.push_back(mention_features(m, data.kb, data.store));

  TrainResult res;
  res.best = params;
  TrainState& st = res.state;
  st.lr = cfg.lr0;

  JmelCache cm, cp, cn;
  for (size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const SampledEpoch sampled =
        sample_triplets(data.train, data.kb, index, cfg, derive_seed(cfg.seed, epoch));
    res.skipped_empty = sampled.skipped_empty;
    if (sampled.triples.empty()) throw DataError("train_jmel: no training triples");
    const double epoch_lr = st.lr;
    double loss_sum = 0.0;
    const auto& triples = sampled.triples;
    size_t batch_index = 0;
    for (size_t start = 0; start < triples.size(); start += cfg.batch_size, ++batch_index) {
      const size_t end = std::min(triples.size(), start + cfg.batch_size);
      JmelParams grad = params.zeros_like();
      double batch_loss = 0.0;
      for (size_t t = start; t < end; ++t) {
        const Triplet& tr = triples[t];
        const Vector jm = jmel_forward(params, mentions[tr.mention], &cm);
        const Vector jp = jmel_forward(params, entities.at(tr.positive), &cp);
        const Vector jn = jmel_forward(params, entities.at(tr.negative), &cn);
        const TripletLoss tl = triplet_loss(jm, jp, jn, params.config.margin);
        batch_loss += tl.loss;
        if (!tl.active) continue;
        jmel_backward(params, cm, tl.d_mention, grad);
        jmel_backward(params, cp, tl.d_positive, grad);
        jmel_backward(params, cn, tl.d_negative, grad);
      }
      if (!std::isfinite(batch_loss)) {
        std::ostringstream os;
        os << "train_jmel: non-finite loss at epoch " << epoch << ", batch " << batch_index
           << ", lr " << st.lr;
        throw NumericError(os.str());
      }
      loss_sum += batch_loss;
      const double inv = 1.0 / static_cast<double>(end - start);
      auto layout = params.layout();
      Vector flat = nn::flatten(layout);
      Vector g = nn::flatten(grad.layout());
      for (double& x : g) x *= inv;
      nn::sgd_momentum_step(flat, g, st.momentum, st.lr, cfg.momentum);
      nn::unflatten(layout, flat);
    }

    st.epoch = epoch;
    const double mean_loss = loss_sum / static_cast<double>(triples.size());
    st.loss_history.push_back(mean_loss);
    const JmelScorer scorer(params, data.kb, data.store, entities);
    const double acc = accuracy(data.valid, index, data.kb, scorer).accuracy;
    if (record_validation(st, acc)) res.best = params;
    lr_schedule_step(st, cfg);

    EpochRecord rec{epoch, epoch_lr, mean_loss, acc, st.stale};
    res.report.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (early_stop_check(st, cfg)) break;
  }
  return res;
}

}  // namespace mmel
