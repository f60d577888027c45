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

// Pairwise (mention, entity) features and the small tanh MLP that turns them
// into a correctness probability.

#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmel/bm25.hpp"
#include "mmel/candgen.hpp"
#include "mmel/features.hpp"
#include "mmel/jmel.hpp"
#include "mmel/linking.hpp"
#include "mmel/nn/layers.hpp"
#include "mmel/nn/optim.hpp"
#include "mmel/nn/params.hpp"

namespace mmel {

/// Active pairwise features. Vector order: jmel, uni, bi, img, pop_fo,
/// pop_fr, pop_t, bm25.
struct FeatureMask {
  bool jmel = false;
  bool uni = false;
  bool bi = false;
  bool img = false;
  bool pop = false;
  bool bm25 = false;

  bool operator==(const FeatureMask&) const = default;

  size_t size() const {
    return size_t{jmel} + size_t{uni} + size_t{bi} + size_t{img} + 3 * size_t{pop} +
           size_t{bm25};
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    if (jmel) out.push_back("jmel");
    if (uni) out.push_back("uni");
    if (bi) out.push_back("bi");
    if (img) out.push_back("img");
    if (pop) out.insert(out.end(), {"pop_fo", "pop_fr", "pop_t"});
    if (bm25) out.push_back("bm25");
    return out;
  }

  std::string str() const {
    std::vector<std::string> parts;
    if (jmel) parts.push_back("jmel");
    if (uni && bi) {
      parts.push_back("s2v");
    } else {
      if (uni) parts.push_back("uni");
      if (bi) parts.push_back("bi");
    }
    if (img) parts.push_back("img");
    if (pop) parts.push_back("pop");
    if (bm25) parts.push_back("bm25");
    return join(parts, "+");
  }

  /// '+'-joined tokens among jmel, uni, bi, s2v, img, pop, bm25.
  static FeatureMask parse(const std::string& text) {
    FeatureMask m;
    size_t start = 0;
    while (start <= text.size()) {
      const size_t end = std::min(text.find('+', start), text.size());
      const std::string tok = text.substr(start, end - start);
      if (tok == "jmel") m.jmel = true;
      else if (tok == "uni") m.uni = true;
      else if (tok == "bi") m.bi = true;
      else if (tok == "s2v") m.uni = m.bi = true;
      else if (tok == "img") m.img = true;
      else if (tok == "pop") m.pop = true;
      else if (tok == "bm25") m.bm25 = true;
      else throw UsageError("unknown feature '" + tok + "' in mask '" + text + "'");
      start = end + 1;
    }
    if (m.size() == 0) throw UsageError("empty feature mask");
    return m;
  }
};

/// Train-set moments of the raw count features (log1p followers, friends,
/// tweets) and the BM25 score.
struct Standardizer {
  std::array<double, 4> mean{0, 0, 0, 0};
  std::array<double, 4> stddev{1, 1, 1, 1};

  bool operator==(const Standardizer&) const = default;
};

inline nlohmann::ordered_json to_json(const Standardizer& s) {
  nlohmann::ordered_json j;
  j["mean"] = s.mean;
  j["std"] = s.stddev;
  return j;
}

inline Standardizer standardizer_from_json(const nlohmann::json& j) {
  Standardizer s;
  s.mean = j.at("mean").get<std::array<double, 4>>();
  s.stddev = j.at("std").get<std::array<double, 4>>();
  return s;
}

/// Upstream artifacts a feature vector may draw on. Optional members are
/// only required when the mask asks for them.
struct FeatureSources {
  const KnowledgeBase& kb;
  const FeatureStore& store;
  const EntityFeatureCache& entities;
  const TimelineIndex* bm25 = nullptr;
  const JmelScorer* jmel = nullptr;
};

namespace fusion_detail {

// log1p counts and raw BM25, before standardization.
inline std::array<double, 4> raw_scalars(const Entity& e, double bm25) {
  return {std::log1p(static_cast<double>(e.followers)),
          std::log1p(static_cast<double>(e.friends)),
          std::log1p(static_cast<double>(e.tweet_count)), bm25};
}

inline void require_sources(const FeatureMask& mask, const FeatureSources& src) {
  if (mask.jmel && !src.jmel) throw DataError("features: mask needs a trained JMEL model");
  if (mask.bm25 && !src.bm25) throw DataError("features: mask needs a BM25 index");
}

}  // namespace fusion_detail

/// One feature row per candidate, in candidate order.
inline std::vector<Vector> assemble_rows(const MentionRecord& m, const CandidateSet& cands,
                                         const FeatureSources& src, const FeatureMask& mask,
                                         const Standardizer& stdz) {
  fusion_detail::require_sources(mask, src);
  std::vector<Vector> rows;
  if (cands.empty()) return rows;
  const bool need_bundle = mask.uni || mask.bi || mask.img;
  FeatureBundle mb;
  if (need_bundle) mb = mention_features(m, src.kb, src.store);
  std::vector<std::string> query;
  if (mask.bm25) query = mention_query(m, src.kb);
  std::vector<double> jsim;
  if (mask.jmel) jsim = src.jmel->scores(m, cands);
  rows.reserve(cands.size());
  for (size_t c = 0; c < cands.size(); ++c) {
    const std::string& name = cands.candidates[c].screen_name;
    Vector x;
    x.reserve(mask.size());
    if (mask.jmel) x.push_back(jsim[c]);
    if (need_bundle) {
      const FeatureBundle& eb = src.entities.at(name);
      if (mask.uni) x.push_back(cosine(mb.u, eb.u));
      if (mask.bi) x.push_back(cosine(mb.b, eb.b));
      if (mask.img) x.push_back(cosine(mb.i, eb.i));
    }
    if (mask.pop || mask.bm25) {
      const double bm = mask.bm25 ? src.bm25->score(query, name) : 0.0;
      const auto raw = fusion_detail::raw_scalars(src.kb.entity(name), bm);
      for (size_t k = 0; k < 4; ++k) {
        if (k < 3 && !mask.pop) continue;
        if (k == 3 && !mask.bm25) continue;
        x.push_back((raw[k] - stdz.mean[k]) / stdz.stddev[k]);
      }
    }
    rows.push_back(std::move(x));
  }
  return rows;
}

inline Vector assemble_features(const MentionRecord& m, const std::string& entity,
                                const FeatureSources& src, const FeatureMask& mask,
                                const Standardizer& stdz) {
  CandidateSet one;
  one.tweet_id = m.tweet_id;
  one.candidates.push_back({entity, std::nullopt});
  return assemble_rows(m, one, src, mask, stdz).front();
}

/// Moments over every (train mention, candidate) pair. BM25 moments are only
/// fitted when an index is available.
inline Standardizer fit_standardizer(const std::vector<MentionRecord>& train,
                                     const CandidateIndex& index, const KnowledgeBase& kb,
                                     const TimelineIndex* bm25) {
  std::array<std::vector<double>, 4> cols;
  for (const auto& m : train) {
    const CandidateSet cands = index.candidates(m);
    std::vector<std::string> query;
    if (bm25) query = mention_query(m, kb);
    for (const auto& c : cands.candidates) {
      const double bm = bm25 ? bm25->score(query, c.screen_name) : 0.0;
      const auto raw = fusion_detail::raw_scalars(kb.entity(c.screen_name), bm);
      for (size_t k = 0; k < 4; ++k) cols[k].push_back(raw[k]);
    }
  }
  Standardizer s;
  for (size_t k = 0; k < 4; ++k) {
    if (cols[k].empty()) continue;
    const Summary sum = summarize(cols[k]);
    s.mean[k] = sum.mean;
    s.stddev[k] = sum.stddev > 1e-12 ? sum.stddev : 1.0;
  }
  return s;
}

// --- MLP ------------------------------------------------------------------------

struct FusionMlp {
  nn::DenseLayer hidden1;  // n_in -> n_in + 1
  nn::DenseLayer hidden2;  // n_in + 1 -> n_in + 1
  nn::DenseLayer output;   // n_in + 1 -> 1

  bool operator==(const FusionMlp&) const = default;

  size_t n_in() const { return hidden1.in_dim(); }

  static FusionMlp init(size_t n_in, uint64_t seed) {
    if (n_in == 0) throw UsageError("fusion mlp: zero inputs");
    Rng rng(seed);
    FusionMlp m;
    m.hidden1 = nn::DenseLayer::xavier(n_in, n_in + 1, rng);
    m.hidden2 = nn::DenseLayer::xavier(n_in + 1, n_in + 1, rng);
    m.output = nn::DenseLayer::xavier(n_in + 1, 1, rng);
    return m;
  }

  FusionMlp zeros_like() const {
    FusionMlp g = *this;
    for (auto& s : g.layout()) std::fill(s.data.begin(), s.data.end(), 0.0);
    return g;
  }

  nn::ParamLayout layout() {
    nn::ParamLayout out;
    nn::append_slots(out, "hidden1", hidden1);
    nn::append_slots(out, "hidden2", hidden2);
    nn::append_slots(out, "output", output);
    return out;
  }
};

struct MlpCache {
  Vector x, z1, a1, z2, a2;
  double logit = 0.0;
  double p = 0.0;
};

/// sigmoid(out(tanh(h2(tanh(h1(x)))))).
inline double mlp_forward(const FusionMlp& mlp, const Vector& x, MlpCache* cache = nullptr) {
  using nn::Activation;
  Vector z1 = nn::dense_forward(mlp.hidden1, x);
  Vector a1 = nn::activation_forward(Activation::kTanh, z1);
  Vector z2 = nn::dense_forward(mlp.hidden2, a1);
  Vector a2 = nn::activation_forward(Activation::kTanh, z2);
  const double logit = nn::dense_forward(mlp.output, a2)[0];
  const double p = nn::sigmoid(logit);
  if (cache) {
    cache->x = x;
    cache->z1 = std::move(z1);
    cache->a1 = std::move(a1);
    cache->z2 = std::move(z2);
    cache->a2 = std::move(a2);
    cache->logit = logit;
    cache->p = p;
  }
  return p;
}

/// Accumulates parameter gradients given dLoss/dlogit; returns dLoss/dx.
inline Vector mlp_backward(const FusionMlp& mlp, const MlpCache& c, double dlogit,
                           FusionMlp& grad) {
  using nn::Activation;
  Vector da2 = nn::dense_backward(mlp.output, c.a2, Vector{dlogit}, grad.output);
  Vector dz2 = nn::activation_backward(Activation::kTanh, c.z2, c.a2, da2);
  Vector da1 = nn::dense_backward(mlp.hidden2, c.a1, dz2, grad.hidden2);
  Vector dz1 = nn::activation_backward(Activation::kTanh, c.z1, c.a1, da1);
  return nn::dense_backward(mlp.hidden1, c.x, dz1, grad.hidden1);
}

inline constexpr double kProbClip = 1e-12;

/// Binary cross-entropy on a clipped probability.
inline double bce(double p, int label) {
  const double q = std::clamp(p, kProbClip, 1.0 - kProbClip);
  return label ? -std::log(q) : -std::log(1.0 - q);
}

/// d bce / d logit: p - y inside the clip range, 0 where clipping is active.
inline double bce_dlogit(double p, int label) {
  if (p < kProbClip || p > 1.0 - kProbClip) return 0.0;
  return p - static_cast<double>(label);
}

struct LabeledPairs {
  std::vector<Vector> x;
  std::vector<int> y;
};

/// Positive (mention, gold) and negative (mention, other candidate) rows for
/// every mention with a nonempty candidate set.
inline LabeledPairs make_pairs(const std::vector<MentionRecord>& mentions,
                               const CandidateIndex& index, const FeatureSources& src,
                               const FeatureMask& mask, const Standardizer& stdz) {
  LabeledPairs out;
  for (const auto& m : mentions) {
    const CandidateSet cands = index.candidates(m);
    auto rows = assemble_rows(m, cands, src, mask, stdz);
    for (size_t c = 0; c < rows.size(); ++c) {
      out.x.push_back(std::move(rows[c]));
      out.y.push_back(cands.candidates[c].screen_name == m.gold ? 1 : 0);
    }
  }
  return out;
}

/// Mean BCE over `pairs` and its gradient with respect to the flattened MLP.
inline double mean_bce(FusionMlp& mlp, const LabeledPairs& pairs, Vector* grad) {
  FusionMlp g = mlp.zeros_like();
  MlpCache cache;
  double total = 0.0;
  for (size_t k = 0; k < pairs.x.size(); ++k) {
    const double p = mlp_forward(mlp, pairs.x[k], &cache);
    total += bce(p, pairs.y[k]);
    if (grad) mlp_backward(mlp, cache, bce_dlogit(p, pairs.y[k]), g);
  }
  const double inv = 1.0 / static_cast<double>(pairs.x.size());
  if (grad) {
    *grad = nn::flatten(g.layout());
    for (double& v : *grad) v *= inv;
  }
  return total * inv;
}

struct FusionConfig {
  nn::LbfgsOptions lbfgs;
  uint64_t seed = 1;
};

struct FusionModel {
  FeatureMask mask;
  Standardizer standardizer;
  FusionMlp mlp;

  bool operator==(const FusionModel&) const = default;
};

struct FusionTraining {
  FusionModel model;
  nn::LbfgsResult optimizer;
  double initial_loss = 0.0;
};

inline FusionTraining train_fusion(const LabeledPairs& pairs, const FeatureMask& mask,
                                   const Standardizer& stdz, const FusionConfig& cfg) {
  if (pairs.x.empty()) throw DataError("train_fusion: no training pairs");
  for (const auto& x : pairs.x) nn::require_dim(x.size(), mask.size(), "train_fusion row");
  FusionTraining out;
  out.model.mask = mask;
  out.model.standardizer = stdz;
  out.model.mlp = FusionMlp::init(mask.size(), cfg.seed);
  FusionMlp work = out.model.mlp;
  auto layout = work.layout();
  const nn::Objective f = [&](const Vector& theta, Vector& grad) {
    nn::unflatten(layout, theta);
    return mean_bce(work, pairs, &grad);
  };
  out.initial_loss = mean_bce(work, pairs, nullptr);
  out.optimizer = nn::lbfgs_minimize(f, nn::flatten(layout), cfg.lbfgs);
  auto final_layout = out.model.mlp.layout();
  nn::unflatten(final_layout, out.optimizer.x);
  return out;
}

/// MLP probability per candidate; ties go to more followers, then name.
class FusionScorer : public Scorer {
 public:
  FusionScorer(const FusionModel& model, const FeatureSources& src, std::string name)
      : model_(model), src_(src), name_(std::move(name)) {
    fusion_detail::require_sources(model.mask, src);
  }
  std::string name() const override { return name_; }
  TieBreak tie_break() const override { return TieBreak::kFollowersThenName; }
  std::vector<double> scores(const MentionRecord& m, const CandidateSet& c) const override {
    std::vector<double> out;
    for (const auto& x : assemble_rows(m, c, src_, model_.mask, model_.standardizer)) {
      out.push_back(mlp_forward(model_.mlp, x));
    }
    return out;
  }

 private:
  const FusionModel& model_;
  const FeatureSources& src_;
  std::string name_;
};

inline CandidateSet fusion_rank(const MentionRecord& m, const CandidateSet& cands,
                                const FusionModel& model, const FeatureSources& src) {
  return rank(FusionScorer(model, src, "fusion"), m, cands, src.kb);
}

// --- checkpoints --------------------------------------------------------------

inline std::string encode_fusion(const FusionModel& model) {
  nlohmann::ordered_json header;
  header["model"] = "fusion";
  header["mask"] = model.mask.str();
  header["n_in"] = model.mask.size();
  header["standardizer"] = to_json(model.standardizer);
  FusionMlp copy = model.mlp;
  return nn::encode_checkpoint(std::move(header), copy.layout());
}

inline void save_fusion(const std::string& path, const FusionModel& model) {
  write_file(path, encode_fusion(model));
}

inline FusionModel load_fusion(const std::string& path) {
  const nn::Checkpoint ck = nn::read_checkpoint(path);
  if (ck.header.value("model", "") != "fusion") throw DataError(path + ": not a fusion model");
  FusionModel m;
  try {
    m.mask = FeatureMask::parse(ck.header.at("mask").get<std::string>());
    m.standardizer = standardizer_from_json(ck.header.at("standardizer"));
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(path + ": " + ex.what());
  }
  m.mlp = FusionMlp::init(m.mask.size(), 0);
  nn::restore(ck, m.mlp.layout());
  return m;
}

}  // namespace mmel
