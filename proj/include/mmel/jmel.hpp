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

// Joint multimodal representation: one branch per modality (unigram text,
// bigram text, image), concatenated and projected by a final dense layer.
// The same weights embed mentions and entities.

#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmel/common.hpp"
#include "mmel/features.hpp"
#include "mmel/linking.hpp"
#include "mmel/nn/layers.hpp"
#include "mmel/nn/params.hpp"

namespace mmel {

struct ModalityMask {
  bool uni = true;
  bool bi = true;
  bool img = true;

  size_t count() const { return size_t{uni} + size_t{bi} + size_t{img}; }
  bool operator==(const ModalityMask&) const = default;

  /// "s2v+img", "s2v", "uni+img", ... in fixed order; uni+bi prints as s2v.
  std::string str() const {
    std::vector<std::string> parts;
    if (uni && bi) {
      parts.push_back("s2v");
    } else {
      if (uni) parts.push_back("uni");
      if (bi) parts.push_back("bi");
    }
    if (img) parts.push_back("img");
    return join(parts, "+");
  }

  /// Accepts "uni", "bi", "img" and "s2v" (= uni+bi) joined by '+'.
  static ModalityMask parse(const std::string& text) {
    ModalityMask m{false, false, false};
    size_t start = 0;
    while (start <= text.size()) {
      const size_t end = std::min(text.find('+', start), text.size());
      const std::string tok = text.substr(start, end - start);
      if (tok == "uni") m.uni = true;
      else if (tok == "bi") m.bi = true;
      else if (tok == "img") m.img = true;
      else if (tok == "s2v") m.uni = m.bi = true;
      else throw UsageError("unknown modality '" + tok + "' in mask '" + text + "'");
      start = end + 1;
    }
    if (m.count() == 0) throw UsageError("empty modality mask");
    return m;
  }
};

struct JmelConfig {
  FeatureDims inputs;
  size_t hidden = 256;
  size_t branch = 128;
  size_t joint = 128;
  ModalityMask mask;
  double margin = 1.0;
  // Apply relu after the second dense layer of each branch.
  bool relu_after_second = true;
  // Layer norm after (true) or before (false) the second relu.
  bool norm_last = true;
  double norm_epsilon = 1e-5;

  bool operator==(const JmelConfig&) const = default;

  void validate() const {
    if (mask.count() == 0) throw UsageError("jmel: empty modality mask");
    if (hidden == 0 || joint == 0) throw UsageError("jmel: zero layer width");
    if (branch < 2) throw UsageError("jmel: branch width must be >= 2 for layer norm");
    if (!(margin > 0.0)) throw UsageError("jmel: margin must be > 0");
  }
};

inline nlohmann::ordered_json to_json(const JmelConfig& c) {
  nlohmann::ordered_json j;
  j["dim_u"] = c.inputs.u;
  j["dim_b"] = c.inputs.b;
  j["dim_i"] = c.inputs.i;
  j["hidden"] = c.hidden;
  j["branch"] = c.branch;
  j["joint"] = c.joint;
  j["mask"] = c.mask.str();
  j["margin"] = c.margin;
  j["relu_after_second"] = c.relu_after_second;
  j["norm_last"] = c.norm_last;
  j["norm_epsilon"] = c.norm_epsilon;
  return j;
}

inline JmelConfig jmel_config_from_json(const nlohmann::json& j) {
  try {
    JmelConfig c;
    c.inputs.u = j.at("dim_u").get<size_t>();
    c.inputs.b = j.at("dim_b").get<size_t>();
    c.inputs.i = j.at("dim_i").get<size_t>();
    c.hidden = j.at("hidden").get<size_t>();
    c.branch = j.at("branch").get<size_t>();
    c.joint = j.at("joint").get<size_t>();
    c.mask = ModalityMask::parse(j.at("mask").get<std::string>());
    c.margin = j.at("margin").get<double>();
    c.relu_after_second = j.at("relu_after_second").get<bool>();
    c.norm_last = j.at("norm_last").get<bool>();
    c.norm_epsilon = j.at("norm_epsilon").get<double>();
    return c;
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("jmel config: ") + ex.what());
  }
}

struct BranchParams {
  nn::DenseLayer dense1;
  nn::DenseLayer dense2;
  nn::LayerNormParams norm;

  bool operator==(const BranchParams&) const = default;
};

struct JmelParams {
  JmelConfig config;
  BranchParams uni, bi, img;
  nn::DenseLayer final;

  bool operator==(const JmelParams&) const = default;

  /// Xavier-initialized weights, zero biases, unit gain. Inactive branches
  /// stay empty.
  static JmelParams init(const JmelConfig& c, uint64_t seed) {
    c.validate();
    JmelParams p;
    p.config = c;
    Rng rng(seed);
    auto make = [&](BranchParams& b, size_t in) {
      b.dense1 = nn::DenseLayer::xavier(in, c.hidden, rng);
      b.dense2 = nn::DenseLayer::xavier(c.hidden, c.branch, rng);
      b.norm = nn::LayerNormParams(c.branch, c.norm_epsilon);
    };
    if (c.mask.uni) make(p.uni, c.inputs.u);
    if (c.mask.bi) make(p.bi, c.inputs.b);
    if (c.mask.img) make(p.img, c.inputs.i);
    p.final = nn::DenseLayer::xavier(c.mask.count() * c.branch, c.joint, rng);
    return p;
  }

  /// Same shapes, all zeros (gradient accumulator).
  JmelParams zeros_like() const {
    JmelParams g = *this;
    for (auto& s : g.layout()) std::fill(s.data.begin(), s.data.end(), 0.0);
    return g;
  }

  /// Active parameters in a stable order.
  nn::ParamLayout layout() {
    nn::ParamLayout out;
    auto add = [&](const char* name, BranchParams& b) {
      const std::string p = std::string("branch_") + name;
      nn::append_slots(out, p + ".dense1", b.dense1);
      nn::append_slots(out, p + ".dense2", b.dense2);
      nn::append_slots(out, p + ".norm", b.norm);
    };
    if (config.mask.uni) add("uni", uni);
    if (config.mask.bi) add("bi", bi);
    if (config.mask.img) add("img", img);
    nn::append_slots(out, "final", final);
    return out;
  }
};

struct BranchCache {
  Vector x, pre1, act1, pre2, mid, out;
  nn::LayerNormCache norm;
};

struct JmelCache {
  BranchCache uni, bi, img;
  Vector concat;
};

namespace jmel_detail {

inline Vector branch_forward(const JmelConfig& c, const BranchParams& b, const Vector& x,
                             BranchCache* cache) {
  Vector pre1 = nn::dense_forward(b.dense1, x);
  Vector act1 = nn::activation_forward(nn::Activation::kRelu, pre1);
  Vector pre2 = nn::dense_forward(b.dense2, act1);
  Vector out;
  Vector mid;
  nn::LayerNormCache ln;
  if (c.norm_last) {
    mid = c.relu_after_second ? nn::activation_forward(nn::Activation::kRelu, pre2) : pre2;
    out = nn::layer_norm_forward(b.norm, mid, &ln);
  } else {
    mid = nn::layer_norm_forward(b.norm, pre2, &ln);
    out = c.relu_after_second ? nn::activation_forward(nn::Activation::kRelu, mid) : mid;
  }
  if (cache) {
    cache->x = x;
    cache->pre1 = std::move(pre1);
    cache->act1 = std::move(act1);
    cache->pre2 = std::move(pre2);
    cache->mid = std::move(mid);
    cache->norm = std::move(ln);
    cache->out = out;
  }
  return out;
}

inline void branch_backward(const JmelConfig& c, const BranchParams& b, const BranchCache& k,
                            const Vector& dout, BranchParams& g) {
  Vector dpre2;
  if (c.norm_last) {
    Vector dmid = nn::layer_norm_backward(b.norm, k.norm, dout, g.norm);
    dpre2 = c.relu_after_second
                ? nn::activation_backward(nn::Activation::kRelu, k.pre2, k.mid, dmid)
                : std::move(dmid);
  } else {
    Vector dmid = c.relu_after_second
                      ? nn::activation_backward(nn::Activation::kRelu, k.mid, k.out, dout)
                      : dout;
    dpre2 = nn::layer_norm_backward(b.norm, k.norm, dmid, g.norm);
  }
  Vector dact1 = nn::dense_backward(b.dense2, k.act1, dpre2, g.dense2);
  Vector dpre1 = nn::activation_backward(nn::Activation::kRelu, k.pre1, k.act1, dact1);
  nn::dense_backward(b.dense1, k.x, dpre1, g.dense1);
}

}  // namespace jmel_detail

/// Joint vector J for one bundle. Mentions and entities go through the same
/// function.
inline Vector jmel_forward(const JmelParams& p, const FeatureBundle& x,
                           JmelCache* cache = nullptr) {
  const JmelConfig& c = p.config;
  if (c.mask.count() == 0) throw UsageError("jmel_forward: empty modality mask");
  Vector concat;
  concat.reserve(c.mask.count() * c.branch);
  auto run = [&](bool on, const BranchParams& b, const Vector& in, size_t want,
                 BranchCache* bc, const char* what) {
    if (!on) return;
    if (in.size() != want) {
      throw DataError(std::string("jmel_forward: ") + what + " input has dimension " +
                      std::to_string(in.size()) + ", model expects " + std::to_string(want));
    }
    const Vector out = jmel_detail::branch_forward(c, b, in, bc);
    concat.insert(concat.end(), out.begin(), out.end());
  };
  run(c.mask.uni, p.uni, x.u, c.inputs.u, cache ? &cache->uni : nullptr, "unigram");
  run(c.mask.bi, p.bi, x.b, c.inputs.b, cache ? &cache->bi : nullptr, "bigram");
  run(c.mask.img, p.img, x.i, c.inputs.i, cache ? &cache->img : nullptr, "image");
  Vector j = nn::dense_forward(p.final, concat);
  if (cache) cache->concat = std::move(concat);
  return j;
}

/// Accumulates dLoss/dParams into `grad` given dLoss/dJ.
inline void jmel_backward(const JmelParams& p, const JmelCache& cache, const Vector& dj,
                          JmelParams& grad) {
  const JmelConfig& c = p.config;
  const Vector dconcat = nn::dense_backward(p.final, cache.concat, dj, grad.final);
  size_t off = 0;
  auto run = [&](bool on, const BranchParams& b, const BranchCache& bc, BranchParams& g) {
    if (!on) return;
    Vector dout(dconcat.begin() + static_cast<std::ptrdiff_t>(off),
                dconcat.begin() + static_cast<std::ptrdiff_t>(off + c.branch));
    off += c.branch;
    jmel_detail::branch_backward(c, b, bc, dout, g);
  };
  run(c.mask.uni, p.uni, cache.uni, grad.uni);
  run(c.mask.bi, p.bi, cache.bi, grad.bi);
  run(c.mask.img, p.img, cache.img, grad.img);
}

struct TripletLoss {
  double loss = 0.0;
  bool active = false;
  Vector d_mention, d_positive, d_negative;
};

inline constexpr double kDistanceEpsilon = 1e-12;

/// max(0, margin + |m - pos| - |m - neg|) with gradients for all three inputs.
inline TripletLoss triplet_loss(const Vector& m, const Vector& pos, const Vector& neg,
                                double margin) {
  nn::require_dim(pos.size(), m.size(), "triplet_loss positive");
  nn::require_dim(neg.size(), m.size(), "triplet_loss negative");
  const size_t n = m.size();
  Vector dp(n), dn(n);
  for (size_t k = 0; k < n; ++k) {
    dp[k] = m[k] - pos[k];
    dn[k] = m[k] - neg[k];
  }
  const double dist_p = norm2(dp);
  const double dist_n = norm2(dn);
  TripletLoss r;
  r.d_mention.assign(n, 0.0);
  r.d_positive.assign(n, 0.0);
  r.d_negative.assign(n, 0.0);
  const double value = margin + dist_p - dist_n;
  if (value <= 0.0) return r;
  r.loss = value;
  r.active = true;
  const double sp = 1.0 / std::max(dist_p, kDistanceEpsilon);
  const double sn = 1.0 / std::max(dist_n, kDistanceEpsilon);
  for (size_t k = 0; k < n; ++k) {
    const double gp = dp[k] * sp;
    const double gn = dn[k] * sn;
    r.d_mention[k] = gp - gn;
    r.d_positive[k] = -gp;
    r.d_negative[k] = gn;
  }
  return r;
}

/// Cosine of the two joint vectors. A zero-norm side gives 0 and bumps
/// `degenerate` when provided.
inline double jmel_similarity(const JmelParams& p, const FeatureBundle& mention,
                              const FeatureBundle& entity, size_t* degenerate = nullptr) {
  bool zero = false;
  const double s = cosine(jmel_forward(p, mention), jmel_forward(p, entity), &zero);
  if (zero && degenerate) ++*degenerate;
  return s;
}

// --- checkpoints --------------------------------------------------------------

inline std::string encode_jmel(const JmelParams& p, nlohmann::ordered_json extra = {}) {
  nlohmann::ordered_json header;
  header["model"] = "jmel";
  header["config"] = to_json(p.config);
  if (!extra.is_null()) header["extra"] = std::move(extra);
  JmelParams copy = p;
  return nn::encode_checkpoint(std::move(header), copy.layout());
}

inline void save_jmel(const std::string& path, const JmelParams& p,
                      nlohmann::ordered_json extra = {}) {
  write_file(path, encode_jmel(p, std::move(extra)));
}

inline JmelParams decode_jmel(const nn::Checkpoint& ck, const std::string& what) {
  if (ck.header.value("model", "") != "jmel") throw DataError(what + ": not a jmel checkpoint");
  JmelParams p = JmelParams::init(jmel_config_from_json(ck.header.at("config")), 0);
  nn::restore(ck, p.layout());
  return p;
}

inline JmelParams load_jmel(const std::string& path) {
  return decode_jmel(nn::read_checkpoint(path), path);
}

// --- scoring ------------------------------------------------------------------

/// Cosine between joint vectors, with entity vectors computed once.
class JmelScorer : public Scorer {
 public:
  JmelScorer(const JmelParams& params, const KnowledgeBase& kb, const FeatureStore& store,
             const EntityFeatureCache& entities, std::string name = "JMEL")
      : params_(params), kb_(kb), store_(store), name_(std::move(name)) {
    for (const auto& [screen, _] : kb.entities) {
      joint_.emplace(screen, jmel_forward(params, entities.at(screen)));
    }
  }

  std::string name() const override { return name_; }

  std::vector<double> scores(const MentionRecord& m, const CandidateSet& c) const override {
    const Vector jm = jmel_forward(params_, mention_features(m, kb_, store_));
    std::vector<double> out;
    out.reserve(c.size());
    for (const auto& cand : c.candidates) {
      bool zero = false;
      out.push_back(cosine(jm, joint_.at(cand.screen_name), &zero));
      if (zero) ++degenerate_;
    }
    return out;
  }

  double similarity(const MentionRecord& m, const std::string& entity) const {
    const Vector jm = jmel_forward(params_, mention_features(m, kb_, store_));
    bool zero = false;
    const double s = cosine(jm, joint_.at(entity), &zero);
    if (zero) ++degenerate_;
    return s;
  }

  size_t degenerate_count() const { return degenerate_; }

 private:
  const JmelParams& params_;
  const KnowledgeBase& kb_;
  const FeatureStore& store_;
  std::string name_;
  std::map<std::string, Vector> joint_;
  mutable size_t degenerate_ = 0;
};

}  // namespace mmel
