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


// Run configuration and the stages that turn it into artifacts. Every stage
// exists in memory and as a directory-to-directory step; the CLI is a thin
// wrapper over the latter.

#pragma once

#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmel/baselines.hpp"
#include "mmel/bm25.hpp"
#include "mmel/candgen.hpp"
#include "mmel/common.hpp"
#include "mmel/corpus.hpp"
#include "mmel/dataset_forge.hpp"
#include "mmel/evalharness.hpp"
#include "mmel/features.hpp"
#include "mmel/fusion.hpp"
#include "mmel/jmel.hpp"
#include "mmel/trainer.hpp"

namespace mmel {

/// An embedding source for the ablation grid: a feature directory, or a
/// synthetic store drawn with its own seed when `path` is empty.
struct AblationStore {
  std::string name;
  std::string path;
  double snr = 2.0;

  bool operator==(const AblationStore&) const = default;
};

struct RunConfig {
  uint64_t seed = 1;
  std::string out = "out";
  // Inputs default to the matching directory under `out`.
  std::string corpus_dir;
  std::string features_dir;
  std::string models_dir;

  ForgeConfig forge;
  bool published_scale = false;
  SynthFeatureConfig features = desk_features();
  Bm25Params bm25;
  JmelConfig jmel = desk_jmel();
  TrainConfig train;
  FusionConfig fusion = desk_fusion();
  std::vector<std::string> fusion_masks = {"jmel+pop", "jmel+pop+bm25"};
  ExtraTreesConfig extratrees;
  std::vector<std::string> extratrees_masks = {"s2v", "s2v+img", "s2v+img+pop",
                                               "s2v+img+pop+bm25"};
  std::vector<std::string> rows = default_rows();
  std::vector<AblationStore> ablation = {{"synth-a", "", 16.0}, {"synth-b", "", 4.0}};

  static SynthFeatureConfig desk_features() {
    SynthFeatureConfig c;
    c.snr = 16.0;
    c.style_dim = 2;
    c.style_scale = 16.0;
    return c;
  }

  static JmelConfig desk_jmel() {
    JmelConfig c;
    c.hidden = 16;
    c.branch = 8;
    c.joint = 8;
    c.mask = ModalityMask::parse("s2v+img");
    return c;
  }

  static FusionConfig desk_fusion() {
    FusionConfig c;
    c.lbfgs.step_scale = 1.0;
    c.lbfgs.max_iters = 100;
    return c;
  }

  std::string corpus() const { return corpus_dir.empty() ? out + "/corpus" : corpus_dir; }
  std::string feature_dir() const {
    return features_dir.empty() ? out + "/features" : features_dir;
  }
  std::string models() const { return models_dir.empty() ? out + "/models" : models_dir; }
  std::string index_dir() const { return out + "/index"; }

  /// Named sub-seed for one stage.
  uint64_t stage_seed(std::string_view stage) const { return derive_seed(seed, stage); }

  ForgeConfig effective_forge() const {
    ForgeConfig f = forge;
    if (published_scale) {
      const ForgeConfig p = ForgeConfig::published_scale();
      f.timeline_mu = p.timeline_mu;
      f.timeline_sigma = p.timeline_sigma;
      f.timeline_min = p.timeline_min;
      f.timeline_max = p.timeline_max;
      f.imageless_rate = p.imageless_rate;
      f.noise_tweet_rate = p.noise_tweet_rate;
      f.mention_min = p.mention_min;
      f.mention_max = p.mention_max;
    }
    f.seed = stage_seed("forge");
    return f;
  }
};

namespace config_detail {

// Reads keys out of one JSON object and rejects whatever is left over.
class Section {
 public:
  Section(const nlohmann::json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw UsageError("config: '" + name_ + "' must be an object");
  }

  template <typename T>
  void read(const char* key, T& field) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      field = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw UsageError("config: bad value for '" + path(key) + "'");
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const nlohmann::json& at(const char* key) const { return j_.at(key); }
  std::string path(const std::string& key) const {
    return name_.empty() ? key : name_ + "." + key;
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) throw UsageError("config: unknown key '" + path(key) + "'");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

}  // namespace config_detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  using config_detail::Section;
  RunConfig c;
  Section top(j, "");
  top.read("seed", c.seed);
  if (top.has("paths")) {
    Section s(top.at("paths"), "paths");
    s.read("out", c.out);
    s.read("corpus", c.corpus_dir);
    s.read("features", c.features_dir);
    s.read("models", c.models_dir);
    s.finish();
  }
  if (top.has("forge")) {
    Section s(top.at("forge"), "forge");
    auto& f = c.forge;
    s.read("n_person_entities", f.n_person_entities);
    s.read("n_org_entities", f.n_org_entities);
    s.read("person_group_size", f.person_group_size);
    s.read("org_group_size", f.org_group_size);
    s.read("timeline_mu", f.timeline_mu);
    s.read("timeline_sigma", f.timeline_sigma);
    s.read("timeline_min", f.timeline_min);
    s.read("timeline_max", f.timeline_max);
    s.read("mention_min", f.mention_min);
    s.read("mention_max", f.mention_max);
    s.read("popularity_bias", f.popularity_bias);
    s.read("topic_dim", f.topic_dim);
    s.read("vocab_size", f.vocab_size);
    s.read("pool_size", f.pool_size);
    s.read("timeline_pool_prob", f.timeline_pool_prob);
    s.read("mention_pool_prob", f.mention_pool_prob);
    s.read("noise_tweet_rate", f.noise_tweet_rate);
    s.read("imageless_rate", f.imageless_rate);
    s.read("published_scale", c.published_scale);
    s.finish();
  }
  if (top.has("features")) {
    Section s(top.at("features"), "features");
    size_t text_dim = c.features.dims.u;
    s.read("text_dim", text_dim);
    c.features.dims.u = c.features.dims.b = text_dim;
    s.read("image_dim", c.features.dims.i);
    s.read("snr", c.features.snr);
    s.read("image_offset", c.features.image_offset);
    s.read("style_dim", c.features.style_dim);
    s.read("style_scale", c.features.style_scale);
    s.finish();
  }
  if (top.has("bm25")) {
    Section s(top.at("bm25"), "bm25");
    s.read("k1", c.bm25.k1);
    s.read("b", c.bm25.b);
    s.finish();
  }
  if (top.has("jmel")) {
    Section s(top.at("jmel"), "jmel");
    s.read("hidden", c.jmel.hidden);
    s.read("branch", c.jmel.branch);
    s.read("joint", c.jmel.joint);
    s.read("margin", c.jmel.margin);
    s.read("relu_after_second", c.jmel.relu_after_second);
    s.read("norm_last", c.jmel.norm_last);
    std::string mask = c.jmel.mask.str();
    s.read("mask", mask);
    c.jmel.mask = ModalityMask::parse(mask);
    s.finish();
  }
  if (top.has("train")) {
    Section s(top.at("train"), "train");
    auto& t = c.train;
    s.read("batch_size", t.batch_size);
    s.read("lr0", t.lr0);
    s.read("momentum", t.momentum);
    s.read("max_epochs", t.max_epochs);
    s.read("plateau_tol", t.plateau_tol);
    s.read("plateau_window", t.plateau_window);
    s.read("early_stop_start", t.early_stop_start);
    s.read("early_stop_patience", t.early_stop_patience);
    s.read("negatives_per_positive", t.negatives_per_positive);
    s.read("random_fill", t.random_fill);
    s.finish();
  }
  if (top.has("fusion")) {
    Section s(top.at("fusion"), "fusion");
    s.read("step_scale", c.fusion.lbfgs.step_scale);
    s.read("max_iters", c.fusion.lbfgs.max_iters);
    s.read("history", c.fusion.lbfgs.history);
    s.read("masks", c.fusion_masks);
    s.finish();
  }
  if (top.has("extratrees")) {
    Section s(top.at("extratrees"), "extratrees");
    s.read("n_trees", c.extratrees.n_trees);
    s.read("k", c.extratrees.k);
    s.read("n_min", c.extratrees.n_min);
    s.read("masks", c.extratrees_masks);
    s.finish();
  }
  if (top.has("eval")) {
    Section s(top.at("eval"), "eval");
    s.read("rows", c.rows);
    s.finish();
  }
  if (top.has("ablate")) {
    Section s(top.at("ablate"), "ablate");
    if (s.has("stores")) {
      c.ablation.clear();
      const auto& arr = s.at("stores");
      if (!arr.is_array()) throw UsageError("config: 'ablate.stores' must be an array");
      for (size_t k = 0; k < arr.size(); ++k) {
        Section e(arr[k], "ablate.stores[" + std::to_string(k) + "]");
        AblationStore st;
        e.read("name", st.name);
        e.read("path", st.path);
        e.read("snr", st.snr);
        e.finish();
        if (st.name.empty()) throw UsageError("config: ablation store without a name");
        c.ablation.push_back(std::move(st));
      }
    }
    s.finish();
  }
  top.finish();

  c.train.validate();
  c.jmel.validate();
  if (c.features.dims.u == 0 || c.features.dims.i == 0 || c.features.snr < 0.0 ||
      c.features.style_scale < 0.0) {
    throw UsageError("config: features needs positive dims and non-negative snr/style_scale");
  }
  for (const auto& m : c.fusion_masks) {
    if (!FeatureMask::parse(m).jmel) throw UsageError("config: fusion mask '" + m + "' lacks jmel");
  }
  for (const auto& m : c.extratrees_masks) FeatureMask::parse(m);
  for (const auto& r : c.rows) parse_row(r);
  if (c.extratrees.n_trees == 0 || c.extratrees.n_min < 2) {
    throw UsageError("config: extratrees needs n_trees >= 1 and n_min >= 2");
  }
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& ex) {
    throw UsageError(path + ": " + ex.what());
  } catch (const DataError& ex) {
    throw UsageError(ex.what());
  }
  return parse_run_config(j);
}

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["paths"] = {{"out", c.out},
                {"corpus", c.corpus()},
                {"features", c.feature_dir()},
                {"models", c.models()}};
  const auto& f = c.forge;
  j["forge"] = {{"n_person_entities", f.n_person_entities},
                {"n_org_entities", f.n_org_entities},
                {"person_group_size", f.person_group_size},
                {"org_group_size", f.org_group_size},
                {"timeline_mu", f.timeline_mu},
                {"timeline_sigma", f.timeline_sigma},
                {"timeline_min", f.timeline_min},
                {"timeline_max", f.timeline_max},
                {"mention_min", f.mention_min},
                {"mention_max", f.mention_max},
                {"popularity_bias", f.popularity_bias},
                {"topic_dim", f.topic_dim},
                {"vocab_size", f.vocab_size},
                {"pool_size", f.pool_size},
                {"timeline_pool_prob", f.timeline_pool_prob},
                {"mention_pool_prob", f.mention_pool_prob},
                {"noise_tweet_rate", f.noise_tweet_rate},
                {"imageless_rate", f.imageless_rate},
                {"published_scale", c.published_scale}};
  j["features"] = {{"text_dim", c.features.dims.u},
                   {"image_dim", c.features.dims.i},
                   {"snr", c.features.snr},
                   {"image_offset", c.features.image_offset},
                   {"style_dim", c.features.style_dim},
                   {"style_scale", c.features.style_scale}};
  j["bm25"] = {{"k1", c.bm25.k1}, {"b", c.bm25.b}};
  j["jmel"] = {{"hidden", c.jmel.hidden},
               {"branch", c.jmel.branch},
               {"joint", c.jmel.joint},
               {"margin", c.jmel.margin},
               {"relu_after_second", c.jmel.relu_after_second},
               {"norm_last", c.jmel.norm_last},
               {"mask", c.jmel.mask.str()}};
  const auto& t = c.train;
  j["train"] = {{"batch_size", t.batch_size},
                {"lr0", t.lr0},
                {"momentum", t.momentum},
                {"max_epochs", t.max_epochs},
                {"plateau_tol", t.plateau_tol},
                {"plateau_window", t.plateau_window},
                {"early_stop_start", t.early_stop_start},
                {"early_stop_patience", t.early_stop_patience},
                {"negatives_per_positive", t.negatives_per_positive},
                {"random_fill", t.random_fill}};
  j["fusion"] = {{"step_scale", c.fusion.lbfgs.step_scale},
                 {"max_iters", c.fusion.lbfgs.max_iters},
                 {"history", c.fusion.lbfgs.history},
                 {"masks", c.fusion_masks}};
  j["extratrees"] = {{"n_trees", c.extratrees.n_trees},
                     {"k", c.extratrees.k},
                     {"n_min", c.extratrees.n_min},
                     {"masks", c.extratrees_masks}};
  j["eval"] = {{"rows", c.rows}};
  nlohmann::ordered_json stores = nlohmann::ordered_json::array();
  for (const auto& s : c.ablation) {
    stores.push_back({{"name", s.name}, {"path", s.path}, {"snr", s.snr}});
  }
  j["ablate"] = {{"stores", stores}};
  return j;
}

// --- in-memory stages ----------------------------------------------------------

struct World {
  KnowledgeBase kb;  // includes the tweets hosting each mention
  std::vector<Tweet> raw_tweets;
  TopicMap topics;
  std::vector<AmbiguityGroup> groups;
  MentionReport report;
  DatasetSplit split;
};

inline std::vector<MentionRecord> all_mentions(const DatasetSplit& s) {
  std::vector<MentionRecord> out = s.train;
  out.insert(out.end(), s.valid.begin(), s.valid.end());
  out.insert(out.end(), s.test.begin(), s.test.end());
  return out;
}

inline World forge_world(const RunConfig& c) {
  ForgeOutput fo = synth_corpus(c.effective_forge());
  MentionGeneration gen = generate_mentions(fo.kb, fo.raw_tweets);
  World w;
  w.kb = std::move(fo.kb);
  for (auto& t : gen.host_tweets) w.kb.tweets.emplace(t.id, std::move(t));
  w.raw_tweets = std::move(fo.raw_tweets);
  w.topics = std::move(fo.topics);
  w.groups = std::move(fo.planted_groups);
  w.report = gen.report;
  w.split = split_mentions(gen.records, c.stage_seed("split"));
  return w;
}

inline FeatureStore make_features(const RunConfig& c, const KnowledgeBase& kb,
                                  const DatasetSplit& split, const TopicMap& topics) {
  SynthFeatureConfig f = c.features;
  f.seed = c.stage_seed("features");
  return synth_features(kb, all_mentions(split), topics, f);
}

inline JmelConfig jmel_config_for(const RunConfig& c, const FeatureDims& dims,
                                  const ModalityMask& mask) {
  JmelConfig j = c.jmel;
  j.inputs = dims;
  j.mask = mask;
  return j;
}

inline TrainResult train_jmel_model(const RunConfig& c, const KnowledgeBase& kb,
                                    const FeatureStore& store, const DatasetSplit& split,
                                    const ModalityMask& mask,
                                    const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  const JmelConfig jc = jmel_config_for(c, store.dims, mask);
  TrainConfig tc = c.train;
  tc.seed = c.stage_seed("train:" + mask.str());
  return train_jmel(JmelParams::init(jc, c.stage_seed("jmel-init:" + mask.str())),
                    {kb, store, split.train, split.valid}, tc, on_epoch);
}

/// Sources for fusion and Extra-Trees features; `jmel` may be null when the
/// mask does not use it.
struct SourceBundle {
  const KnowledgeBase& kb;
  const FeatureStore& store;
  const EntityFeatureCache& entities;
  const CandidateIndex& index;
  const TimelineIndex* bm25;
};

inline FusionTraining train_fusion_model(const RunConfig& c, const SourceBundle& s,
                                         const std::vector<MentionRecord>& train,
                                         const JmelParams& jmel, const FeatureMask& mask) {
  const JmelScorer scorer(jmel, s.kb, s.store, s.entities);
  const FeatureSources src{s.kb, s.store, s.entities, s.bm25, &scorer};
  const Standardizer stdz = fit_standardizer(train, s.index, s.kb, s.bm25);
  const LabeledPairs pairs = make_pairs(train, s.index, src, mask, stdz);
  FusionConfig fc = c.fusion;
  fc.seed = c.stage_seed("fusion:" + fusion_key(jmel.config.mask, mask));
  return train_fusion(pairs, mask, stdz, fc);
}

inline ExtraTreesModel train_extratrees_model(const RunConfig& c, const SourceBundle& s,
                                              const std::vector<MentionRecord>& train,
                                              const FeatureMask& mask,
                                              const JmelParams* jmel = nullptr) {
  std::unique_ptr<JmelScorer> scorer;
  if (mask.jmel) {
    if (!jmel) throw DataError("extratrees: mask needs a trained JMEL model");
    scorer = std::make_unique<JmelScorer>(*jmel, s.kb, s.store, s.entities);
  }
  const FeatureSources src{s.kb, s.store, s.entities, s.bm25, scorer.get()};
  ExtraTreesModel m;
  m.mask = mask;
  m.standardizer = fit_standardizer(train, s.index, s.kb, s.bm25);
  const LabeledPairs pairs = make_pairs(train, s.index, src, mask, m.standardizer);
  if (pairs.x.size() < 2) throw DataError("extratrees: fewer than 2 training pairs");
  ExtraTreesConfig ec = c.extratrees;
  ec.seed = c.stage_seed("extratrees:" + mask.str());
  m.forest = extratrees_train(pairs.x, pairs.y, ec);
  return m;
}

// --- on-disk stages ---------------------------------------------------------------

namespace stage_detail {

inline void require_file(const std::string& path, const std::string& produced_by) {
  if (!std::filesystem::exists(path)) {
    throw DataError("missing " + path + " (run '" + produced_by + "' first)");
  }
}

inline void make_dir(const std::string& dir) { std::filesystem::create_directories(dir); }

}  // namespace stage_detail

inline std::string jmel_path(const RunConfig& c, const ModalityMask& m) {
  return c.models() + "/jmel_" + m.str() + ".ckpt";
}
inline std::string fusion_path(const RunConfig& c, const ModalityMask& jm, const FeatureMask& m) {
  return c.models() + "/fusion_" + fusion_key(jm, m) + ".ckpt";
}
inline std::string extratrees_path(const RunConfig& c, const FeatureMask& m) {
  return c.models() + "/et_" + m.str() + ".json";
}
inline std::string bm25_path(const RunConfig& c) { return c.index_dir() + "/bm25.json"; }

inline void write_run_config(const RunConfig& c) {
  stage_detail::make_dir(c.out);
  write_file(c.out + "/run.json", to_json(c).dump(2) + "\n");
}

/// forge: synthetic KB, tweets, split mentions and side files.
inline void stage_forge(const RunConfig& c) {
  const World w = forge_world(c);
  const std::string dir = c.corpus();
  stage_detail::make_dir(dir);
  save_kb(w.kb, dir);
  save_split(dir + "/mentions.jsonl", w.split);
  save_tweets(dir + "/raw_tweets.jsonl", w.raw_tweets);
  save_topics(dir + "/topics.jsonl", w.topics);
  save_groups(dir + "/groups.jsonl", w.groups);
  write_file(dir + "/mention_report.txt", mention_report_text(w.report));
  write_run_config(c);
}

struct Corpus {
  KnowledgeBase kb;
  DatasetSplit split;
};

inline Corpus load_corpus(const RunConfig& c) {
  const std::string dir = c.corpus();
  stage_detail::require_file(dir + "/kb.jsonl", "forge");
  stage_detail::require_file(dir + "/mentions.jsonl", "forge");
  Corpus out{load_kb(dir), load_split(dir + "/mentions.jsonl")};
  const auto violations = validate_kb(out.kb, all_mentions(out.split));
  if (!violations.empty()) {
    throw DataError(dir + ": " + std::to_string(violations.size()) +
                    " validation problems, first: " + violations.front().rule + " on " +
                    violations.front().subject + ": " + violations.front().message);
  }
  return out;
}

/// features: synthetic feature store conditioned on the forged topics.
inline void stage_features(const RunConfig& c) {
  const Corpus corpus = load_corpus(c);
  stage_detail::require_file(c.corpus() + "/topics.jsonl", "forge");
  const FeatureStore store =
      make_features(c, corpus.kb, corpus.split, load_topics(c.corpus() + "/topics.jsonl"));
  write_features(store, c.feature_dir());
}

inline FeatureStore load_store(const RunConfig& c, const Corpus& corpus) {
  stage_detail::require_file(c.feature_dir() + "/manifest.json", "features");
  FeatureStore store = read_features(c.feature_dir());
  const auto problems = validate_features(store, corpus.kb, all_mentions(corpus.split));
  if (!problems.empty()) {
    throw DataError(c.feature_dir() + ": " + std::to_string(problems.size()) +
                    " problems, first: " + problems.front());
  }
  return store;
}

/// index: BM25 timeline index and the candidate-set cache.
inline void stage_index(const RunConfig& c) {
  const Corpus corpus = load_corpus(c);
  stage_detail::make_dir(c.index_dir());
  build_index(corpus.kb, c.bm25).save(bm25_path(c));
  const CandidateIndex index(corpus.kb);
  std::vector<CandidateSet> sets;
  for (const auto& m : all_mentions(corpus.split)) sets.push_back(index.candidates(m));
  save_candidate_cache(c.index_dir() + "/candidates.jsonl", sets);
}

inline void stage_train_jmel(const RunConfig& c, const ModalityMask& mask,
                             std::ostream* progress = nullptr) {
  const Corpus corpus = load_corpus(c);
  const FeatureStore store = load_store(c, corpus);
  auto on_epoch = [&](const EpochRecord& r) {
    if (progress) {
      *progress << "epoch " << r.epoch << " loss " << r.mean_loss << " lr " << r.lr
                << " valid " << r.valid_acc << "\n";
    }
  };
  const TrainResult res = train_jmel_model(c, corpus.kb, store, corpus.split, mask, on_epoch);
  stage_detail::make_dir(c.models());
  save_jmel(jmel_path(c, mask), res.best,
            {{"best_epoch", res.state.best_epoch}, {"best_valid", res.state.best_valid}});
  write_train_report(c.models() + "/jmel_" + mask.str() + ".report.jsonl", res.report);
}

inline JmelParams load_jmel_for(const RunConfig& c, const ModalityMask& mask,
                                const FeatureStore& store) {
  const std::string path = jmel_path(c, mask);
  stage_detail::require_file(path, "train-jmel --mask " + mask.str());
  JmelParams p = load_jmel(path);
  if (p.config.inputs != store.dims) {
    throw DataError(path + ": model dimensions do not match the feature store");
  }
  return p;
}

inline std::optional<TimelineIndex> load_bm25_if(const RunConfig& c, bool needed) {
  if (!needed) return std::nullopt;
  stage_detail::require_file(bm25_path(c), "index");
  return TimelineIndex::load(bm25_path(c));
}

inline void stage_train_fusion(const RunConfig& c, const FeatureMask& mask) {
  if (!mask.jmel) throw UsageError("train-fusion: mask must include jmel");
  const Corpus corpus = load_corpus(c);
  const FeatureStore store = load_store(c, corpus);
  const JmelParams jmel = load_jmel_for(c, c.jmel.mask, store);
  const auto bm25 = load_bm25_if(c, mask.bm25);
  const EntityFeatureCache entities(corpus.kb, store);
  const CandidateIndex index(corpus.kb);
  const SourceBundle s{corpus.kb, store, entities, index, bm25 ? &*bm25 : nullptr};
  const FusionTraining t = train_fusion_model(c, s, corpus.split.train, jmel, mask);
  stage_detail::make_dir(c.models());
  save_fusion(fusion_path(c, c.jmel.mask, mask), t.model);
}

inline void stage_train_extratrees(const RunConfig& c, const FeatureMask& mask) {
  const Corpus corpus = load_corpus(c);
  const FeatureStore store = load_store(c, corpus);
  std::optional<JmelParams> jmel;
  if (mask.jmel) jmel = load_jmel_for(c, c.jmel.mask, store);
  const auto bm25 = load_bm25_if(c, mask.bm25);
  const EntityFeatureCache entities(corpus.kb, store);
  const CandidateIndex index(corpus.kb);
  const SourceBundle s{corpus.kb, store, entities, index, bm25 ? &*bm25 : nullptr};
  const ExtraTreesModel m =
      train_extratrees_model(c, s, corpus.split.train, mask, jmel ? &*jmel : nullptr);
  stage_detail::make_dir(c.models());
  save_extratrees(extratrees_path(c, mask), m);
}

/// Loads exactly the artifacts `rows` need, naming the first missing one.
inline ModelSet load_models(const RunConfig& c, const std::vector<std::string>& rows,
                            const FeatureStore& store) {
  ModelSet models;
  for (const auto& name : rows) {
    const RowSpec r = parse_row(name);
    for (const auto& q : requirements(r)) {
      if (q.kind == "bm25" && !models.bm25) {
        models.bm25 = load_bm25_if(c, true);
      } else if (q.kind == "jmel" && !models.jmel.count(q.key)) {
        models.jmel.emplace(q.key, load_jmel_for(c, r.modalities, store));
      } else if (q.kind == "fusion" && !models.fusion.count(q.key)) {
        const std::string path = fusion_path(c, r.modalities, r.features);
        stage_detail::require_file(path, "train-fusion --mask " + r.features.str());
        models.fusion.emplace(q.key, load_fusion(path));
      } else if (q.kind == "extratrees" && !models.extratrees.count(q.key)) {
        const std::string path = extratrees_path(c, r.features);
        stage_detail::require_file(path, "train-et --mask " + r.features.str());
        models.extratrees.emplace(q.key, load_extratrees(path));
      }
    }
  }
  return models;
}

inline std::vector<ResultRow> stage_eval(const RunConfig& c) {
  const Corpus corpus = load_corpus(c);
  const FeatureStore store = load_store(c, corpus);
  const ModelSet models = load_models(c, c.rows, store);
  const EntityFeatureCache entities(corpus.kb, store);
  const CandidateIndex index(corpus.kb);
  const auto rows = run_matrix(c.rows, {corpus.kb, store, entities, index, corpus.split}, models);
  write_file(c.out + "/results.csv", results_csv(rows, c.seed));
  write_file(c.out + "/results.txt", results_text(rows));
  return rows;
}

/// Trains and evaluates text-only and text+image JMEL for one feature store.
inline AblationRow ablation_row(const RunConfig& c, const std::string& name,
                                const KnowledgeBase& kb, const FeatureStore& store,
                                const DatasetSplit& split) {
  const EntityFeatureCache entities(kb, store);
  const CandidateIndex index(kb);
  AblationRow row;
  row.store = name;
  RunConfig rc = c;
  rc.seed = derive_seed(c.seed, "ablate:" + name);
  for (bool img : {false, true}) {
    const ModalityMask mask{true, true, img};
    const TrainResult t = train_jmel_model(rc, kb, store, split, mask);
    const JmelScorer scorer(t.best, kb, store, entities);
    const double v = accuracy(split.valid, index, kb, scorer).accuracy;
    const double te = accuracy(split.test, index, kb, scorer).accuracy;
    (img ? row.valid_txt_img : row.valid_txt) = v;
    (img ? row.test_txt_img : row.test_txt) = te;
  }
  return row;
}

inline std::vector<AblationRow> stage_ablate(const RunConfig& c) {
  const Corpus corpus = load_corpus(c);
  std::vector<AblationRow> rows;
  std::optional<TopicMap> topics;
  for (const auto& s : c.ablation) {
    FeatureStore store;
    if (s.path.empty()) {
      if (!topics) {
        stage_detail::require_file(c.corpus() + "/topics.jsonl", "forge");
        topics = load_topics(c.corpus() + "/topics.jsonl");
      }
      SynthFeatureConfig f = c.features;
      f.snr = s.snr;
      f.seed = derive_seed(c.seed, "ablate-features:" + s.name);
      store = synth_features(corpus.kb, all_mentions(corpus.split), *topics, f);
    } else {
      stage_detail::require_file(s.path + "/manifest.json", "an external feature extractor");
      store = read_features(s.path);
      const auto problems = validate_features(store, corpus.kb, all_mentions(corpus.split));
      if (!problems.empty()) throw DataError(s.path + ": " + problems.front());
    }
    rows.push_back(ablation_row(c, s.name, corpus.kb, store, corpus.split));
  }
  write_file(c.out + "/ablation.csv", ablation_csv(rows));
  write_file(c.out + "/ablation.txt", ablation_text(rows));
  return rows;
}

inline DatasetStats stage_stats(const RunConfig& c) {
  const Corpus corpus = load_corpus(c);
  const DatasetStats s = dataset_stats(corpus.kb, all_mentions(corpus.split));
  write_file(c.out + "/stats.txt", stats_text(s));
  write_file(c.out + "/stats.csv", stats_csv(s));
  return s;
}

}  // namespace mmel
