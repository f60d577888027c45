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


// Experiment matrix: named result rows over valid and test, with published
// reference values shown alongside.

#pragma once

#include <cctype>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mmel/baselines.hpp"
#include "mmel/bm25.hpp"
#include "mmel/candgen.hpp"
#include "mmel/corpus.hpp"
#include "mmel/features.hpp"
#include "mmel/fusion.hpp"
#include "mmel/jmel.hpp"
#include "mmel/linking.hpp"

namespace mmel {

enum class RowKind { kPopularity, kBm25, kRaw, kJmel, kFusion, kExtraTrees };

/// A result row name parsed into the scorer it denotes. Names look like
/// "Popularity", "BM25", "S2V-uni", "Img", "ET(S2V+Img)", "JMEL(S2V+Pop)".
struct RowSpec {
  std::string name;
  RowKind kind = RowKind::kPopularity;
  Modality raw = Modality::kS2v;  // kRaw
  ModalityMask modalities;        // kJmel, kFusion
  FeatureMask features;           // kFusion, kExtraTrees
};

inline std::string fusion_key(const ModalityMask& jmel, const FeatureMask& features) {
  return jmel.str() + "_" + features.str();
}

inline RowSpec parse_row(const std::string& name) {
  RowSpec r;
  r.name = name;
  if (name == "Popularity") return r;
  if (name == "BM25") {
    r.kind = RowKind::kBm25;
    return r;
  }
  for (Modality m : {Modality::kUni, Modality::kBi, Modality::kImg, Modality::kS2v}) {
    if (name == to_string(m)) {
      r.kind = RowKind::kRaw;
      r.raw = m;
      return r;
    }
  }
  const size_t open = name.find('(');
  if (open == std::string::npos || name.back() != ')') {
    throw UsageError("unknown result row '" + name + "'");
  }
  const std::string head = name.substr(0, open);
  std::string inner;
  for (char c : name.substr(open + 1, name.size() - open - 2)) {
    if (c != ' ') inner.push_back(ascii_lower(c));
  }
  FeatureMask f;
  try {
    f = FeatureMask::parse(inner);
  } catch (const UsageError&) {
    throw UsageError("unknown features in result row '" + name + "'");
  }
  if (f.jmel) throw UsageError("result row '" + name + "' names jmel as an input");
  if (head == "ET") {
    r.kind = RowKind::kExtraTrees;
    r.features = f;
    return r;
  }
  if (head != "JMEL") throw UsageError("unknown result row '" + name + "'");
  if (!f.uni && !f.bi && !f.img) throw UsageError("row '" + name + "' has no JMEL inputs");
  r.modalities = {f.uni, f.bi, f.img};
  if (!f.pop && !f.bm25) {
    r.kind = RowKind::kJmel;
    return r;
  }
  r.kind = RowKind::kFusion;
  r.features.jmel = true;
  r.features.pop = f.pop;
  r.features.bm25 = f.bm25;
  return r;
}

inline const std::vector<std::string>& default_rows() {
  static const std::vector<std::string> rows = {
      "Popularity",        "BM25",
      "S2V-uni",           "S2V-bi",
      "Img",               "ET(S2V)",
      "ET(S2V+Img)",       "ET(S2V+Img+Pop)",
      "ET(S2V+Img+Pop+BM25)", "JMEL(S2V)",
      "JMEL(S2V+Img)",     "JMEL(S2V+Img+Pop)",
      "JMEL(S2V+Img+Pop+BM25)"};
  return rows;
}

struct Published {
  double valid;
  double test;
};

/// Published accuracies for the rows that have one.
inline std::optional<Published> published(const std::string& row) {
  static const std::map<std::string, Published> table = {
      {"Popularity", {0.369, 0.590}},
      {"BM25", {0.415, 0.433}},
      {"S2V-uni", {0.482, 0.513}},
      {"S2V-bi", {0.487, 0.523}},
      {"Img", {0.290, 0.299}},
      {"ET(S2V)", {0.495, 0.529}},
      {"ET(S2V+Img)", {0.507, 0.542}},
      {"ET(S2V+Img+Pop)", {0.585, 0.627}},
      {"ET(S2V+Img+Pop+BM25)", {0.654, 0.671}},
      {"JMEL(S2V)", {0.628, 0.724}},
      {"JMEL(S2V+Img)", {0.639, 0.731}},
      {"JMEL(S2V+Img+Pop)", {0.767, 0.776}},
      {"JMEL(S2V+Img+Pop+BM25)", {0.795, 0.803}},
  };
  auto it = table.find(row);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

/// Trained models available to the matrix, keyed by mask strings.
struct ModelSet {
  std::map<std::string, JmelParams> jmel;          // ModalityMask::str()
  std::map<std::string, FusionModel> fusion;       // fusion_key()
  std::map<std::string, ExtraTreesModel> extratrees;  // FeatureMask::str()
  std::optional<TimelineIndex> bm25;
};

/// What a row needs beyond the corpus and features.
struct Requirement {
  std::string kind;  // "jmel", "fusion", "extratrees", "bm25"
  std::string key;
};

inline std::vector<Requirement> requirements(const RowSpec& r) {
  std::vector<Requirement> out;
  auto need_features = [&](const FeatureMask& f) {
    if (f.bm25) out.push_back({"bm25", ""});
  };
  switch (r.kind) {
    case RowKind::kPopularity:
    case RowKind::kRaw: break;
    case RowKind::kBm25: out.push_back({"bm25", ""}); break;
    case RowKind::kJmel: out.push_back({"jmel", r.modalities.str()}); break;
    case RowKind::kFusion:
      out.push_back({"jmel", r.modalities.str()});
      out.push_back({"fusion", fusion_key(r.modalities, r.features)});
      need_features(r.features);
      break;
    case RowKind::kExtraTrees:
      out.push_back({"extratrees", r.features.str()});
      need_features(r.features);
      break;
  }
  return out;
}

struct EvalData {
  const KnowledgeBase& kb;
  const FeatureStore& store;
  const EntityFeatureCache& entities;
  const CandidateIndex& index;
  const DatasetSplit& split;
};

struct ResultRow {
  std::string name;
  AccuracyResult valid;
  AccuracyResult test;
};

/// Throws DataError naming the first artifact `r` needs that `models` lacks.
inline void check_requirements(const RowSpec& r, const ModelSet& models) {
  for (const auto& q : requirements(r)) {
    const bool ok = q.kind == "bm25"     ? models.bm25.has_value()
                    : q.kind == "jmel"   ? models.jmel.count(q.key) > 0
                    : q.kind == "fusion" ? models.fusion.count(q.key) > 0
                                         : models.extratrees.count(q.key) > 0;
    if (!ok) {
      throw DataError("row " + r.name + " needs a trained " + q.kind +
                      (q.key.empty() ? std::string() : " model '" + q.key + "'"));
    }
  }
}

/// Evaluates one row on valid and test.
inline ResultRow evaluate_row(const RowSpec& r, const EvalData& d, const ModelSet& models) {
  check_requirements(r, models);
  const TimelineIndex* bm25 = models.bm25 ? &*models.bm25 : nullptr;
  std::unique_ptr<JmelScorer> jmel;
  if (r.kind == RowKind::kJmel || r.kind == RowKind::kFusion) {
    jmel = std::make_unique<JmelScorer>(models.jmel.at(r.modalities.str()), d.kb, d.store,
                                        d.entities, r.name);
  }
  const FeatureSources src{d.kb, d.store, d.entities, bm25, jmel.get()};
  std::unique_ptr<Scorer> scorer;
  switch (r.kind) {
    case RowKind::kPopularity: scorer = std::make_unique<PopularityScorer>(d.kb); break;
    case RowKind::kBm25: scorer = std::make_unique<Bm25Scorer>(*bm25, d.kb); break;
    case RowKind::kRaw:
      scorer = std::make_unique<RawSimilarityScorer>(r.raw, d.kb, d.store, d.entities);
      break;
    case RowKind::kJmel: break;
    case RowKind::kFusion:
      scorer = std::make_unique<FusionScorer>(
          models.fusion.at(fusion_key(r.modalities, r.features)), src, r.name);
      break;
    case RowKind::kExtraTrees:
      scorer = std::make_unique<ExtraTreesScorer>(models.extratrees.at(r.features.str()), src,
                                                  r.name);
      break;
  }
  const Scorer& s = scorer ? *scorer : static_cast<const Scorer&>(*jmel);
  return {r.name, accuracy(d.split.valid, d.index, d.kb, s),
          accuracy(d.split.test, d.index, d.kb, s)};
}

/// Rows in request order. Every row's artifacts are checked before any
/// evaluation runs.
inline std::vector<ResultRow> run_matrix(const std::vector<std::string>& rows,
                                         const EvalData& d, const ModelSet& models) {
  std::vector<RowSpec> specs;
  for (const auto& name : rows) specs.push_back(parse_row(name));
  for (const auto& s : specs) check_requirements(s, models);
  std::vector<ResultRow> out;
  for (const auto& s : specs) out.push_back(evaluate_row(s, d, models));
  return out;
}

// --- tables -------------------------------------------------------------------

inline std::string format_accuracy(double a) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << a;
  return os.str();
}

/// `config,split,accuracy,n,empty_candidates,seed`, two lines per row.
inline std::string results_csv(const std::vector<ResultRow>& rows, uint64_t seed) {
  std::string out = "config,split,accuracy,n,empty_candidates,seed\n";
  for (const auto& r : rows) {
    for (const auto& [split, a] : {std::pair{"valid", &r.valid}, std::pair{"test", &r.test}}) {
      out += r.name + "," + split + "," + format_accuracy(a->accuracy) + "," +
             std::to_string(a->n) + "," + std::to_string(a->empty_candidates) + "," +
             std::to_string(seed) + "\n";
    }
  }
  return out;
}

struct ResultsFile {
  std::vector<ResultRow> rows;
  uint64_t seed = 0;
};

inline ResultsFile parse_results_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "config,split,accuracy,n,empty_candidates,seed") {
    throw DataError("results.csv: bad header");
  }
  ResultsFile f;
  size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw DataError("results.csv line " + std::to_string(n) + ": 6 cells");
    AccuracyResult a;
    try {
      a.accuracy = std::stod(cells[2]);
      a.n = std::stoul(cells[3]);
      a.empty_candidates = std::stoul(cells[4]);
      f.seed = std::stoull(cells[5]);
    } catch (const std::exception&) {
      throw DataError("results.csv line " + std::to_string(n) + ": bad number");
    }
    a.correct = static_cast<size_t>(std::llround(a.accuracy * static_cast<double>(a.n)));
    if (cells[1] == "valid") {
      f.rows.push_back({cells[0], a, {}});
    } else if (cells[1] == "test" && !f.rows.empty() && f.rows.back().name == cells[0]) {
      f.rows.back().test = a;
    } else {
      throw DataError("results.csv line " + std::to_string(n) + ": unexpected split");
    }
  }
  return f;
}

/// Aligned table with the published reference values next to ours.
inline std::string results_text(const std::vector<ResultRow>& rows) {
  size_t width = 6;
  for (const auto& r : rows) width = std::max(width, r.name.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width)) << "config" << std::right
     << std::setw(9) << "valid" << std::setw(9) << "test" << std::setw(13) << "published"
     << std::setw(8) << "n_test" << std::setw(8) << "empty" << "\n";
  for (const auto& r : rows) {
    os << std::left << std::setw(static_cast<int>(width)) << r.name << std::right
       << std::fixed << std::setprecision(3) << std::setw(9) << r.valid.accuracy
       << std::setw(9) << r.test.accuracy;
    if (const auto p = published(r.name)) {
      std::ostringstream ref;
      ref << std::fixed << std::setprecision(3) << p->valid << "/" << p->test;
      os << std::setw(13) << ref.str();
    } else {
      os << std::setw(13) << "-";
    }
    os << std::setw(8) << r.test.n << std::setw(8) << r.test.empty_candidates << "\n";
  }
  return os.str();
}

// --- ablation grid --------------------------------------------------------------

/// One embedding source: accuracies with text-only and text+image JMEL.
struct AblationRow {
  std::string store;
  double valid_txt = 0.0, valid_txt_img = 0.0;
  double test_txt = 0.0, test_txt_img = 0.0;
};

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "store,valid_txt,valid_txt_img,test_txt,test_txt_img\n";
  for (const auto& r : rows) {
    out += r.store + "," + format_accuracy(r.valid_txt) + "," + format_accuracy(r.valid_txt_img) +
           "," + format_accuracy(r.test_txt) + "," + format_accuracy(r.test_txt_img) + "\n";
  }
  return out;
}

inline std::string ablation_text(const std::vector<AblationRow>& rows) {
  size_t width = 5;
  for (const auto& r : rows) width = std::max(width, r.store.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width)) << "" << std::right << std::setw(18)
     << "Valid" << std::setw(18) << "Test" << "\n";
  os << std::left << std::setw(static_cast<int>(width)) << "store" << std::right
     << std::setw(9) << "Txt" << std::setw(9) << "Txt+Img" << std::setw(9) << "Txt"
     << std::setw(9) << "Txt+Img" << "\n";
  for (const auto& r : rows) {
    os << std::left << std::setw(static_cast<int>(width)) << r.store << std::right
       << std::fixed << std::setprecision(3) << std::setw(9) << r.valid_txt << std::setw(9)
       << r.valid_txt_img << std::setw(9) << r.test_txt << std::setw(9) << r.test_txt_img
       << "\n";
  }
  return os.str();
}

}  // namespace mmel
