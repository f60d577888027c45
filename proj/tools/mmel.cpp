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


// mmel: command-line front end. Every subcommand reads the run config (a JSON
// file plus flag overrides) and writes only under the output directory.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mmel/pipeline.hpp"

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct Flags {
  std::string config;
  std::optional<uint64_t> seed;
  std::string out;
  std::string mask;
};

mmel::RunConfig resolve(const Flags& f) {
  mmel::RunConfig c = f.config.empty() ? mmel::RunConfig{} : mmel::load_run_config(f.config);
  if (f.seed) c.seed = *f.seed;
  if (!f.out.empty()) c.out = f.out;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace mmel;
  CLI::App app{"Multimodal entity linking on synthetic social-media corpora"};
  app.require_subcommand(1);
  Flags flags;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "Run configuration (JSON)")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "Master seed (overrides the config)");
    sub->add_option("--out", flags.out, "Output directory (overrides the config)");
  };
  auto add_mask = [&](CLI::App* sub, const std::string& help) {
    sub->add_option("--mask", flags.mask, help);
  };

  auto* forge = app.add_subcommand("forge", "Synthesize the knowledge base and mention split");
  auto* features = app.add_subcommand("features", "Write the synthetic feature store");
  auto* index = app.add_subcommand("index", "Build the BM25 index and candidate sets");
  auto* train_jmel = app.add_subcommand("train-jmel", "Train a joint embedding model");
  add_mask(train_jmel, "Modalities, e.g. s2v+img (default: the config's jmel.mask)");
  auto* train_fusion = app.add_subcommand("train-fusion", "Train fusion MLPs");
  add_mask(train_fusion, "Feature mask including jmel (default: every config mask)");
  auto* train_et = app.add_subcommand("train-et", "Train Extra-Trees baselines");
  add_mask(train_et, "Feature mask (default: every config mask)");
  auto* eval = app.add_subcommand("eval", "Evaluate the configured result rows");
  auto* ablate = app.add_subcommand("ablate", "Compare JMEL text and text+image per store");
  auto* stats = app.add_subcommand("stats", "Report corpus statistics");
  for (auto* sub : app.get_subcommands({})) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    const RunConfig c = resolve(flags);
    if (forge->parsed()) {
      write_run_config(c);
      stage_forge(c);
      std::cerr << "corpus written to " << c.corpus() << "\n";
    } else if (features->parsed()) {
      stage_features(c);
      std::cerr << "features written to " << c.feature_dir() << "\n";
    } else if (index->parsed()) {
      stage_index(c);
      std::cerr << "index written to " << c.index_dir() << "\n";
    } else if (train_jmel->parsed()) {
      const ModalityMask m = flags.mask.empty() ? c.jmel.mask : ModalityMask::parse(flags.mask);
      stage_train_jmel(c, m, &std::cerr);
      std::cerr << "model written to " << jmel_path(c, m) << "\n";
    } else if (train_fusion->parsed()) {
      const auto masks =
          flags.mask.empty() ? c.fusion_masks : std::vector<std::string>{flags.mask};
      for (const auto& m : masks) {
        stage_train_fusion(c, FeatureMask::parse(m));
        std::cerr << "model written to " << fusion_path(c, c.jmel.mask, FeatureMask::parse(m)) << "\n";
      }
    } else if (train_et->parsed()) {
      const auto masks =
          flags.mask.empty() ? c.extratrees_masks : std::vector<std::string>{flags.mask};
      for (const auto& m : masks) {
        stage_train_extratrees(c, FeatureMask::parse(m));
        std::cerr << "model written to " << extratrees_path(c, FeatureMask::parse(m)) << "\n";
      }
    } else if (eval->parsed()) {
      std::cout << results_text(stage_eval(c));
    } else if (ablate->parsed()) {
      std::cout << ablation_text(stage_ablate(c));
    } else if (stats->parsed()) {
      std::cout << stats_text(stage_stats(c));
    }
    return kOk;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {  // shape and I/O failures included
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  }
}
