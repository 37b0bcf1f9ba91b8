/* Copyright 2026 The Copsel Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Experiment runs: data sources, presets, evaluation reports and the files
// a run leaves behind. Column layouts are documented in docs/formats.md.

#ifndef COPSEL_EXPERIMENT_HPP_
#define COPSEL_EXPERIMENT_HPP_

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "copsel/config.hpp"
#include "copsel/evaluation.hpp"
#include "copsel/networks.hpp"
#include "copsel/synthetic.hpp"

namespace copsel {

// Binary-mode penalty used by the synthetic presets when no grid is given.
inline constexpr double kDefaultSyntheticLambda = 0.01;

enum class SourceKind { kSynthetic, kIdx, kCsv };

struct DataSource {
  SourceKind kind = SourceKind::kSynthetic;
  SyntheticSpec synthetic;
  std::string train_images, train_labels, test_images, test_labels;  // IDX
  std::string train_csv, test_csv;                                   // CSV
};

struct ExperimentConfig {
  std::string preset;  // informational
  TrainingConfig training;
  DataSource data;
  std::string out_dir = "run";
  bool export_masks = false;
  std::size_t top_m = 120;        // alpha-ranking export width
  std::size_t sigma_rows = 100;   // rows averaged into the Sigma export
  std::size_t monitor_rows = 2000;  // test rows scored in the per-epoch log
  // Binary mode: when non-empty, lambda is chosen on a validation split.
  std::vector<double> lambda_grid;
  double validation_fraction = 0.1;
  // A grid value is admissible when its validation accuracy is within this
  // many points of the best; the largest admissible lambda wins.
  double lambda_tolerance = 1.0;

  // Throws DomainError/ShapeError when the pieces do not fit together.
  void validate() const;
};

Json to_json(const ExperimentConfig& c);
ExperimentConfig experiment_config_from_json(const Json& j,
                                             ExperimentConfig base = {});

std::vector<std::string> preset_names();
// Throws DomainError for unknown names.
ExperimentConfig preset(const std::string& name);

struct LoadedData {
  Dataset train;
  Dataset test;
};
LoadedData load_data(const DataSource& source);

struct EvalReport {
  std::size_t n = 0;
  bool has_truth = false;
  SelectionMetrics selection;  // valid when has_truth
  double accuracy = 0.0;       // percent
  double mean_selected = 0.0;
};
// Deterministic inference (no sampling noise).
EvalReport evaluate(const Model& model, const Dataset& data);
Json to_json(const EvalReport& r);
// "n,tpr,fdr,accuracy,mean_selected"; tpr/fdr empty without ground truth.
std::string eval_csv_header();
std::string eval_csv_row(const EvalReport& r);

// Mean of the per-sample Sigma and R over the first `rows` rows of x. NOLA
// models give the identity.
struct SigmaExport {
  Tensor sigma;        // [d, d]
  Tensor correlation;  // [d, d]
};
SigmaExport mean_sigma(const Model& model, const Tensor& x, std::size_t rows);

void write_masks_csv(const Tensor& hard, const std::filesystem::path& path);
// Top-m feature indices (1-based) per row by decreasing alpha, ties to the
// lower index.
void write_ranking_csv(const Tensor& alpha, std::size_t m,
                       const std::filesystem::path& path);

struct LambdaTrial {
  double lambda = 0.0;
  double accuracy = 0.0;  // validation, percent
  double mean_selected = 0.0;
};
struct LambdaSearch {
  std::vector<LambdaTrial> trials;
  double chosen = 0.0;
};
// Trains one model per grid value on a seeded split of `train` and applies
// the tolerance rule. Deterministic in (config, train).
LambdaSearch select_lambda(const ExperimentConfig& config, const Dataset& train,
                           std::ostream* progress = nullptr);

struct RunArtifacts {
  std::filesystem::path config;
  std::filesystem::path log_csv;
  std::filesystem::path metrics_json;
  std::filesystem::path metrics_csv;
  std::filesystem::path checkpoint;
  std::filesystem::path sigma_csv;
  std::filesystem::path correlation_csv;
  std::filesystem::path masks_csv;        // empty unless export_masks
  std::filesystem::path lambda_csv;       // empty without a grid
  EvalReport test;
  Model model;
};

// Trains, evaluates on the test split and writes every artifact under
// config.out_dir. Outputs are bit-identical for identical configs.
RunArtifacts run_train(const ExperimentConfig& config,
                       std::ostream* progress = nullptr);
RunArtifacts run_train(const ExperimentConfig& config, const LoadedData& data,
                       std::ostream* progress = nullptr);

struct AblationRow {
  std::string variant;
  EvalReport test;
};
// Full method against its NOLA twin and, with `ranks`, low against full rank.
// Each variant runs under out_dir/<variant>.
std::vector<AblationRow> run_ablation(const ExperimentConfig& config, bool ranks,
                                      std::ostream* progress = nullptr);

// Statistical checks with their pass thresholds. `which` is "theorem1",
// "theorem2" or "copula"; missing parameters take these defaults:
//   theorem1  alpha=[1,2,3,4] k=2 t=0.01 n=100000 seed=1 max_tv=0.02
//   theorem2  alpha=[1,2,3,4] k=2 t=0.01 tau=1e4 n=10000 seed=1
//             min_match=0.999
//   copula    d=5 r12=0.8 n=100000 seed=78 min_p=0.01 max_corr_error=0.02
// The copula check uses loadings sqrt(r12/(1-r12)) on the first two
// coordinates and sigma=1, so R_12 = r12 and all other pairs are 0.
struct VerifyOutcome {
  Json report;
  bool passed = false;
};
VerifyOutcome run_verify(const std::string& which, const Json& params = Json::object());

}  // namespace copsel

#endif  // COPSEL_EXPERIMENT_HPP_
