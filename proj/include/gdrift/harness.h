// Copyright 2026 The gdrift Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef GDRIFT_HARNESS_H_
#define GDRIFT_HARNESS_H_

// End-to-end experiment stages. Every stage reads and writes files under
// ExperimentConfig::out_dir and records what it wrote in manifest.json; every
// stage refuses an input whose SHA-256 differs from its manifest entry.
//
// Files in out_dir:
//   dataset.jsonl          gen-data     samples with their split
//   checkpoint.bin         train        model parameters
//   train_log.json         train        per-epoch loss, success flag
//   features.csv           extract      G-Drift 7-vectors in dataset order
//   scores.csv             extract      baseline scores in dataset order
//   extract_summary.json   extract      checksums and identity residuals
//   metrics.json           evaluate     per-attack AUC, TPR@FPR, threshold
//   comparison.csv         evaluate     attack,auc table
//   roc_<attack>.csv       evaluate     test ROC points
//   ablation.csv/.json     ablate       feature-set ablation AUCs
//   drift_report.json      drift-report per-class drift statistics
//   drift_cdf.csv          drift-report empirical CDF points
//   consistency.csv/.json  consistency  paraphrase drift table
// Reports carry no timestamps, so identical configs give identical bytes.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "gdrift/attacks.h"
#include "gdrift/classifier.h"
#include "gdrift/corpus.h"
#include "gdrift/model.h"

namespace gdrift {

inline constexpr int kConfigVersion = 1;
inline constexpr std::string_view kToolVersion = "gdrift 1.0.0";

struct ExperimentConfig {
  int config_version = kConfigVersion;

  // Corpus.
  std::uint64_t corpus_seed = 0;
  int n_facts = 1000;
  int n_members = 500;
  int n_nonmembers = 500;
  double counterfactual_fraction = 0.5;

  // Splits.
  std::uint64_t split_seed = 0;
  double train_fraction = 0.7;
  double validation_fraction = 0.1;
  double test_fraction = 0.2;

  // Model.
  std::uint64_t model_seed = 0;
  int model_dim = 64;
  int n_layers = 2;
  int n_heads = 4;
  int ffn_dim = 256;
  int max_seq_len = 32;

  // Fine-tuning.
  std::uint64_t train_seed = 0;
  int epochs = 30;
  double lr = 0.01;
  double loss_threshold = 0.5;
  // Fine-tune only on train-split members instead of every member.
  bool train_split_only = false;

  // Attacks.
  double eta = kDefaultEta;
  std::uint64_t probe_seed = 0;
  std::vector<double> k_percents = {20.0};
  int n_neighbours = 10;
  std::uint64_t neighbour_seed = 0;

  // Classifier.
  std::vector<double> lambda_grid = {0.0, 1e-4, 1e-3, 1e-2, 1e-1};
  int cv_folds = 5;
  std::uint64_t cv_seed = 0;
  std::vector<double> fpr_grid = {0.01, 0.05, 0.1, 0.2};

  // Null control: permute labels within each split before fitting.
  bool shuffle_labels = false;
  std::uint64_t shuffle_seed = 0;

  // Paraphrase consistency.
  std::vector<int> consistency_fact_ids;  // empty: first member facts
  int consistency_n_facts = 20;
  int consistency_k = 3;

  std::filesystem::path out_dir = "gdrift_out";

  // Sets every seed field to `seed`.
  void SetAllSeeds(std::uint64_t seed);
  // Throws InputError naming the first invalid field.
  void Validate() const;
  ModelConfig Model(int vocab_size) const;
  SplitFractions Fractions() const;
  FitOptions Classifier() const;
};

// Canonical "key = value" text, one key per line in a fixed order. Lists are
// comma separated. The output directory is not part of the text.
std::string ConfigToText(const ExperimentConfig& config);
// Parses ConfigToText-style text; unknown keys and a config_version other
// than kConfigVersion are InputErrors. Keys not present keep `base` values.
ExperimentConfig ConfigFromText(std::string_view text,
                                ExperimentConfig base = {});
// SHA-256 of ConfigToText.
std::string ConfigHash(const ExperimentConfig& config);

struct ArtifactRecord {
  std::string path;  // relative to out_dir
  std::string sha256;
  std::string stage;
  std::string config_hash;
  std::string created;  // UTC, ISO 8601
};

struct RunManifest {
  std::string tool_version{kToolVersion};
  std::map<std::string, ArtifactRecord> artifacts;  // by file name

  static RunManifest Load(const std::filesystem::path& out_dir);
  void Save(const std::filesystem::path& out_dir) const;
  // Hashes out_dir/name and records it.
  void Record(const std::filesystem::path& out_dir, const std::string& name,
              const std::string& stage, const std::string& config_hash);
  // Throws IntegrityError when `name` is not recorded or no longer matches its
  // recorded hash.
  void Verify(const std::filesystem::path& out_dir,
              const std::string& name) const;
};

// Stage results, also persisted as described above.
struct GenDataResult {
  int n_samples = 0;
  std::array<int, 3> split_sizes{};  // train, validation, test
  int vocab_size = 0;
};

struct TrainResult {
  int n_examples = 0;
  int n_nonmember_examples = 0;
  std::vector<double> epoch_loss;
  double final_loss = 0.0;
  bool success = false;  // final_loss < loss_threshold
};

struct ExtractResult {
  int n_samples = 0;
  std::string checksum_before;
  std::string checksum_after;
  double max_projection_residual = 0.0;
  std::vector<std::string> attacks;  // baseline score columns
};

struct AttackMetrics {
  std::string attack;
  double auc = 0.0;            // test AUC of the fitted classifier
  double raw_auc = 0.0;        // test AUC of the raw oriented score (baselines)
  double threshold = 0.0;      // chosen on validation
  ThresholdMetrics validation;
  ThresholdMetrics test;
  std::vector<double> tpr_at_fpr;  // aligned with fpr_grid
  double l2_lambda = 0.0;
  bool converged = true;
  RocCurve roc;
};

struct EvalReport {
  std::vector<AttackMetrics> attacks;  // "gdrift" first
  bool shuffled_labels = false;
  const AttackMetrics& Find(std::string_view attack) const;
};

struct DriftClassStats {
  double mean = 0.0;
  double stddev = 0.0;
  double median = 0.0;
  int count = 0;
};

struct DriftQuantity {
  std::string name;  // loss_delta, logit_delta, proj_delta, abs_proj_delta,
                     // hidden_drift
  DriftClassStats member;
  DriftClassStats nonmember;
};

struct DriftReport {
  std::vector<DriftQuantity> quantities;
};

struct ConsistencyRow {
  int fact_id = 0;
  int template_id = 0;
  std::string prompt;
  std::string answer;
  Label label = Label::kMember;
  double alpha_before = 0.0;
  double alpha_after = 0.0;
  double abs_delta_alpha = 0.0;
};

struct ConsistencyFact {
  int fact_id = 0;
  double member_std = 0.0;
  double nonmember_std = 0.0;
};

struct ConsistencyReport {
  std::vector<ConsistencyRow> rows;
  std::vector<ConsistencyFact> facts;
  double mean_member_std = 0.0;
  double mean_nonmember_std = 0.0;
  int facts_member_more_stable = 0;
};

GenDataResult GenData(const ExperimentConfig& config);
// Resume continues from the epoch count stored in an existing checkpoint up
// to config.epochs. Throws TrainingError on divergence after writing the
// partial log.
TrainResult TrainStage(const ExperimentConfig& config, bool resume = false);
ExtractResult Extract(const ExperimentConfig& config);
EvalReport Evaluate(const ExperimentConfig& config);
std::vector<AblationRow> Ablate(const ExperimentConfig& config);
DriftReport MakeDriftReport(const ExperimentConfig& config);
ConsistencyReport Consistency(const ExperimentConfig& config);
// gen-data, train, extract, evaluate, ablate, drift-report, consistency.
EvalReport RunAll(const ExperimentConfig& config);

// Report formatting, exposed for layout tests.
std::string FormatDriftReport(const DriftReport& report);
std::string FormatConsistencyCsv(const ConsistencyReport& report);

// Name of the metrics file Evaluate writes for this config.
std::string MetricsFileName(const ExperimentConfig& config);

}  // namespace gdrift

#endif  // GDRIFT_HARNESS_H_
