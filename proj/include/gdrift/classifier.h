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

#ifndef GDRIFT_CLASSIFIER_H_
#define GDRIFT_CLASSIFIER_H_

// L2-regularised logistic regression over masked, min-max normalised feature
// rows, plus the ROC and threshold metrics the feature ablation relies on.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gdrift/attacks.h"

namespace gdrift {

// Labels are 1 (member) or 0.
using LabelVector = std::vector<int>;
using FeatureMatrix = std::vector<std::vector<double>>;

struct SolverOptions {
  double tolerance = 1e-8;  // on the gradient norm
  int max_iterations = 10000;
};

struct SolverResult {
  std::vector<double> weights;
  double bias = 0.0;
  double objective = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Mean logistic loss + lambda/2 * ||w||^2 (bias unpenalised).
double LogisticObjective(std::span<const std::vector<double>> x,
                         std::span<const int> y, std::span<const double> w,
                         double b, double lambda);

// Minimises LogisticObjective on already-normalised rows by full-batch
// descent along the (Levenberg-damped) Newton direction with Armijo
// backtracking.
SolverResult SolveLogistic(std::span<const std::vector<double>> x,
                           std::span<const int> y, double lambda,
                           const SolverOptions& options = {});

struct FitOptions {
  std::vector<double> lambda_grid = {0.0, 1e-4, 1e-3, 1e-2, 1e-1};
  int folds = 5;
  std::uint64_t seed = 0;
  SolverOptions solver;
};

struct LogRegModel {
  std::vector<double> weights;  // one per retained feature
  double bias = 0.0;
  double l2_lambda = 0.0;
  std::vector<bool> feature_mask;  // over the full input row
  MinMaxScaler scaler;             // over retained features, train statistics
  bool converged = true;           // false: iteration cap reached
  std::vector<double> cv_auc;      // mean fold AUC per lambda_grid entry
};

// Fits on raw rows: applies `mask` (empty means keep all), fits the min-max
// scaler on these rows, picks lambda by k-fold CV AUC (ties go to the larger
// lambda) and refits on all rows. Throws InputError with fewer than two
// samples per class.
LogRegModel Fit(std::span<const std::vector<double>> rows,
                std::span<const int> labels, std::vector<bool> mask,
                const FitOptions& options);

// w . f + b for a raw, unmasked row.
double DecisionFunction(const LogRegModel& model, std::span<const double> row);
// sigma(w . f + b). Throws ContractError when the row length differs from the
// mask length.
double PredictProba(const LogRegModel& model, std::span<const double> row);

struct RocCurve {
  std::vector<double> fpr;  // starts at 0, ends at 1, non-decreasing
  std::vector<double> tpr;
  // thresholds[i] is the score cut (predict member iff score >= cut) for
  // point i + 1.
  std::vector<double> thresholds;
};

struct RocResult {
  RocCurve curve;
  double auc = 0.0;
};

// Threshold sweep over distinct scores; AUC by the trapezoid rule evaluated
// in exact integer counts, so tied scores contribute one half. Throws
// InputError if either class is missing or sizes differ.
RocResult RocAuc(std::span<const double> scores, std::span<const int> labels);

// Largest TPR over ROC points whose FPR does not exceed `max_fpr`.
double TprAtFpr(const RocCurve& curve, double max_fpr);

struct ThresholdMetrics {
  double tpr = 0.0;
  double fpr = 0.0;
  double accuracy = 0.0;
};

// Predict member iff probability > threshold (strict).
ThresholdMetrics ComputeThresholdMetrics(std::span<const double> probabilities,
                                         std::span<const int> labels,
                                         double threshold);
ThresholdMetrics ComputeThresholdMetrics(const LogRegModel& model,
                                         std::span<const std::vector<double>> rows,
                                         std::span<const int> labels,
                                         double threshold);

// Threshold in {0} U {probabilities} with the highest accuracy; ties go to
// the smallest threshold.
double SelectThreshold(std::span<const double> probabilities,
                       std::span<const int> labels);

struct AblationSpec {
  std::string name;
  std::vector<bool> keep;  // over the seven drift features
};

// The thirteen named feature sets of the standard ablation table, starting
// with "all".
const std::vector<AblationSpec>& CanonicalAblations();

struct AblationRow {
  std::string name;
  double auc = 0.0;
};

// For each spec: fit on the train rows with that mask, report test AUC of the
// decision function.
std::vector<AblationRow> RunAblation(std::span<const std::vector<double>> train,
                                     std::span<const int> train_labels,
                                     std::span<const std::vector<double>> test,
                                     std::span<const int> test_labels,
                                     std::span<const AblationSpec> specs,
                                     const FitOptions& options);

}  // namespace gdrift

#endif  // GDRIFT_CLASSIFIER_H_
